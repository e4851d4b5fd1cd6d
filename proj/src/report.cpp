#include "scopelab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace scopelab {

namespace {

using nlohmann::json;

const std::vector<std::string> kMetricColumns = {
    "mean_reward", "entropy",    "keep_ratio", "near_miss_1",         "near_miss_2",          "near_miss_3",
    "distinct_1",  "distinct_2", "distinct_4", "one_minus_self_bleu", "one_minus_self_rouge", "div_score",
    "rectified_count"};

std::optional<double> column_value(const MetricsRow& r, const std::string& name) {
    if (name == "mean_reward") return r.mean_reward;
    if (name == "entropy") return r.entropy;
    if (name == "keep_ratio") return r.keep_ratio;
    if (name == "near_miss_1") return r.near_miss_1;
    if (name == "near_miss_2") return r.near_miss_2;
    if (name == "near_miss_3") return r.near_miss_3;
    if (name == "distinct_1") return r.distinct_1;
    if (name == "distinct_2") return r.distinct_2;
    if (name == "distinct_4") return r.distinct_4;
    if (name == "one_minus_self_bleu") return r.one_minus_self_bleu;
    if (name == "one_minus_self_rouge") return r.one_minus_self_rouge;
    if (name == "div_score") return r.div_score;
    if (name == "rectified_count") return static_cast<double>(r.rectified_count);
    throw std::invalid_argument("unknown metric column " + name);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::string short_num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

std::string coord(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Series {
    std::string name;
    std::vector<std::optional<double>> mean, std;
};

}  // namespace

const std::vector<std::string> kChartMetrics = {"mean_reward", "entropy", "keep_ratio", "near_miss_1", "distinct_4"};

void ExperimentSpec::validate() const {
    if (arms.size() < 2) throw std::invalid_argument("compare needs at least two labeled configs");
    if (seeds.empty()) throw std::invalid_argument("compare needs at least one seed");
    std::set<std::string> labels;
    for (const auto& a : arms) {
        if (a.label.empty()) throw std::invalid_argument("empty arm label");
        if (!labels.insert(a.label).second) throw std::invalid_argument("duplicate label '" + a.label + "'");
        a.config.validate();
    }
    std::set<std::uint64_t> s;
    for (auto seed : seeds)
        if (!s.insert(seed).second) throw std::invalid_argument("seed collision: " + std::to_string(seed));
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
}

std::string merged_metrics_csv(const std::vector<std::string>& labels, const MetricsGrid& grid) {
    if (labels.size() != grid.size()) throw std::invalid_argument("merged_metrics_csv: label count mismatch");
    std::size_t rows = 0;
    for (const auto& arm : grid) {
        for (const auto& run : arm) rows = std::max(rows, run.size());
    }
    std::ostringstream out;
    out << "update";
    for (std::size_t a = 0; a < labels.size(); ++a)
        for (const auto& m : kMetricColumns) {
            out << ',' << labels[a] << '_' << m << "_mean";
            if (grid[a].size() >= 2) out << ',' << labels[a] << '_' << m << "_std";
        }
    out << '\n';
    for (std::size_t i = 0; i < rows; ++i) {
        out << i + 1;
        for (std::size_t a = 0; a < labels.size(); ++a) {
            for (const auto& m : kMetricColumns) {
                std::vector<double> vals;
                for (const auto& run : grid[a])
                    if (i < run.size())
                        if (auto v = column_value(run[i], m)) vals.push_back(*v);
                double mean = 0.0, ss = 0.0;
                for (double v : vals) mean += v;
                if (!vals.empty()) mean /= static_cast<double>(vals.size());
                for (double v : vals) ss += (v - mean) * (v - mean);
                out << ',';
                if (!vals.empty()) out << format_real(mean);
                if (grid[a].size() >= 2) {
                    out << ',';
                    if (!vals.empty()) out << format_real(std::sqrt(ss / static_cast<double>(vals.size())));
                }
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string render_chart_svg(const std::string& csv_text, const std::string& metric) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("chart: empty CSV");
    const std::vector<std::string> header = split(line, ',');
    if (header.empty() || header[0] != "update") throw std::invalid_argument("chart: first column must be 'update'");

    std::vector<Series> series;
    std::vector<std::size_t> mean_col, std_col;
    const std::string mean_suffix = "_" + metric + "_mean";
    for (std::size_t c = 1; c < header.size(); ++c) {
        const std::string& h = header[c];
        std::string name;
        if (h == metric) name = metric;
        else if (h.size() > mean_suffix.size() && h.ends_with(mean_suffix))
            name = h.substr(0, h.size() - mean_suffix.size());
        else continue;
        series.push_back({name, {}, {}});
        mean_col.push_back(c);
        const std::string std_name = name + "_" + metric + "_std";
        const auto it = std::find(header.begin(), header.end(), std_name);
        std_col.push_back(it == header.end() ? 0 : static_cast<std::size_t>(it - header.begin()));
    }
    if (series.empty()) throw std::invalid_argument("chart: no column for metric " + metric);

    std::vector<double> xs;
    const auto parse = [](const std::string& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        return std::stod(s);
    };
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) throw std::invalid_argument("chart: ragged CSV row");
        xs.push_back(std::stod(cells[0]));
        for (std::size_t s = 0; s < series.size(); ++s) {
            series[s].mean.push_back(parse(cells[mean_col[s]]));
            series[s].std.push_back(std_col[s] ? parse(cells[std_col[s]]) : std::nullopt);
        }
    }

    double lo = INFINITY, hi = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.mean.size(); ++i) {
            if (!s.mean[i]) continue;
            const double sd = s.std[i].value_or(0.0);
            lo = std::min(lo, *s.mean[i] - sd);
            hi = std::max(hi, *s.mean[i] + sd);
        }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    const double x0 = xs.empty() ? 0.0 : xs.front();
    const double x1 = xs.empty() || xs.back() == x0 ? x0 + 1.0 : xs.back();

    constexpr double W = 720, H = 420, L = 70, R = 160, T = 40, B = 50;
    const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    const auto py = [&](double y) { return H - B - (y - lo) / (hi - lo) * (H - T - B); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
        << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << coord(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << metric
        << "</text>\n";
    svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = lo + (hi - lo) * i / 4.0;
        svg << "<line x1=\"" << L - 4 << "\" y1=\"" << coord(py(y)) << "\" x2=\"" << W - R << "\" y2=\""
            << coord(py(y)) << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << L - 8 << "\" y=\"" << coord(py(y) + 4) << "\" text-anchor=\"end\">" << short_num(y)
            << "</text>\n";
        const double x = x0 + (x1 - x0) * i / 4.0;
        svg << "<text x=\"" << coord(px(x)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
            << short_num(x) << "</text>\n";
    }
    svg << "<text x=\"" << coord((L + W - R) / 2) << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">update</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        const Series& sr = series[s];
        // +-std band
        std::string upper, lower;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (!sr.mean[i] || !sr.std[i]) continue;
            upper += coord(px(xs[i])) + "," + coord(py(*sr.mean[i] + *sr.std[i])) + " ";
        }
        for (std::size_t i = xs.size(); i-- > 0;) {
            if (!sr.mean[i] || !sr.std[i]) continue;
            lower += coord(px(xs[i])) + "," + coord(py(*sr.mean[i] - *sr.std[i])) + " ";
        }
        if (!upper.empty())
            svg << "<polygon points=\"" << upper << lower << "\" fill=\"" << color
                << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
        std::string pts;
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (sr.mean[i]) pts += coord(px(xs[i])) + "," + coord(py(*sr.mean[i])) + " ";
        if (!pts.empty())
            svg << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.5\"/>\n";
        const double ly = T + 10 + 18.0 * static_cast<double>(s);
        svg << "<line x1=\"" << W - R + 12 << "\" y1=\"" << coord(ly) << "\" x2=\"" << W - R + 32 << "\" y2=\""
            << coord(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << W - R + 38 << "\" y=\"" << coord(ly + 4) << "\">" << sr.name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

ComparisonReport compare(const ExperimentSpec& spec) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(spec.out, ec);
    if (ec || !std::filesystem::is_directory(spec.out))
        throw std::runtime_error("cannot create output directory " + spec.out.string());

    ComparisonReport rep;
    const std::size_t n_arms = spec.arms.size(), n_seeds = spec.seeds.size();
    rep.summaries.assign(n_arms, std::vector<RunSummary>(n_seeds));
    rep.metrics.assign(n_arms, std::vector<std::vector<MetricsRow>>(n_seeds));
    for (const auto& a : spec.arms) rep.labels.push_back(a.label);

    const std::size_t total = n_arms * n_seeds;
    std::vector<std::exception_ptr> errors(total);
    const auto work = [&](std::size_t job) {
        const std::size_t a = job / n_seeds, s = job % n_seeds;
        try {
            TrainConfig cfg = spec.arms[a].config;
            cfg.seed = spec.seeds[s];
            const auto dir = spec.out / spec.arms[a].label / ("seed-" + std::to_string(cfg.seed));
            rep.summaries[a][s] = run(cfg, dir);
            // Read back what was written so the report reflects the files on disk.
            std::ifstream f(dir / "metrics.csv");
            std::string line;
            std::getline(f, line);
            while (std::getline(f, line)) {
                if (line.empty()) continue;
                const auto cells = split(line, ',');
                MetricsRow r;
                const auto opt = [&](std::size_t i) -> std::optional<double> {
                    if (cells[i].empty()) return std::nullopt;
                    return std::stod(cells[i]);
                };
                r.update = std::stoul(cells[0]);
                r.mean_reward = std::stod(cells[1]);
                r.entropy = std::stod(cells[2]);
                r.keep_ratio = opt(3);
                r.near_miss_1 = opt(4);
                r.near_miss_2 = opt(5);
                r.near_miss_3 = opt(6);
                r.distinct_1 = opt(7);
                r.distinct_2 = opt(8);
                r.distinct_4 = opt(9);
                r.one_minus_self_bleu = opt(10);
                r.one_minus_self_rouge = opt(11);
                r.div_score = opt(12);
                r.rectified_count = std::stoul(cells[13]);
                rep.metrics[a][s].push_back(r);
            }
        } catch (...) {
            errors[job] = std::current_exception();
        }
    };
    const std::size_t jobs = std::min(spec.jobs, total);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t j = w; j < total; j += jobs) work(j);
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    rep.merged_csv = merged_metrics_csv(rep.labels, rep.metrics);
    const auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream f(spec.out / name);
        if (!f) throw std::runtime_error("cannot write " + (spec.out / name).string());
        f << text;
    };
    write("merged_metrics.csv", rep.merged_csv);
    for (const auto& m : kChartMetrics) write(m + ".svg", render_chart_svg(rep.merged_csv, m));

    json arms = json::array();
    for (std::size_t a = 0; a < n_arms; ++a) {
        json runs = json::array();
        double reward = 0.0;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            runs.push_back(json::parse(summary_to_json(rep.summaries[a][s], [&] {
                TrainConfig c = spec.arms[a].config;
                c.seed = spec.seeds[s];
                return c;
            }())));
            reward += rep.summaries[a][s].final_quartile_reward;
        }
        arms.push_back({{"label", spec.arms[a].label},
                        {"algorithm", to_string(spec.arms[a].config.algorithm)},
                        {"mean_final_quartile_reward", reward / static_cast<double>(n_seeds)},
                        {"runs", runs}});
    }
    write("summary.json", json{{"seeds", spec.seeds}, {"arms", arms}}.dump(2) + "\n");
    return rep;
}

}  // namespace scopelab

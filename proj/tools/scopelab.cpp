// scopelab: run, compare, diversity_eval, gradcheck, validate, chart.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "scopelab/config.hpp"
#include "scopelab/objective.hpp"
#include "scopelab/report.hpp"
#include "scopelab/trainer.hpp"

using namespace scopelab;

namespace {

// Defaults <- config file <- SCOPELAB_* environment <- command-line flags.
TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
    TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
    apply_env_overrides(cfg, scopelab_environment());
    for (const auto& s : sets) {
        const auto eq = s.find('='), dot = s.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw std::invalid_argument("--set expects section.key=value, got '" + s + "'");
        set_config_value(cfg, s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
    }
    return cfg;
}

Algorithm parse_algo(const std::string& s) {
    if (s == "grpo") return Algorithm::kGrpo;
    if (s == "scope") return Algorithm::kScope;
    throw std::invalid_argument("unknown algorithm '" + s + "'");
}

// "0,1,2" or "0-4" or a mix ("0-2,7").
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        const auto dash = part.find('-');
        if (dash == std::string::npos) {
            out.push_back(std::stoull(part));
        } else {
            const auto lo = std::stoull(part.substr(0, dash)), hi = std::stoull(part.substr(dash + 1));
            if (hi < lo) throw std::invalid_argument("bad seed range '" + part + "'");
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        }
    }
    if (out.empty()) throw std::invalid_argument("no seeds given");
    return out;
}

void print_percentiles(const char* name, const std::optional<Percentiles>& p) {
    if (p) std::printf("%-22s %.4f [%.4f, %.4f]\n", name, p->p50, p->p10, p->p90);
    else std::printf("%-22s n/a\n", name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SCOPE rollout-recycling laboratory"};
    app.require_subcommand(1);

    // run
    auto* run_cmd = app.add_subcommand("run", "Train one policy and write its artifacts");
    std::string run_config, run_out, run_algo;
    std::vector<std::string> run_sets;
    std::optional<std::uint64_t> run_seed;
    std::optional<std::size_t> run_updates;
    run_cmd->add_option("--config", run_config, "Config file")->check(CLI::ExistingFile);
    run_cmd->add_option("--seed", run_seed, "Training seed");
    run_cmd->add_option("--algo", run_algo, "grpo or scope")->check(CLI::IsMember({"grpo", "scope"}));
    run_cmd->add_option("--updates", run_updates, "Number of updates");
    run_cmd->add_option("--set", run_sets, "Override section.key=value");
    run_cmd->add_option("--out", run_out, "Output directory")->required();

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "Run labeled configs over seeds and chart them");
    std::string cmp_config, cmp_out, cmp_seeds = "0-4", cmp_algos;
    std::vector<std::string> cmp_arms, cmp_sets;
    std::optional<std::size_t> cmp_updates;
    std::size_t cmp_jobs = 1;
    cmp_cmd->add_option("--config", cmp_config, "Base config for --algos arms")->check(CLI::ExistingFile);
    cmp_cmd->add_option("--algos", cmp_algos, "Comma list of algorithms, one arm each (default grpo,scope)");
    cmp_cmd->add_option("--arm", cmp_arms, "label=config-file (repeatable)");
    cmp_cmd->add_option("--seeds", cmp_seeds, "Seeds, e.g. 0-4 or 1,5,9");
    cmp_cmd->add_option("--updates", cmp_updates, "Number of updates for every arm");
    cmp_cmd->add_option("--set", cmp_sets, "Override section.key=value for every arm");
    cmp_cmd->add_option("--jobs", cmp_jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    cmp_cmd->add_option("--out", cmp_out, "Output directory")->required();

    // diversity_eval
    auto* div_cmd = app.add_subcommand("diversity_eval", "p10/p50/p90 diversity table from rollout JSONL");
    std::string div_input, div_json;
    div_cmd->add_option("input", div_input, "Rollout JSONL (one line per sample)")->required()->check(CLI::ExistingFile);
    div_cmd->add_option("--json", div_json, "Also write the table as JSON");

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the objective gradient");
    std::size_t gc_instances = 100;
    double gc_h = 1e-5, gc_tol = 1e-4;
    std::uint64_t gc_seed = 0;
    std::string gc_mode = "detached";
    gc_cmd->add_option("--instances", gc_instances, "Random instances");
    gc_cmd->add_option("--step", gc_h, "Finite-difference step h")->check(CLI::Range(1e-6, 1e-4));
    gc_cmd->add_option("--tolerance", gc_tol, "Maximum accepted relative error");
    gc_cmd->add_option("--seed", gc_seed, "Seed");
    gc_cmd->add_option("--shaping-grad", gc_mode, "detached or full")->check(CLI::IsMember({"detached", "full"}));

    // validate
    auto* val_cmd = app.add_subcommand("validate", "Validate a config file and print it normalized");
    std::string val_config;
    val_cmd->add_option("config", val_config, "Config file")->required();

    // chart
    auto* chart_cmd = app.add_subcommand("chart", "Render one metric of a metrics CSV as SVG");
    std::string chart_csv, chart_metric, chart_out;
    chart_cmd->add_option("--csv", chart_csv, "metrics.csv or merged_metrics.csv")->required()->check(CLI::ExistingFile);
    chart_cmd->add_option("--metric", chart_metric, "Column to plot")->required();
    chart_cmd->add_option("--out", chart_out, "SVG path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            TrainConfig cfg = resolve_config(run_config, run_sets);
            if (run_seed) cfg.seed = *run_seed;
            if (!run_algo.empty()) cfg.algorithm = parse_algo(run_algo);
            if (run_updates) cfg.updates = *run_updates;
            cfg.validate();
            const RunSummary s = run(cfg, run_out);
            std::printf("%s seed %llu: %zu updates, final-quartile reward %.4f, rectifications %zu\n",
                        to_string(cfg.algorithm), static_cast<unsigned long long>(cfg.seed), s.rows,
                        s.final_quartile_reward, s.rectifications);
            std::printf("artifacts in %s\n", run_out.c_str());
            return 0;
        }
        if (*cmp_cmd) {
            ExperimentSpec spec;
            spec.out = cmp_out;
            spec.seeds = parse_seeds(cmp_seeds);
            spec.jobs = cmp_jobs;
            const auto finish = [&](TrainConfig c) {
                if (cmp_updates) c.updates = *cmp_updates;
                return c;
            };
            for (const auto& a : cmp_arms) {
                const auto eq = a.find('=');
                if (eq == std::string::npos) throw std::invalid_argument("--arm expects label=config-file");
                spec.arms.push_back({a.substr(0, eq), finish(resolve_config(a.substr(eq + 1), cmp_sets))});
            }
            if (cmp_arms.empty() && cmp_algos.empty()) cmp_algos = "grpo,scope";
            std::stringstream ss(cmp_algos);
            for (std::string algo; std::getline(ss, algo, ',');) {
                TrainConfig c = resolve_config(cmp_config, cmp_sets);
                c.algorithm = parse_algo(algo);
                spec.arms.push_back({algo, finish(c)});
            }
            const ComparisonReport rep = compare(spec);
            for (std::size_t a = 0; a < rep.labels.size(); ++a) {
                double mean = 0.0;
                for (const auto& s : rep.summaries[a]) mean += s.final_quartile_reward;
                mean /= static_cast<double>(rep.summaries[a].size());
                std::printf("%-12s mean final-quartile reward %.4f over %zu seeds\n", rep.labels[a].c_str(), mean,
                            rep.summaries[a].size());
            }
            std::printf("report in %s\n", cmp_out.c_str());
            return 0;
        }
        if (*div_cmd) {
            std::ifstream in(div_input);
            const DiversityTable t = diversity_table(read_rollouts_jsonl(in));
            std::printf("prompts %zu, samples per prompt %zu\n", t.prompts, t.samples_per_prompt);
            std::printf("%-22s %s\n", "metric", "p50 [p10, p90]");
            print_percentiles("distinct-1", t.distinct_1);
            print_percentiles("distinct-2", t.distinct_2);
            print_percentiles("distinct-4", t.distinct_4);
            print_percentiles("1-self-BLEU", t.one_minus_self_bleu);
            print_percentiles("1-self-ROUGE-L", t.one_minus_self_rouge);
            print_percentiles("div-score", t.div_score);
            std::printf("%-22s %.4f\n", "pass@1", t.pass_at_1);
            std::printf("pass@%-17zu %.4f\n", t.samples_per_prompt, t.pass_at_k);
            if (!div_json.empty()) {
                const auto pj = [](const std::optional<Percentiles>& p) -> nlohmann::json {
                    if (!p) return nullptr;
                    return {{"p10", p->p10}, {"p50", p->p50}, {"p90", p->p90}};
                };
                nlohmann::json j{{"prompts", t.prompts},
                                 {"samples_per_prompt", t.samples_per_prompt},
                                 {"distinct_1", pj(t.distinct_1)},
                                 {"distinct_2", pj(t.distinct_2)},
                                 {"distinct_4", pj(t.distinct_4)},
                                 {"one_minus_self_bleu", pj(t.one_minus_self_bleu)},
                                 {"one_minus_self_rouge", pj(t.one_minus_self_rouge)},
                                 {"div_score", pj(t.div_score)},
                                 {"pass_at_1", t.pass_at_1},
                                 {"pass_at_k", t.pass_at_k}};
                std::ofstream(div_json) << j.dump(2) << '\n';
            }
            return 0;
        }
        if (*gc_cmd) {
            ObjectiveConfig oc;
            oc.shaping_grad = gc_mode == "full" ? ShapingGrad::kFull : ShapingGrad::kDetached;
            const RandomizedGradCheck r = randomized_gradient_check(gc_instances, gc_h, gc_seed, oc);
            std::printf("instances %zu, coordinates checked %zu, skipped near clip kinks %zu\n", r.instances,
                        r.checked, r.skipped_near_kink);
            std::printf("max relative error %.3e (tolerance %.1e)\n", r.max_relative_error, gc_tol);
            return r.max_relative_error < gc_tol ? 0 : 1;
        }
        if (*val_cmd) {
            TrainConfig cfg = load_config(val_config);
            std::cout << format_config(cfg);
            return 0;
        }
        if (*chart_cmd) {
            std::ifstream in(chart_csv);
            std::stringstream buf;
            buf << in.rdbuf();
            const std::string svg = render_chart_svg(buf.str(), chart_metric);
            if (chart_out.empty()) std::cout << svg;
            else std::ofstream(chart_out) << svg;
            return 0;
        }
    } catch (const ConfigError& e) {
        for (const auto& d : e.diagnostics()) std::fprintf(stderr, "error: %s\n", d.to_string().c_str());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

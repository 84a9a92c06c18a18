#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bdlab/pipeline.hpp"
#include "bdlab/report.hpp"

using namespace bdlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "bdlab 0.1.0";

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    int verbosity = 0;
};

ExperimentConfig load_cfg(const CommonOpts& opts) {
    if (opts.config_path.empty()) throw ValidationError("--config is required");
    return load_experiment_config(opts.config_path, opts.overrides);
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "experiment config JSON");
    cmd->add_option("-D,--set", opts.overrides,
                    "config override as dotted.key=value (repeatable)");
    cmd->add_flag("-v,--verbose", opts.verbosity, "more progress output");
}

std::uint64_t pick_seed(const ExperimentConfig& cfg, std::int64_t seed_flag) {
    if (seed_flag >= 0) return static_cast<std::uint64_t>(seed_flag);
    return cfg.seeds.front();
}

json fraction_json(const Fraction& f) {
    return json{{"num", f.num}, {"den", f.den}, {"value", f.value()}};
}

void print_cells(const std::vector<CellOutcome>& outcomes) {
    for (const CellOutcome& cell : outcomes) {
        if (cell.result) {
            std::printf("%s  dataset=%s attack=%s strategy=%s rho=%s  asr=%.3f cacc=%.3f\n",
                        cell.result->hash.c_str(), cell.cfg.dataset.name.c_str(),
                        cell.cfg.trigger.attack_name().c_str(),
                        to_string(cell.cfg.strategy).c_str(), json(cell.cfg.rho).dump().c_str(),
                        cell.result->mean_asr, cell.result->mean_cacc);
        } else {
            std::fprintf(stderr, "FAILED %s strategy=%s rho=%s: %s\n",
                         config_hash(cell.cfg).c_str(), to_string(cell.cfg.strategy).c_str(),
                         json(cell.cfg.rho).dump().c_str(), cell.error.c_str());
        }
    }
}

int batch_exit_code(const std::vector<CellOutcome>& outcomes) {
    bool any_ok = false, any_fail = false;
    for (const CellOutcome& cell : outcomes) {
        (cell.result ? any_ok : any_fail) = true;
    }
    if (!any_ok) return 3;
    if (any_fail) std::fprintf(stderr, "warning: some cells failed; see errors.log\n");
    return 0;
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

void write_summary_md(const std::vector<CellOutcome>& outcomes, const fs::path& path) {
    std::vector<ExperimentResult> results;
    for (const CellOutcome& cell : outcomes) {
        if (cell.result) results.push_back(*cell.result);
    }
    SummaryTable table;
    try {
        table = summarize_wins(results);
    } catch (const ValidationError&) {
        return;  // incomplete strategy coverage; report can still be rendered later
    }
    std::string md = "# Strategy summary (" + std::to_string(table.configurations) +
                     " configurations)\n\n"
                     "| strategy | avg ASR | improvement vs random | wins |\n"
                     "|---|---|---|---|\n";
    for (const SummaryRow& row : table.rows) {
        md += "| " + to_string(row.strategy) + " | " + fmt3(row.avg_asr) + " | " +
              (row.strategy == Strategy::Random ? std::string("-")
                                                : fmt3(row.improvement_vs_random)) +
              " | " + std::to_string(row.wins) + " |\n";
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << md;
}

void write_transfer_md(const std::vector<CellOutcome>& outcomes, const fs::path& path) {
    std::vector<std::string> surr_order, vict_order;
    std::map<std::pair<std::string, std::string>, double> asr;
    for (const CellOutcome& cell : outcomes) {
        const std::string s = cell.cfg.surrogate.name, v = cell.cfg.victim.name;
        if (std::find(surr_order.begin(), surr_order.end(), s) == surr_order.end()) {
            surr_order.push_back(s);
        }
        if (std::find(vict_order.begin(), vict_order.end(), v) == vict_order.end()) {
            vict_order.push_back(v);
        }
        if (cell.result) asr[{s, v}] = cell.result->mean_asr;
    }
    std::string md = "# Transfer matrix (mean ASR; rows = surrogate, columns = victim)\n\n|  |";
    for (const auto& v : vict_order) md += " " + v + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < vict_order.size(); ++i) md += "---|";
    md += "\n";
    for (const auto& s : surr_order) {
        md += "| " + s + " |";
        for (const auto& v : vict_order) {
            auto it = asr.find({s, v});
            md += " " + (it != asr.end() ? fmt3(it->second) : std::string("failed")) + " |";
        }
        md += "\n";
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << md;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale lab for clean-label textual backdoor attacks"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.footer(
        "Config schema (JSON; every field optional, shown with defaults; also shipped as\n"
        "docs/config_schema.json):\n" +
        config_schema().dump(2));

    CommonOpts opts;
    std::string out_dir = "results";
    std::string ledger_override;
    std::int64_t seed_flag = -1;
    int jobs = 1;

    // ---- stats
    auto* cmd_stats = app.add_subcommand("stats", "corpus statistics for a JSONL dataset");
    std::string stats_data;
    int stats_classes = 2;
    TokenizerConfig stats_tok;
    bool keep_punct = false, no_lower = false;
    cmd_stats->add_option("--data", stats_data, "dataset JSONL path")->required();
    cmd_stats->add_option("--classes", stats_classes, "number of classes");
    cmd_stats->add_option("--ngram-max", stats_tok.ngram_max, "1 or 2");
    cmd_stats->add_flag("--keep-punct", keep_punct, "do not split punctuation");
    cmd_stats->add_flag("--no-lowercase", no_lower, "keep original case");

    // ---- staged commands
    auto* cmd_surr = app.add_subcommand("train-surrogate", "train the surrogate on clean data");
    std::string out_file;
    add_common(cmd_surr, opts);
    cmd_surr->add_option("-o,--out", out_file, "output model JSON")->required();
    cmd_surr->add_option("--seed", seed_flag, "run seed (default: first config seed)");

    auto* cmd_score = app.add_subcommand("score", "score the target pool with a surrogate");
    std::string model_path, scores_path, selection_path, data_path;
    add_common(cmd_score, opts);
    cmd_score->add_option("--model", model_path, "surrogate model JSON")->required();
    cmd_score->add_option("-o,--out", out_file, "output scores JSON")->required();

    auto* cmd_select = app.add_subcommand("select", "pick the poison set from scores");
    std::string sel_strategy;
    double sel_rho = -1.0;
    bool sel_shortfall = false;
    add_common(cmd_select, opts);
    cmd_select->add_option("--scores", scores_path, "scores JSON from `score`")->required();
    cmd_select->add_option("-o,--out", out_file, "output selection JSON")->required();
    cmd_select->add_option("--strategy", sel_strategy, "random|minimum|above50|below50");
    cmd_select->add_option("--rho", sel_rho, "poison rate in (0,1]");
    cmd_select->add_flag("--allow-shortfall", sel_shortfall,
                         "take the whole eligible pool when it is smaller than the budget");
    cmd_select->add_option("--seed", seed_flag, "run seed (default: first config seed)");

    auto* cmd_poison = app.add_subcommand("poison", "apply a selection to the training set");
    add_common(cmd_poison, opts);
    cmd_poison->add_option("--selection", selection_path, "selection JSON")->required();
    cmd_poison->add_option("-o,--out", out_file, "output poisoned JSONL")->required();
    cmd_poison->add_option("--seed", seed_flag, "run seed (default: first config seed)");

    auto* cmd_victim = app.add_subcommand("train-victim", "train the victim on a poisoned set");
    add_common(cmd_victim, opts);
    cmd_victim->add_option("--data", data_path, "poisoned training JSONL")->required();
    cmd_victim->add_option("-o,--out", out_file, "output model JSON")->required();
    cmd_victim->add_option("--seed", seed_flag, "run seed (default: first config seed)");

    auto* cmd_eval = app.add_subcommand("evaluate", "CACC and ASR for a trained victim");
    add_common(cmd_eval, opts);
    cmd_eval->add_option("--model", model_path, "victim model JSON")->required();
    cmd_eval->add_option("-o,--out", out_file, "output report JSON")->required();

    // ---- pipeline commands
    auto* cmd_run = app.add_subcommand("run", "full experiment over all config seeds");
    add_common(cmd_run, opts);
    cmd_run->add_option("-o,--out", out_dir, "output directory");
    cmd_run->add_option("--ledger", ledger_override, "ledger CSV (default <out>/ledger.csv)");

    auto* cmd_grid = app.add_subcommand("grid", "strategy x attack grid");
    add_common(cmd_grid, opts);
    cmd_grid->add_option("-o,--out", out_dir, "output directory");
    cmd_grid->add_option("--ledger", ledger_override, "ledger CSV (default <out>/ledger.csv)");
    cmd_grid->add_option("-j,--jobs", jobs, "concurrent cells");

    auto* cmd_sweep = app.add_subcommand("sweep", "poison-rate sweep");
    add_common(cmd_sweep, opts);
    cmd_sweep->add_option("-o,--out", out_dir, "output directory");
    cmd_sweep->add_option("--ledger", ledger_override, "ledger CSV (default <out>/ledger.csv)");
    cmd_sweep->add_option("-j,--jobs", jobs, "concurrent cells");

    auto* cmd_transfer = app.add_subcommand("transfer", "surrogate x victim matrix");
    add_common(cmd_transfer, opts);
    cmd_transfer->add_option("-o,--out", out_dir, "output directory");
    cmd_transfer->add_option("--ledger", ledger_override,
                             "ledger CSV (default <out>/ledger.csv)");
    cmd_transfer->add_option("-j,--jobs", jobs, "concurrent cells");

    auto* cmd_report = app.add_subcommand("report", "render tables and charts from a ledger");
    std::string report_ledger;
    cmd_report->add_option("--ledger", report_ledger, "ledger CSV")->required();
    cmd_report->add_option("-o,--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << "usage error: " << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 1;
    }

    try {
        if (*cmd_stats) {
            stats_tok.lowercase = !no_lower;
            stats_tok.strip_punct = keep_punct ? PunctPolicy::Keep : PunctPolicy::Separate;
            auto ds = load_dataset(stats_data, stats_classes);
            auto st = compute_stats(ds, stats_tok);
            json j;
            j["count"] = st.count;
            j["avg_len_tokens"] = fraction_json(st.avg_len_tokens);
            j["label_histogram"] = st.label_histogram;
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*cmd_surr) {
            auto cfg = load_cfg(opts);
            const std::uint64_t seed = pick_seed(cfg, seed_flag);
            auto train_ds = load_unpoisoned_dataset(cfg.dataset.train_path,
                                                    cfg.dataset.num_classes, SplitTag::Train);
            TrainConfig tc = cfg.surrogate.train;
            tc.seed = stage_seed(seed, "surrogate");
            auto model = train(train_ds, tc, cfg.surrogate.tok, cfg.surrogate.min_freq);
            save_model(model, out_file);
            std::cout << "surrogate written to " << out_file << "\n";
            return 0;
        }

        if (*cmd_score) {
            auto cfg = load_cfg(opts);
            auto train_ds = load_dataset(cfg.dataset.train_path, cfg.dataset.num_classes,
                                         SplitTag::Train);
            auto surrogate = load_model(model_path);
            auto pool = build_target_pool(train_ds, cfg.target_label,
                                          cfg.mode == PoisonMode::DirtyLabel);
            auto scores = score_pool(surrogate, train_ds, pool, cfg.target_label);
            save_scores(scores, cfg.target_label, out_file);
            std::cout << "scored " << scores.size() << " pool samples -> " << out_file << "\n";
            return 0;
        }

        if (*cmd_select) {
            auto cfg = load_cfg(opts);
            if (!sel_strategy.empty()) cfg.strategy = strategy_from_string(sel_strategy);
            if (sel_rho > 0) cfg.rho = sel_rho;
            if (sel_shortfall) cfg.allow_shortfall = true;
            const std::uint64_t seed = pick_seed(cfg, seed_flag);
            auto train_ds = load_dataset(cfg.dataset.train_path, cfg.dataset.num_classes,
                                         SplitTag::Train);
            auto scores = load_scores(scores_path);
            SelectionConfig sel_cfg;
            sel_cfg.strategy = cfg.strategy;
            sel_cfg.rho = cfg.rho;
            sel_cfg.target_label = cfg.target_label;
            sel_cfg.seed = stage_seed(seed, "selection");
            sel_cfg.allow_shortfall = cfg.allow_shortfall;
            auto sel = select(scores, sel_cfg, compute_budget(cfg.rho, train_ds.size()));
            save_selection(sel, out_file);
            std::cout << "selected " << sel.ids.size() << " of budget " << sel.budget << " -> "
                      << out_file << "\n";
            return 0;
        }

        if (*cmd_poison) {
            auto cfg = load_cfg(opts);
            const std::uint64_t seed = pick_seed(cfg, seed_flag);
            auto train_ds = load_unpoisoned_dataset(cfg.dataset.train_path,
                                                    cfg.dataset.num_classes, SplitTag::Train);
            ensure_table_loaded(cfg.trigger);
            PoisonPlan plan;
            plan.selection = load_selection(selection_path);
            plan.trigger = cfg.trigger;
            plan.mode = cfg.mode;
            plan.target_label = cfg.target_label;
            plan.seed = stage_seed(seed, "trigger");
            if (fs::exists(provenance_path_for(out_file))) {
                throw ValidationError("refusing to overwrite poisoned set " + out_file +
                                      ": provenance sidecar already present");
            }
            auto poisoned = apply_plan(train_ds, plan);
            save_poisoned(poisoned, out_file);
            std::cout << "poisoned " << plan.selection.ids.size() << " samples -> " << out_file
                      << "\n";
            return 0;
        }

        if (*cmd_victim) {
            auto cfg = load_cfg(opts);
            const std::uint64_t seed = pick_seed(cfg, seed_flag);
            auto poisoned = load_dataset(data_path, cfg.dataset.num_classes, SplitTag::Train);
            TrainConfig tc = cfg.victim.train;
            tc.seed = stage_seed(seed, "victim");
            auto model = train(poisoned, tc, cfg.victim.tok, cfg.victim.min_freq);
            save_model(model, out_file);
            std::cout << "victim written to " << out_file << "\n";
            return 0;
        }

        if (*cmd_eval) {
            auto cfg = load_cfg(opts);
            auto test_ds = load_dataset(cfg.dataset.test_path, cfg.dataset.num_classes,
                                        SplitTag::Test);
            auto victim = load_model(model_path);
            ensure_table_loaded(cfg.trigger);
            auto attack = build_attack_set(test_ds, cfg.trigger, cfg.target_label,
                                           cfg.eval_seed);
            EvalReport report;
            report.cacc = compute_cacc(victim, test_ds);
            report.asr = compute_asr(victim, attack);
            report.n_test = test_ds.size();
            report.n_attack = attack.samples.size();
            report.victim_id = cfg.victim.name + "@" + victim.train_config_hash;
            report.config_hash = config_hash(cfg);
            save_report(report, out_file);
            std::printf("cacc=%lld/%lld (%.3f)  asr=%lld/%lld (%.3f)\n",
                        static_cast<long long>(report.cacc.num),
                        static_cast<long long>(report.cacc.den), report.cacc.value(),
                        static_cast<long long>(report.asr.num),
                        static_cast<long long>(report.asr.den), report.asr.value());
            return 0;
        }

        const fs::path out(out_dir);
        const fs::path ledger =
            ledger_override.empty() ? out / "ledger.csv" : fs::path(ledger_override);

        if (*cmd_run) {
            auto cfg = load_cfg(opts);
            auto result = run_experiment(cfg, out, ledger);
            std::printf("%s  mean_asr=%.3f  mean_cacc=%.3f  clean_cacc=%.3f  baseline_asr=%.3f\n",
                        result.hash.c_str(), result.mean_asr, result.mean_cacc,
                        result.mean_clean_cacc, result.mean_baseline_asr);
            return 0;
        }
        if (*cmd_grid) {
            auto cfg = load_cfg(opts);
            auto outcomes = run_strategy_grid(cfg, out, ledger, jobs);
            print_cells(outcomes);
            write_summary_md(outcomes, out / "summary.md");
            return batch_exit_code(outcomes);
        }
        if (*cmd_sweep) {
            auto cfg = load_cfg(opts);
            auto outcomes = run_rate_sweep(cfg, out, ledger, jobs);
            print_cells(outcomes);
            return batch_exit_code(outcomes);
        }
        if (*cmd_transfer) {
            auto cfg = load_cfg(opts);
            auto outcomes = run_transfer_matrix(cfg, out, ledger, jobs);
            print_cells(outcomes);
            write_transfer_md(outcomes, out / "transfer_matrix.md");
            return batch_exit_code(outcomes);
        }
        if (*cmd_report) {
            auto rendered = render_report(report_ledger, out);
            for (const fs::path& f : rendered.files) std::cout << f.string() << "\n";
            return 0;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 3;
    }
    return 1;
}

// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Exit code = number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unistd.h>
#include <vector>

#include "bdlab/pipeline.hpp"
#include "../selection_oracle.hpp"

using namespace bdlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path data_dir() { return fs::path(BDLAB_DATA_DIR); }

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() /
                   ("bdlab_accept_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json synth_config() {
    return json{
        {"dataset",
         {{"name", "synth200"},
          {"train", (data_dir() / "synth200" / "train.jsonl").string()},
          {"test", (data_dir() / "synth200" / "test.jsonl").string()},
          {"num_classes", 2}}},
        {"target_label", 1},
        {"mode", "clean_label"},
        {"trigger",
         {{"variant", "word_insert"},
          {"words", {"cf", "tq", "mn", "bb", "mb"}},
          {"words_per_sample", 5},
          {"position", "random"}}},
        {"strategy", "minimum"},
        {"rho", 0.05},
        {"seeds", {1, 2, 3, 4, 5}},
    };
}

// experiments recorded for the cross-cutting clean-label audit (A7)
struct RecordedRun {
    fs::path out;
    std::string hash;
    std::string train_path;
    std::vector<std::uint64_t> seeds;
};
std::vector<RecordedRun> g_recorded;

void record(const fs::path& out, const ExperimentResult& r) {
    g_recorded.push_back({out, r.hash, r.cfg.dataset.train_path, r.cfg.seeds});
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return v[a] < v[b];
        });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;  // average rank over ties
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i] / n;
        my += ry[i] / n;
    }
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    return cov / std::sqrt(vx * vy);
}

std::uint64_t file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

ClassifierParams constant_predictor(int cls, int num_classes) {
    ClassifierParams m;
    m.num_classes = num_classes;
    m.vocab = Vocabulary({"the"}, 1);
    m.weights.assign(static_cast<std::size_t>(num_classes), 0.0);
    m.bias.assign(num_classes, 0.0);
    m.bias[cls] = 1.0;
    return m;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------------- A1
Outcome criterion_a1() {
    auto out = fresh_dir("a1");
    StageCache cache;
    auto base = parse_experiment_config(synth_config());

    ExperimentConfig minimum = base;
    auto r_min = run_experiment(minimum, out, out / "ledger.csv", &cache);
    record(out, r_min);

    ExperimentConfig random_cfg = base;
    random_cfg.strategy = Strategy::Random;
    auto r_rand = run_experiment(random_cfg, out, out / "ledger.csv", &cache);
    record(out, r_rand);

    const double uplift = r_min.mean_asr - r_rand.mean_asr;
    const double cacc_drop = r_min.mean_clean_cacc - r_min.mean_cacc;
    std::ostringstream detail;
    detail << "ASR(minimum)=" << r_min.mean_asr << " ASR(random)=" << r_rand.mean_asr
           << " uplift=" << uplift << " (> 0.05 required); CACC drop=" << cacc_drop
           << " (<= 0.05 required)";
    return {uplift > 0.05 && cacc_drop <= 0.05, detail.str()};
}

// ---------------------------------------------------------------------- A2
Outcome criterion_a2() {
    std::mt19937_64 gen(0xA2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int pools = 0, comparisons = 0, mismatches = 0;
    for (int iter = 0; iter < 1200; ++iter) {
        const std::size_t n = 1 + gen() % 20;
        std::vector<TargetScore> scores;
        for (std::size_t i = 0; i < n; ++i) {
            double p;
            switch (gen() % 4) {
                case 0: p = 0.5; break;  // exact boundary
                case 1: p = (gen() % 2) ? 0.0 : 1.0; break;
                case 2: p = std::round(unif(gen) * 10) / 10; break;
                default: p = unif(gen); break;
            }
            scores.push_back({"s" + std::to_string(i), p});
        }
        ++pools;
        const std::size_t budget = 1 + gen() % n;
        const bool allow = gen() % 2 == 0;
        const std::uint64_t seed = gen();
        for (Strategy s : {Strategy::Random, Strategy::Minimum, Strategy::Above50,
                           Strategy::Below50}) {
            SelectionConfig cfg;
            cfg.strategy = s;
            cfg.rho = 0.02;
            cfg.target_label = 1;
            cfg.seed = seed;
            cfg.allow_shortfall = allow;
            auto expected = oracle::select(scores, s, budget, seed, allow);
            ++comparisons;
            try {
                auto got = select(scores, cfg, budget);
                if (!expected || got.ids != expected->ids ||
                    got.shortfall != expected->shortfall) {
                    ++mismatches;
                }
            } catch (const ValidationError&) {
                if (expected) ++mismatches;
            }
        }
    }
    std::ostringstream detail;
    detail << pools << " pools, " << comparisons << " strategy comparisons, " << mismatches
           << " mismatches (0 required)";
    return {pools >= 1000 && mismatches == 0, detail.str()};
}

// ---------------------------------------------------------------------- A3
Outcome criterion_a3() {
    auto out = fresh_dir("a3");
    auto cfg = parse_experiment_config(synth_config());
    cfg.sweep_rhos = {0.005, 0.01, 0.02, 0.05, 0.10};
    auto outcomes = run_rate_sweep(cfg, out, out / "ledger.csv");

    std::vector<double> rhos, asrs;
    double max_cacc_dev = 0.0;
    for (const CellOutcome& cell : outcomes) {
        if (!cell.result) return {false, "sweep cell failed: " + cell.error};
        record(out, *cell.result);
        rhos.push_back(cell.cfg.rho);
        asrs.push_back(cell.result->mean_asr);
        max_cacc_dev = std::max(
            max_cacc_dev, std::abs(cell.result->mean_cacc - cell.result->mean_clean_cacc));
    }
    const double rho_corr = spearman(rhos, asrs);
    std::ostringstream detail;
    detail << "mean ASR by rho:";
    for (double a : asrs) detail << " " << a;
    detail << "; spearman=" << rho_corr << " (>= 0.6 required); max CACC deviation="
           << max_cacc_dev << " (<= 0.05 required)";
    return {rho_corr >= 0.6 && max_cacc_dev <= 0.05, detail.str()};
}

// ---------------------------------------------------------------------- A4
Outcome criterion_a4() {
    auto test_ds = load_dataset(data_dir() / "synth200" / "test.jsonl", 2, SplitTag::Test);
    TriggerSpec trigger;
    trigger.variant = TriggerVariant::WordInsert;
    trigger.words = {"cf", "tq", "mn", "bb", "mb"};
    trigger.position = InsertPosition::Random;
    const int target = 1;
    auto attack = build_attack_set(test_ds, trigger, target);

    std::int64_t prior = 0;
    for (const Sample& s : test_ds.samples()) {
        if (s.label == target) ++prior;
    }

    auto always = constant_predictor(target, 2);
    auto never = constant_predictor(1 - target, 2);
    const Fraction asr_always = compute_asr(always, attack);
    const Fraction asr_never = compute_asr(never, attack);
    const Fraction cacc_always = compute_cacc(always, test_ds);

    const bool pass =
        asr_always == Fraction{static_cast<std::int64_t>(attack.samples.size()),
                               static_cast<std::int64_t>(attack.samples.size())} &&
        asr_never == Fraction{0, static_cast<std::int64_t>(attack.samples.size())} &&
        cacc_always == Fraction{prior, static_cast<std::int64_t>(test_ds.size())};
    std::ostringstream detail;
    detail << "constant-target: ASR=" << asr_always.num << "/" << asr_always.den
           << " CACC=" << cacc_always.num << "/" << cacc_always.den
           << " (prior " << prior << "/" << test_ds.size() << "); never-target: ASR="
           << asr_never.num << "/" << asr_never.den << " — all exact";
    return {pass, detail.str()};
}

// ---------------------------------------------------------------------- A5
Outcome criterion_a5() {
    std::mt19937_64 gen(0xA5);
    std::uniform_real_distribution<double> logit_dist(-80.0, 80.0);
    std::uniform_real_distribution<double> wdist(-1.0, 1.0);

    // softmax normalization, shift invariance, argmax agreement
    for (int iter = 0; iter < 2000; ++iter) {
        const int c = 2 + static_cast<int>(gen() % 5);
        std::vector<double> z(c);
        for (double& v : z) v = logit_dist(gen);
        if (iter % 7 == 0) z[gen() % c] = 1000.0;  // extreme logits
        auto p = softmax(z);
        double sum = 0;
        for (double v : p) sum += v;
        if (std::abs(sum - 1.0) > 1e-9) return {false, "softmax normalization broke 1e-9"};
        if (argmax(p) != argmax(z)) return {false, "argmax(probs) != argmax(logits)"};
        const double shift = logit_dist(gen);
        std::vector<double> zs = z;
        for (double& v : zs) v += shift;
        auto ps = softmax(zs);
        for (int i = 0; i < c; ++i) {
            if (std::abs(p[i] - ps[i]) > 1e-9) return {false, "shift invariance broke 1e-9"};
        }
    }

    // analytic gradient vs central finite differences, 100 random instances
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        const int c_size = 2 + static_cast<int>(gen() % 2);
        const std::size_t v_size = 2 + gen() % 9;
        const std::size_t n = 1 + gen() % 5;
        std::vector<SparseVector> xs(n);
        std::vector<int> ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::uint32_t v = 0; v < v_size; ++v) {
                if (gen() % 2) xs[i].push_back({v, static_cast<double>(1 + gen() % 3)});
            }
            ys[i] = static_cast<int>(gen() % c_size);
        }
        std::vector<double> w(c_size * v_size), b(c_size);
        for (double& x : w) x = wdist(gen);
        for (double& x : b) x = wdist(gen);

        std::vector<double> grad_w(w.size(), 0.0), grad_b(b.size(), 0.0);
        std::vector<std::size_t> subset(n);
        std::iota(subset.begin(), subset.end(), 0);
        cross_entropy_batch(xs, ys, subset, c_size, v_size, w, b, grad_w, grad_b);

        // independent scalar loss used for the finite differences
        auto loss = [&]() {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> z(b.begin(), b.end());
                for (int cc = 0; cc < c_size; ++cc) {
                    for (auto& [idx, val] : xs[i]) z[cc] += w[cc * v_size + idx] * val;
                }
                double mx = *std::max_element(z.begin(), z.end());
                double denom = 0.0;
                for (double v : z) denom += std::exp(v - mx);
                total -= (z[ys[i]] - mx) - std::log(denom);
            }
            return total;
        };
        const double h = 1e-5;
        auto check = [&](std::vector<double>& vec, std::size_t k, double analytic) {
            const double orig = vec[k];
            vec[k] = orig + h;
            const double up = loss();
            vec[k] = orig - h;
            const double down = loss();
            vec[k] = orig;
            const double numeric = (up - down) / (2 * h);
            if (std::abs(numeric) < 1e-8 && std::abs(analytic) < 1e-8) return;
            worst = std::max(worst,
                             std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-8));
        };
        for (std::size_t k = 0; k < w.size(); ++k) check(w, k, grad_w[k]);
        for (std::size_t k = 0; k < b.size(); ++k) check(b, k, grad_b[k]);
    }
    std::ostringstream detail;
    detail << "softmax suite ok (1e-9); gradient worst relative error=" << worst
           << " (<= 1e-4 required over 100 instances)";
    return {worst <= 1e-4, detail.str()};
}

// ---------------------------------------------------------------------- A6
Outcome criterion_a6() {
    auto cfg = parse_experiment_config(synth_config());
    auto out1 = fresh_dir("a6_first");
    auto out2 = fresh_dir("a6_second");
    run_experiment(cfg, out1, out1 / "ledger.csv");
    run_experiment(cfg, out2, out2 / "ledger.csv");

    std::map<std::string, std::uint64_t> h1, h2;
    auto collect = [](const fs::path& root, std::map<std::string, std::uint64_t>& out_map) {
        for (auto& entry : fs::recursive_directory_iterator(root)) {
            if (!entry.is_regular_file()) continue;
            if (entry.path().filename() == "ledger.csv") continue;  // timestamp column
            out_map[fs::relative(entry.path(), root).string()] = file_hash(entry.path());
        }
    };
    collect(out1, h1);
    collect(out2, h2);
    const bool pass = !h1.empty() && h1 == h2;
    std::ostringstream detail;
    detail << h1.size() << " persisted artifacts hashed (models, scores, selections, poisoned "
              "sets, reports) — "
           << (pass ? "byte-identical across repeated runs" : "MISMATCH");
    return {pass, detail.str()};
}

// ---------------------------------------------------------------------- A7
Outcome criterion_a7() {
    // every clean-label experiment from A1 and A3: poisoned label vector must
    // equal the source's
    std::size_t checked = 0;
    for (const RecordedRun& run : g_recorded) {
        auto source = load_dataset(run.train_path, 2, SplitTag::Train);
        for (std::uint64_t seed : run.seeds) {
            const fs::path poisoned_path =
                run.out / run.hash / ("seed_" + std::to_string(seed)) / "poisoned.jsonl";
            auto poisoned = load_dataset(poisoned_path, 2, SplitTag::Train);
            if (poisoned.size() != source.size()) {
                return {false, "poisoned set size differs for " + poisoned_path.string()};
            }
            for (std::size_t i = 0; i < source.size(); ++i) {
                if (poisoned.samples()[i].label != source.samples()[i].label) {
                    return {false, "label flip in clean-label run at " +
                                       source.samples()[i].id};
                }
            }
            ++checked;
        }
    }

    // dirty-label mode: exactly `budget` flips, all to the target label
    auto out = fresh_dir("a7_dirty");
    auto cfg = parse_experiment_config(synth_config());
    cfg.mode = PoisonMode::DirtyLabel;
    cfg.strategy = Strategy::Random;
    cfg.seeds = {1};
    auto result = run_experiment(cfg, out, out / "ledger.csv");
    auto source = load_dataset(cfg.dataset.train_path, 2, SplitTag::Train);
    auto poisoned = load_dataset(out / result.hash / "seed_1" / "poisoned.jsonl", 2,
                                 SplitTag::Train);
    auto sel = load_selection(out / result.hash / "seed_1" / "selection.json");
    std::size_t flips = 0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (poisoned.samples()[i].label != source.samples()[i].label) {
            ++flips;
            if (poisoned.samples()[i].label != cfg.target_label) {
                return {false, "dirty-label flip to non-target at " + source.samples()[i].id};
            }
        }
    }
    if (flips != sel.ids.size()) {
        return {false, "dirty-label flips " + std::to_string(flips) + " != budget " +
                           std::to_string(sel.ids.size())};
    }
    std::ostringstream detail;
    detail << checked << " clean-label poisoned sets verified label-identical; dirty-label run "
           << "flipped exactly " << flips << " labels, all to the target";
    return {true, detail.str()};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_seconds;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria{
        {"A1 minimum-beats-random uplift", 60.0, criterion_a1},
        {"A2 selection oracle equivalence", 10.0, criterion_a2},
        {"A3 poison-rate trend", 180.0, criterion_a3},
        {"A4 metric definitional suite", 10.0, criterion_a4},
        {"A5 classifier numerical suite", 10.0, criterion_a5},
        {"A6 determinism of persisted artifacts", 120.0, criterion_a6},
        {"A7 clean-label integrity", 60.0, criterion_a7},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.fn();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_budget = elapsed <= c.budget_seconds;
        const bool pass = outcome.pass && in_budget;
        if (!pass) ++failures;
        std::printf("%s  %s [%.2fs/%.0fs] — %s%s\n", pass ? "PASS" : "FAIL", c.name, elapsed,
                    c.budget_seconds, outcome.detail.c_str(),
                    in_budget ? "" : " (RUNTIME BUDGET EXCEEDED)");
    }
    std::printf("%d/%zu acceptance criteria passed\n",
                static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures;
}

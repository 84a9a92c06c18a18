#include "bdlab/selection.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace bdlab {

using nlohmann::json;

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Random: return "random";
        case Strategy::Minimum: return "minimum";
        case Strategy::Above50: return "above50";
        case Strategy::Below50: return "below50";
    }
    return "random";
}

Strategy strategy_from_string(const std::string& name) {
    std::string lower = name;
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "random") return Strategy::Random;
    if (lower == "minimum") return Strategy::Minimum;
    if (lower == "above50") return Strategy::Above50;
    if (lower == "below50") return Strategy::Below50;
    throw ValidationError("unknown strategy \"" + name +
                          "\" (expected random|minimum|above50|below50)");
}

std::vector<std::string> build_target_pool(const LabeledDataset& train, int target_label,
                                           bool complement) {
    if (target_label < 0 || target_label >= train.num_classes()) {
        throw ValidationError("target label out of range: " + std::to_string(target_label));
    }
    std::vector<std::string> pool;
    for (const Sample& s : train.samples()) {
        if ((s.label == target_label) != complement) pool.push_back(s.id);
    }
    if (pool.empty()) {
        throw ValidationError(complement ? "empty complement pool" : "empty target pool");
    }
    return pool;
}

std::vector<TargetScore> score_pool(const ClassifierParams& surrogate,
                                    const LabeledDataset& train,
                                    const std::vector<std::string>& pool, int target_label) {
    if (target_label < 0 || target_label >= surrogate.num_classes) {
        throw ValidationError("target label out of range: " + std::to_string(target_label));
    }
    std::vector<TargetScore> scores;
    scores.reserve(pool.size());
    for (const std::string& id : pool) {
        const Sample& s = train.at(id);
        const ProbabilityVector p = predict_proba(surrogate, s.text);
        scores.push_back({id, p.probs[target_label]});
    }
    return scores;
}

std::size_t compute_budget(double rho, std::size_t train_size) {
    if (!(rho > 0.0) || rho > 1.0) throw ValidationError("rho must be in (0,1]");
    if (train_size < 1) throw ValidationError("train_size must be >= 1");
    // +1e-9 keeps decimal rho values (0.29 etc.) from flooring one short.
    auto budget = static_cast<std::size_t>(std::floor(rho * static_cast<double>(train_size) + 1e-9));
    return std::max<std::size_t>(budget, 1);
}

namespace {

// Appends sorted[.] ids walking tie-runs from the bottom of the list; within a
// run (equal p) order stays ascending-id. Stops once budget ids are out.
void take_from_bottom(const std::vector<TargetScore>& sorted, std::size_t budget,
                      std::vector<std::string>& out) {
    std::size_t run_end = sorted.size();
    while (run_end > 0 && out.size() < budget) {
        std::size_t run_begin = run_end;
        while (run_begin > 0 && sorted[run_begin - 1].p_target == sorted[run_end - 1].p_target) {
            --run_begin;
        }
        for (std::size_t i = run_begin; i < run_end && out.size() < budget; ++i) {
            out.push_back(sorted[i].sample_id);
        }
        run_end = run_begin;
    }
}

}  // namespace

PoisonSelection select(const std::vector<TargetScore>& scores, const SelectionConfig& cfg,
                       std::size_t budget) {
    if (scores.empty()) throw ValidationError("select: empty score list");
    if (budget < 1) throw ValidationError("select: budget must be >= 1");
    for (const TargetScore& ts : scores) {
        if (!std::isfinite(ts.p_target) || ts.p_target < 0.0 || ts.p_target > 1.0) {
            throw ValidationError("invalid p_target for id \"" + ts.sample_id + "\"");
        }
    }

    PoisonSelection sel;
    sel.strategy = cfg.strategy;
    sel.budget = budget;
    sel.rho = cfg.rho;
    sel.seed = cfg.seed;
    sel.scores_used = scores;

    if (cfg.strategy == Strategy::Random) {
        std::vector<std::string> pool;
        pool.reserve(scores.size());
        for (const TargetScore& ts : scores) pool.push_back(ts.sample_id);
        if (pool.size() < budget) {
            if (!cfg.allow_shortfall) {
                throw ValidationError("budget " + std::to_string(budget) +
                                      " unreachable: pool has " + std::to_string(pool.size()) +
                                      " samples (pass allow_shortfall to take all)");
            }
            sel.shortfall = true;
            budget = pool.size();
        }
        SeededRng rng(cfg.seed);
        for (std::size_t i = 0; i < budget; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
            sel.ids.push_back(pool[i]);
        }
        return sel;
    }

    // Algorithm-1 path: sort descending by p_target, ties ascending id.
    std::vector<TargetScore> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), [](const TargetScore& a, const TargetScore& b) {
        if (a.p_target != b.p_target) return a.p_target > b.p_target;
        return a.sample_id < b.sample_id;
    });

    std::vector<TargetScore> kept;
    switch (cfg.strategy) {
        case Strategy::Minimum:
            kept = sorted;
            break;
        case Strategy::Above50:
            for (const TargetScore& ts : sorted) {
                if (ts.p_target >= 0.50) kept.push_back(ts);  // 0.50 exactly is kept
            }
            break;
        case Strategy::Below50:
            for (const TargetScore& ts : sorted) {
                if (ts.p_target <= 0.50) kept.push_back(ts);  // 0.50 exactly is kept
            }
            break;
        case Strategy::Random:
            break;  // handled above
    }
    if (kept.empty()) {
        throw ValidationError("empty filtered pool for strategy " + to_string(cfg.strategy));
    }
    if (kept.size() < budget) {
        if (!cfg.allow_shortfall) {
            throw ValidationError("budget " + std::to_string(budget) + " unreachable: strategy " +
                                  to_string(cfg.strategy) + " eligible pool has " +
                                  std::to_string(kept.size()) +
                                  " samples (pass allow_shortfall to take all)");
        }
        sel.shortfall = true;
        budget = kept.size();
    }

    if (cfg.strategy == Strategy::Below50) {
        // Top of the remaining sorted list: closest below 0.5 first.
        for (std::size_t i = 0; i < budget; ++i) sel.ids.push_back(kept[i].sample_id);
    } else {
        take_from_bottom(kept, budget, sel.ids);
    }
    return sel;
}

void save_selection(const PoisonSelection& sel, const std::filesystem::path& path) {
    json j;
    j["strategy"] = to_string(sel.strategy);
    j["budget"] = sel.budget;
    j["rho"] = sel.rho;
    j["seed"] = sel.seed;
    j["shortfall"] = sel.shortfall;
    j["ids"] = sel.ids;
    json scores = json::array();
    for (const TargetScore& ts : sel.scores_used) {
        scores.push_back({{"id", ts.sample_id}, {"p_target", ts.p_target}});
    }
    j["scores"] = std::move(scores);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

void save_scores(const std::vector<TargetScore>& scores, int target_label,
                 const std::filesystem::path& path) {
    json j;
    j["target_label"] = target_label;
    json arr = json::array();
    for (const TargetScore& ts : scores) {
        arr.push_back({{"id", ts.sample_id}, {"p_target", ts.p_target}});
    }
    j["scores"] = std::move(arr);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

std::vector<TargetScore> load_scores(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open scores file: " + path.string());
    json j;
    try {
        in >> j;
        std::vector<TargetScore> scores;
        for (const json& ts : j.at("scores")) {
            scores.push_back({ts.at("id").get<std::string>(), ts.at("p_target").get<double>()});
        }
        return scores;
    } catch (const json::exception& e) {
        throw ValidationError("malformed scores file " + path.string() + ": " + e.what());
    }
}

PoisonSelection load_selection(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open selection file: " + path.string());
    json j;
    try {
        in >> j;
        PoisonSelection sel;
        sel.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        sel.budget = j.at("budget").get<std::size_t>();
        sel.rho = j.at("rho").get<double>();
        sel.seed = j.at("seed").get<std::uint64_t>();
        sel.shortfall = j.at("shortfall").get<bool>();
        sel.ids = j.at("ids").get<std::vector<std::string>>();
        for (const json& ts : j.at("scores")) {
            sel.scores_used.push_back(
                {ts.at("id").get<std::string>(), ts.at("p_target").get<double>()});
        }
        return sel;
    } catch (const json::exception& e) {
        throw ValidationError("malformed selection file " + path.string() + ": " + e.what());
    }
}

}  // namespace bdlab

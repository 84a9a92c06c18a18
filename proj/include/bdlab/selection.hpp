#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bdlab/classifier.hpp"
#include "bdlab/corpus.hpp"

namespace bdlab {

enum class Strategy { Random, Minimum, Above50, Below50 };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct TargetScore {
    std::string sample_id;
    double p_target = 0.0;  // finite, in [0,1]
};

struct SelectionConfig {
    Strategy strategy = Strategy::Random;
    double rho = 0.02;  // in (0,1]
    int target_label = 1;
    std::uint64_t seed = 0;
    bool allow_shortfall = false;
};

struct PoisonSelection {
    std::vector<std::string> ids;  // most-preferred first
    Strategy strategy = Strategy::Random;
    std::size_t budget = 0;
    double rho = 0.0;
    std::uint64_t seed = 0;
    bool shortfall = false;
    std::vector<TargetScore> scores_used;  // audit trail, pool order
};

// Ids of training samples with the given label, in dataset order. With
// complement=true, ids with any *other* label (dirty-label pool).
std::vector<std::string> build_target_pool(const LabeledDataset& train, int target_label,
                                           bool complement = false);

// p_target per pool id, pool order.
std::vector<TargetScore> score_pool(const ClassifierParams& surrogate,
                                    const LabeledDataset& train,
                                    const std::vector<std::string>& pool, int target_label);

// floor(rho * train_size), clamped to >= 1. Capping against the eligible
// pool happens in select().
std::size_t compute_budget(double rho, std::size_t train_size);

// Strategy semantics, most-preferred first with ties to the lower id:
//   Minimum: lowest p_target over the whole pool
//   Above50: keeps p_target >= 0.5, then lowest p_target (closest above 0.5)
//   Below50: keeps p_target <= 0.5, then highest p_target (closest below 0.5)
//   Random:  seeded uniform draw from the whole pool
PoisonSelection select(const std::vector<TargetScore>& scores, const SelectionConfig& cfg,
                       std::size_t budget);

void save_selection(const PoisonSelection& sel, const std::filesystem::path& path);
PoisonSelection load_selection(const std::filesystem::path& path);

void save_scores(const std::vector<TargetScore>& scores, int target_label,
                 const std::filesystem::path& path);
std::vector<TargetScore> load_scores(const std::filesystem::path& path);

}  // namespace bdlab

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bdlab/classifier.hpp"
#include "bdlab/corpus.hpp"
#include "bdlab/trigger.hpp"

namespace bdlab {

constexpr std::uint64_t kDefaultEvalSeed = 0xE7A1;

// Trigger-injected copies of every non-target test sample (D_bd is the full
// complement, not a subsample). Labels in `samples` stay the originals; the
// ASR denominator is their count.
struct AttackTestSet {
    std::vector<Sample> samples;
    std::vector<std::string> source_ids;
    int target_label = 0;
};

struct EvalReport {
    Fraction cacc;
    Fraction asr;
    std::size_t n_test = 0;
    std::size_t n_attack = 0;
    std::string victim_id;
    std::string config_hash;
};

AttackTestSet build_attack_set(const LabeledDataset& test, const TriggerSpec& trigger,
                               int target_label, std::uint64_t eval_seed = kDefaultEvalSeed);

Fraction compute_cacc(const ClassifierParams& victim, const LabeledDataset& test);

Fraction compute_asr(const ClassifierParams& victim, const AttackTestSet& attack);

void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

}  // namespace bdlab

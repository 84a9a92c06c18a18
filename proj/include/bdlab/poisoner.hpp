#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "bdlab/corpus.hpp"
#include "bdlab/selection.hpp"
#include "bdlab/trigger.hpp"

namespace bdlab {

enum class PoisonMode { CleanLabel, DirtyLabel };

std::string to_string(PoisonMode m);
PoisonMode poison_mode_from_string(const std::string& name);

struct PoisonPlan {
    PoisonSelection selection;
    TriggerSpec trigger;
    PoisonMode mode = PoisonMode::CleanLabel;
    int target_label = 1;
    std::uint64_t seed = 0;
};

struct SampleProvenance {
    bool poisoned = false;
    std::string original_text_hash;  // hex fnv1a64, not the text itself
    bool label_flipped = false;
};

struct PoisonedTrainSet {
    LabeledDataset dataset;
    std::map<std::string, SampleProvenance> provenance;  // poisoned ids only
};

// Selected samples trigger-injected exactly once; dirty mode also rewrites
// their labels to target_label. Everything else byte-identical, size kept.
PoisonedTrainSet apply_plan(const LabeledDataset& train, const PoisonPlan& plan);

// Sidecar path used to mark a dataset file as already poisoned.
std::filesystem::path provenance_path_for(const std::filesystem::path& dataset_path);

// dataset JSONL + provenance sidecar.
void save_poisoned(const PoisonedTrainSet& set, const std::filesystem::path& dataset_path);

// Refuses (double-poisoning) when a provenance sidecar exists next to the file.
LabeledDataset load_unpoisoned_dataset(const std::filesystem::path& path, int num_classes,
                                       SplitTag split_tag = SplitTag::Train);

}  // namespace bdlab

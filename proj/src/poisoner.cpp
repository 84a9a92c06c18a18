#include "bdlab/poisoner.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace bdlab {

using nlohmann::json;

std::string to_string(PoisonMode m) {
    return m == PoisonMode::CleanLabel ? "clean_label" : "dirty_label";
}

PoisonMode poison_mode_from_string(const std::string& name) {
    if (name == "clean_label") return PoisonMode::CleanLabel;
    if (name == "dirty_label") return PoisonMode::DirtyLabel;
    throw ValidationError("unknown poison mode \"" + name +
                          "\" (expected clean_label|dirty_label)");
}

PoisonedTrainSet apply_plan(const LabeledDataset& train, const PoisonPlan& plan) {
    validate_trigger_spec(plan.trigger);
    if (plan.target_label < 0 || plan.target_label >= train.num_classes()) {
        throw ValidationError("target label out of range: " + std::to_string(plan.target_label));
    }

    std::unordered_set<std::string> selected;
    for (const std::string& id : plan.selection.ids) {
        if (!selected.insert(id).second) {
            throw ValidationError("double-poisoning attempt: id \"" + id +
                                  "\" selected more than once");
        }
    }

    std::vector<std::string> offending;
    for (const Sample& s : train.samples()) {
        if (!selected.count(s.id)) continue;
        const bool is_target = s.label == plan.target_label;
        if (plan.mode == PoisonMode::CleanLabel && !is_target) offending.push_back(s.id);
        if (plan.mode == PoisonMode::DirtyLabel && is_target) offending.push_back(s.id);
    }
    if (!offending.empty()) {
        std::string msg = plan.mode == PoisonMode::CleanLabel
                              ? "clean_label plan contains non-target ids:"
                              : "dirty_label plan contains target-label ids:";
        for (const std::string& id : offending) msg += " " + id;
        throw ValidationError(msg);
    }
    for (const std::string& id : plan.selection.ids) {
        if (!train.find(id)) throw ValidationError("unknown sample id \"" + id + "\"");
    }

    std::map<std::string, SampleProvenance> provenance;
    std::vector<Sample> samples;
    samples.reserve(train.size());
    for (const Sample& s : train.samples()) {
        if (!selected.count(s.id)) {
            samples.push_back(s);
            continue;
        }
        Sample injected = inject(plan.trigger, s, plan.seed);
        SampleProvenance prov;
        prov.poisoned = true;
        prov.original_text_hash = hex16(fnv1a64(s.text));
        if (plan.mode == PoisonMode::DirtyLabel) {
            injected.label = plan.target_label;
            prov.label_flipped = true;
        }
        provenance.emplace(s.id, prov);
        samples.push_back(std::move(injected));
    }
    return PoisonedTrainSet{LabeledDataset(std::move(samples), train.num_classes(),
                                           std::vector<std::string>(train.label_names()),
                                           train.split_tag()),
                            std::move(provenance)};
}

std::filesystem::path provenance_path_for(const std::filesystem::path& dataset_path) {
    std::filesystem::path p = dataset_path;
    p += ".provenance.json";
    return p;
}

void save_poisoned(const PoisonedTrainSet& set, const std::filesystem::path& dataset_path) {
    save_dataset(set.dataset, dataset_path);
    json j;
    json entries = json::object();
    for (const auto& [id, prov] : set.provenance) {
        entries[id] = {{"poisoned", prov.poisoned},
                       {"original_text_hash", prov.original_text_hash},
                       {"label_flipped", prov.label_flipped}};
    }
    j["poisoned_count"] = set.provenance.size();
    j["samples"] = std::move(entries);
    const std::filesystem::path prov_path = provenance_path_for(dataset_path);
    std::ofstream out(prov_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + prov_path.string());
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) throw std::runtime_error("I/O failure writing " + prov_path.string());
}

LabeledDataset load_unpoisoned_dataset(const std::filesystem::path& path, int num_classes,
                                       SplitTag split_tag) {
    if (std::filesystem::exists(provenance_path_for(path))) {
        throw ValidationError("refusing to poison " + path.string() +
                              ": provenance sidecar found, dataset is already poisoned");
    }
    return load_dataset(path, num_classes, split_tag);
}

}  // namespace bdlab

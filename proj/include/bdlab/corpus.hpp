#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bdlab/common.hpp"
#include "bdlab/tokenizer.hpp"

namespace bdlab {

struct Sample {
    std::string id;
    std::string text;   // non-empty after trimming
    int label = 0;      // in [0, num_classes)

    bool operator==(const Sample&) const = default;
};

enum class SplitTag { Train, Valid, Test };

std::string to_string(SplitTag tag);

// Immutable after construction; iteration order is insertion order.
class LabeledDataset {
public:
    LabeledDataset(std::vector<Sample> samples, int num_classes,
                   std::vector<std::string> label_names, SplitTag split_tag);

    const std::vector<Sample>& samples() const { return samples_; }
    int num_classes() const { return num_classes_; }
    const std::vector<std::string>& label_names() const { return label_names_; }
    SplitTag split_tag() const { return split_tag_; }
    std::size_t size() const { return samples_.size(); }

    const Sample* find(const std::string& id) const;
    const Sample& at(const std::string& id) const;  // throws ValidationError on unknown id

    bool operator==(const LabeledDataset& other) const {
        return samples_ == other.samples_ && num_classes_ == other.num_classes_ &&
               label_names_ == other.label_names_ && split_tag_ == other.split_tag_;
    }

private:
    std::vector<Sample> samples_;
    int num_classes_;
    std::vector<std::string> label_names_;
    SplitTag split_tag_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct CorpusStats {
    std::size_t count = 0;
    Fraction avg_len_tokens;                 // total tokens / count
    std::vector<std::int64_t> label_histogram;
};

// JSONL records: {"text": str, "label": int, "id": optional str}. Records
// without an explicit id get the zero-padded 6-digit line index.
LabeledDataset load_dataset(const std::filesystem::path& path, int num_classes,
                            SplitTag split_tag = SplitTag::Train,
                            std::vector<std::string> label_names = {});

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);

CorpusStats compute_stats(const LabeledDataset& ds, const TokenizerConfig& tok);

std::string trim(std::string_view s);

}  // namespace bdlab

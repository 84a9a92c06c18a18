#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bdlab/corpus.hpp"
#include "bdlab/tokenizer.hpp"

namespace bdlab {

// index -> count pairs, sorted by index.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

class Vocabulary {
public:
    Vocabulary() = default;
    // tokens must already be in index order (0..V-1).
    Vocabulary(std::vector<std::string> tokens, std::uint32_t min_freq);

    std::size_t size() const { return tokens_.size(); }
    std::uint32_t min_freq() const { return min_freq_; }
    const std::vector<std::string>& tokens() const { return tokens_; }

    // -1 if unknown
    std::int64_t index_of(const std::string& token) const;

    bool operator==(const Vocabulary& other) const {
        return tokens_ == other.tokens_ && min_freq_ == other.min_freq_;
    }

private:
    std::vector<std::string> tokens_;
    std::uint32_t min_freq_ = 1;
    std::unordered_map<std::string, std::uint32_t> token_to_index_;
};

// All n-grams with total occurrence count >= min_freq, indices assigned by
// descending frequency, ties by ascending token. Train split only.
Vocabulary build_vocab(const LabeledDataset& train, const TokenizerConfig& tok,
                       std::uint32_t min_freq);

// Unknown n-grams are dropped; empty text yields an empty vector.
SparseVector featurize(std::string_view text, const Vocabulary& vocab,
                       const TokenizerConfig& tok);

}  // namespace bdlab

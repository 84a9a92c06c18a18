#include "bdlab/vocab.hpp"

#include <algorithm>
#include <map>

namespace bdlab {

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::uint32_t min_freq)
    : tokens_(std::move(tokens)), min_freq_(min_freq) {
    token_to_index_.reserve(tokens_.size());
    for (std::uint32_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = token_to_index_.emplace(tokens_[i], i);
        if (!inserted) throw ValidationError("duplicate vocabulary token \"" + tokens_[i] + "\"");
    }
}

std::int64_t Vocabulary::index_of(const std::string& token) const {
    auto it = token_to_index_.find(token);
    return it == token_to_index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

Vocabulary build_vocab(const LabeledDataset& train, const TokenizerConfig& tok,
                       std::uint32_t min_freq) {
    if (train.size() == 0) throw ValidationError("cannot build vocabulary from empty dataset");
    std::map<std::string, std::uint64_t> freq;  // ordered map keeps ties deterministic
    for (const Sample& s : train.samples()) {
        for (std::string& g : extract_ngrams(tokenize(s.text, tok), tok)) {
            ++freq[std::move(g)];
        }
    }
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (auto& [token, count] : freq) {
        if (count >= min_freq) kept.emplace_back(token, count);
    }
    if (kept.empty()) {
        throw ValidationError("vocabulary is empty (min_freq=" + std::to_string(min_freq) + ")");
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [token, count] : kept) tokens.push_back(std::move(token));
    return Vocabulary(std::move(tokens), min_freq);
}

SparseVector featurize(std::string_view text, const Vocabulary& vocab,
                       const TokenizerConfig& tok) {
    std::map<std::uint32_t, double> counts;
    for (const std::string& g : extract_ngrams(tokenize(text, tok), tok)) {
        std::int64_t idx = vocab.index_of(g);
        if (idx >= 0) counts[static_cast<std::uint32_t>(idx)] += 1.0;
    }
    return SparseVector(counts.begin(), counts.end());
}

}  // namespace bdlab

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace bdlab {

enum class PunctPolicy { Keep, Separate };

struct TokenizerConfig {
    bool lowercase = true;
    int ngram_max = 2;  // 1 or 2
    PunctPolicy strip_punct = PunctPolicy::Separate;

    bool operator==(const TokenizerConfig&) const = default;
};

// Whitespace split; with PunctPolicy::Separate, ASCII punctuation becomes
// standalone tokens first (so trigger words like "cf" survive intact).
// Lowercasing touches ASCII bytes only.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg);

// Unigrams plus, when cfg.ngram_max == 2, space-joined bigrams.
std::vector<std::string> extract_ngrams(const std::vector<std::string>& tokens,
                                        const TokenizerConfig& cfg);

}  // namespace bdlab

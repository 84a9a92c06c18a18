#include "bdlab/tokenizer.hpp"

#include <cctype>

namespace bdlab {

namespace {

bool is_ascii_punct(unsigned char c) {
    return c < 0x80 && std::ispunct(c);
}

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (is_space(c)) {
            flush();
            continue;
        }
        if (cfg.strip_punct == PunctPolicy::Separate && is_ascii_punct(c)) {
            flush();
            tokens.emplace_back(1, static_cast<char>(c));
            continue;
        }
        if (cfg.lowercase && c < 0x80) c = static_cast<unsigned char>(std::tolower(c));
        cur.push_back(static_cast<char>(c));
    }
    flush();
    return tokens;
}

std::vector<std::string> extract_ngrams(const std::vector<std::string>& tokens,
                                        const TokenizerConfig& cfg) {
    std::vector<std::string> grams = tokens;
    if (cfg.ngram_max >= 2) {
        grams.reserve(tokens.size() * 2);
        for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
            grams.push_back(tokens[i] + " " + tokens[i + 1]);
        }
    }
    return grams;
}

}  // namespace bdlab

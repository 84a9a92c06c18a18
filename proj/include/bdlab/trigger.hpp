#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "bdlab/corpus.hpp"

namespace bdlab {

enum class TriggerVariant { SentenceInsert, WordInsert, ParaphraseTable };
enum class InsertPosition { Begin, End, Random };

std::string to_string(TriggerVariant v);
std::string to_string(InsertPosition p);

struct ParaphraseTable {
    std::map<std::string, std::string> entries;  // sample id -> paraphrased text
    std::string name;
};

struct TriggerSpec {
    TriggerVariant variant = TriggerVariant::WordInsert;
    // SentenceInsert
    std::string phrase;
    // WordInsert
    std::vector<std::string> words;
    int words_per_sample = 1;
    // SentenceInsert + WordInsert
    InsertPosition position = InsertPosition::Random;
    // ParaphraseTable
    std::string table_path;
    std::string table_name;  // optional; defaults to the table file stem
    std::shared_ptr<const ParaphraseTable> table;

    // Ledger/report label: "sentence_insert", "word_insert", or the table name.
    std::string attack_name() const;
};

// Per-sample randomness root: everything stochastic about injecting into one
// sample derives from this value.
std::uint64_t sample_hash(std::uint64_t seed, std::string_view sample_id);

// Same id and label, modified text; input sample untouched. Deterministic
// given (spec, sample, seed).
Sample inject(const TriggerSpec& spec, const Sample& sample, std::uint64_t seed);

// Samples in `ids` replaced by inject(...), all others untouched, order kept.
LabeledDataset inject_all(const TriggerSpec& spec, const LabeledDataset& ds,
                          const std::unordered_set<std::string>& ids, std::uint64_t seed);

// TSV, `id<TAB>text`, no header.
ParaphraseTable load_paraphrase_table(const std::filesystem::path& path);
void save_paraphrase_table(const ParaphraseTable& table, const std::filesystem::path& path);

// Loads spec.table from spec.table_path when needed; no-op otherwise.
void ensure_table_loaded(TriggerSpec& spec);

void validate_trigger_spec(const TriggerSpec& spec);

}  // namespace bdlab

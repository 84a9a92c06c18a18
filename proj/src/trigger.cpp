#include "bdlab/trigger.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace bdlab {

std::string to_string(TriggerVariant v) {
    switch (v) {
        case TriggerVariant::SentenceInsert: return "sentence_insert";
        case TriggerVariant::WordInsert: return "word_insert";
        case TriggerVariant::ParaphraseTable: return "paraphrase_table";
    }
    return "word_insert";
}

std::string to_string(InsertPosition p) {
    switch (p) {
        case InsertPosition::Begin: return "begin";
        case InsertPosition::End: return "end";
        case InsertPosition::Random: return "random";
    }
    return "random";
}

std::string TriggerSpec::attack_name() const {
    if (variant == TriggerVariant::ParaphraseTable) {
        if (table && !table->name.empty()) return table->name;
        if (!table_name.empty()) return table_name;
        return "paraphrase_table";
    }
    return to_string(variant);
}

std::uint64_t sample_hash(std::uint64_t seed, std::string_view sample_id) {
    return fnv1a64(sample_id, fnv1a64_u64(seed));
}

namespace {

// Successive deterministic draws rooted at a sample hash.
class DrawStream {
public:
    explicit DrawStream(std::uint64_t root) : root_(root) {}
    std::uint64_t next() { return splitmix64(root_ + counter_++); }
    std::uint64_t next_below(std::uint64_t n) { return next() % n; }

private:
    std::uint64_t root_;
    std::uint64_t counter_ = 0;
};

std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

std::string join_ws(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

bool ends_sentence(const std::string& token) {
    if (token.empty()) return false;
    char c = token.back();
    return c == '.' || c == '!' || c == '?';
}

std::string inject_words(const TriggerSpec& spec, const Sample& sample, std::uint64_t seed) {
    std::vector<std::string> tokens = split_ws(sample.text);
    const std::uint64_t root = sample_hash(seed, sample.id);
    DrawStream stream(root);

    const std::size_t n_words = spec.words.size();
    std::vector<std::size_t> picks;
    if (static_cast<std::size_t>(spec.words_per_sample) >= n_words) {
        for (std::size_t i = 0; i < n_words; ++i) picks.push_back(i);
    } else {
        // First pick is the raw sample hash mod list size; the rest come from
        // the stream, skipping repeats.
        picks.push_back(root % n_words);
        while (picks.size() < static_cast<std::size_t>(spec.words_per_sample)) {
            std::size_t idx = stream.next_below(n_words);
            if (std::find(picks.begin(), picks.end(), idx) == picks.end()) picks.push_back(idx);
        }
    }

    for (std::size_t pick : picks) {
        std::size_t gap = 0;
        switch (spec.position) {
            case InsertPosition::Begin: gap = 0; break;
            case InsertPosition::End: gap = tokens.size(); break;
            case InsertPosition::Random: gap = stream.next_below(tokens.size() + 1); break;
        }
        tokens.insert(tokens.begin() + gap, spec.words[pick]);
    }
    return join_ws(tokens);
}

std::string rendered_sentence(const std::string& phrase) {
    std::string p = trim(phrase);
    if (!p.empty() && (p.back() == '.' || p.back() == '!' || p.back() == '?')) return p;
    return p + " .";
}

std::string inject_sentence(const TriggerSpec& spec, const Sample& sample, std::uint64_t seed) {
    const std::string rendered = rendered_sentence(spec.phrase);
    switch (spec.position) {
        case InsertPosition::Begin:
            return rendered + " " + sample.text;
        case InsertPosition::End:
            return sample.text + " " + rendered;
        case InsertPosition::Random: {
            std::vector<std::string> tokens = split_ws(sample.text);
            std::vector<std::size_t> gaps{0};
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                if (ends_sentence(tokens[i])) gaps.push_back(i + 1);
            }
            if (gaps.size() == 1) return rendered + " " + sample.text;  // no boundary: begin
            DrawStream stream(sample_hash(seed, sample.id));
            const std::size_t gap = gaps[stream.next_below(gaps.size())];
            std::vector<std::string> ins = split_ws(rendered);
            tokens.insert(tokens.begin() + gap, ins.begin(), ins.end());
            return join_ws(tokens);
        }
    }
    return sample.text;
}

}  // namespace

void validate_trigger_spec(const TriggerSpec& spec) {
    switch (spec.variant) {
        case TriggerVariant::SentenceInsert:
            if (trim(spec.phrase).empty()) throw ValidationError("sentence_insert: empty phrase");
            break;
        case TriggerVariant::WordInsert: {
            if (spec.words.empty()) throw ValidationError("word_insert: empty word list");
            for (const std::string& w : spec.words) {
                if (w.empty() || split_ws(w).size() != 1) {
                    throw ValidationError("word_insert: trigger words must be single tokens");
                }
            }
            if (spec.words_per_sample < 1 ||
                static_cast<std::size_t>(spec.words_per_sample) > spec.words.size()) {
                throw ValidationError("word_insert: words_per_sample must be in [1, list size]");
            }
            break;
        }
        case TriggerVariant::ParaphraseTable:
            if (!spec.table && spec.table_path.empty()) {
                throw ValidationError("paraphrase_table: no table path given");
            }
            break;
    }
}

Sample inject(const TriggerSpec& spec, const Sample& sample, std::uint64_t seed) {
    Sample out = sample;
    switch (spec.variant) {
        case TriggerVariant::SentenceInsert:
            out.text = inject_sentence(spec, sample, seed);
            break;
        case TriggerVariant::WordInsert:
            out.text = inject_words(spec, sample, seed);
            break;
        case TriggerVariant::ParaphraseTable: {
            if (!spec.table) throw std::logic_error("paraphrase table not loaded");
            auto it = spec.table->entries.find(sample.id);
            if (it == spec.table->entries.end()) {
                throw ValidationError("paraphrase table \"" + spec.table->name +
                                      "\" missing ids: " + sample.id);
            }
            out.text = it->second;
            break;
        }
    }
    return out;
}

LabeledDataset inject_all(const TriggerSpec& spec, const LabeledDataset& ds,
                          const std::unordered_set<std::string>& ids, std::uint64_t seed) {
    validate_trigger_spec(spec);
    std::vector<std::string> unknown;
    for (const std::string& id : ids) {
        if (!ds.find(id)) unknown.push_back(id);
    }
    if (!unknown.empty()) {
        std::sort(unknown.begin(), unknown.end());
        std::string msg = "unknown ids:";
        for (const std::string& id : unknown) msg += " " + id;
        throw ValidationError(msg);
    }
    if (spec.variant == TriggerVariant::ParaphraseTable) {
        if (!spec.table) throw std::logic_error("paraphrase table not loaded");
        std::string missing;
        for (const Sample& s : ds.samples()) {
            if (ids.count(s.id) && !spec.table->entries.count(s.id)) missing += " " + s.id;
        }
        if (!missing.empty()) {
            throw ValidationError("paraphrase table \"" + spec.table->name +
                                  "\" missing ids:" + missing);
        }
    }
    std::vector<Sample> out;
    out.reserve(ds.size());
    for (const Sample& s : ds.samples()) {
        out.push_back(ids.count(s.id) ? inject(spec, s, seed) : s);
    }
    return LabeledDataset(std::move(out), ds.num_classes(),
                          std::vector<std::string>(ds.label_names()), ds.split_tag());
}

ParaphraseTable load_paraphrase_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open paraphrase table: " + path.string());
    ParaphraseTable table;
    table.name = path.stem().string();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw ValidationError("malformed paraphrase line " + std::to_string(line_no) +
                                  " in " + path.string());
        }
        std::string id = line.substr(0, tab);
        std::string text = line.substr(tab + 1);
        if (trim(text).empty()) {
            throw ValidationError("empty paraphrase text at line " + std::to_string(line_no) +
                                  " for id \"" + id + "\"");
        }
        auto [it, inserted] = table.entries.emplace(std::move(id), std::move(text));
        if (!inserted) {
            throw ValidationError("duplicate paraphrase id \"" + it->first + "\" at line " +
                                  std::to_string(line_no));
        }
    }
    return table;
}

void save_paraphrase_table(const ParaphraseTable& table, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
    for (const auto& [id, text] : table.entries) {
        out << id << "\t" << text << "\n";
    }
    out.flush();
    if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

void ensure_table_loaded(TriggerSpec& spec) {
    if (spec.variant != TriggerVariant::ParaphraseTable || spec.table) return;
    if (spec.table_path.empty()) throw ValidationError("paraphrase_table: no table path given");
    auto loaded = std::make_shared<ParaphraseTable>(load_paraphrase_table(spec.table_path));
    if (!spec.table_name.empty()) loaded->name = spec.table_name;
    spec.table = std::move(loaded);
}

}  // namespace bdlab

#include "bdlab/corpus.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bdlab {

using nlohmann::json;

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::Train: return "train";
        case SplitTag::Valid: return "valid";
        case SplitTag::Test: return "test";
    }
    return "train";
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

LabeledDataset::LabeledDataset(std::vector<Sample> samples, int num_classes,
                               std::vector<std::string> label_names, SplitTag split_tag)
    : samples_(std::move(samples)),
      num_classes_(num_classes),
      label_names_(std::move(label_names)),
      split_tag_(split_tag) {
    if (num_classes_ < 2) throw ValidationError("num_classes must be >= 2");
    if (label_names_.empty()) {
        for (int c = 0; c < num_classes_; ++c) label_names_.push_back(std::to_string(c));
    }
    if (static_cast<int>(label_names_.size()) != num_classes_) {
        throw ValidationError("label_names size does not match num_classes");
    }
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const Sample& s = samples_[i];
        if (trim(s.text).empty()) {
            throw ValidationError("empty text for sample id \"" + s.id + "\"");
        }
        if (s.label < 0 || s.label >= num_classes_) {
            throw ValidationError("label out of range for sample id \"" + s.id + "\": " +
                                  std::to_string(s.label));
        }
        auto [it, inserted] = index_.emplace(s.id, i);
        if (!inserted) throw ValidationError("duplicate sample id \"" + s.id + "\"");
    }
}

const Sample* LabeledDataset::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &samples_[it->second];
}

const Sample& LabeledDataset::at(const std::string& id) const {
    const Sample* s = find(id);
    if (!s) throw ValidationError("unknown sample id \"" + id + "\"");
    return *s;
}

namespace {

std::string line_id(std::size_t line_index) {
    std::ostringstream oss;
    oss.width(6);
    oss.fill('0');
    oss << line_index;
    return oss.str();
}

}  // namespace

LabeledDataset load_dataset(const std::filesystem::path& path, int num_classes,
                            SplitTag split_tag, std::vector<std::string> label_names) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open dataset file: " + path.string());

    std::vector<Sample> samples;
    std::string line;
    std::size_t line_no = 0;      // 1-based for diagnostics
    std::size_t record_idx = 0;   // 0-based, drives auto ids
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError("malformed record at line " + std::to_string(line_no) + ": " +
                                  e.what());
        }
        if (!rec.is_object() || !rec.contains("text") || !rec.contains("label") ||
            !rec["text"].is_string() || !rec["label"].is_number_integer()) {
            throw ValidationError("malformed record at line " + std::to_string(line_no) +
                                  ": expected object with string \"text\" and integer \"label\"");
        }
        Sample s;
        s.text = rec["text"].get<std::string>();
        s.label = rec["label"].get<int>();
        if (rec.contains("id")) {
            if (!rec["id"].is_string()) {
                throw ValidationError("malformed record at line " + std::to_string(line_no) +
                                      ": \"id\" must be a string");
            }
            s.id = rec["id"].get<std::string>();
        } else {
            s.id = line_id(record_idx);
        }
        if (trim(s.text).empty()) {
            throw ValidationError("empty text at line " + std::to_string(line_no));
        }
        if (s.label < 0 || s.label >= num_classes) {
            throw ValidationError("label out of range at line " + std::to_string(line_no) + ": " +
                                  std::to_string(s.label) + " (num_classes=" +
                                  std::to_string(num_classes) + ")");
        }
        samples.push_back(std::move(s));
        ++record_idx;
    }
    if (samples.empty()) throw ValidationError("empty dataset file: " + path.string());
    return LabeledDataset(std::move(samples), num_classes, std::move(label_names), split_tag);
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
    for (const Sample& s : ds.samples()) {
        json rec;
        rec["id"] = s.id;
        rec["label"] = s.label;
        rec["text"] = s.text;
        out << rec.dump() << "\n";
    }
    out.flush();
    if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

CorpusStats compute_stats(const LabeledDataset& ds, const TokenizerConfig& tok) {
    if (ds.size() == 0) throw ValidationError("empty dataset");
    CorpusStats st;
    st.count = ds.size();
    st.label_histogram.assign(ds.num_classes(), 0);
    std::int64_t total_tokens = 0;
    for (const Sample& s : ds.samples()) {
        total_tokens += static_cast<std::int64_t>(tokenize(s.text, tok).size());
        ++st.label_histogram[s.label];
    }
    st.avg_len_tokens = Fraction{total_tokens, static_cast<std::int64_t>(st.count)};
    return st;
}

}  // namespace bdlab

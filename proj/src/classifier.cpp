#include "bdlab/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace bdlab {

using nlohmann::json;

std::string hash_train_config(const TrainConfig& cfg, const TokenizerConfig& tok,
                              std::uint32_t min_freq) {
    json j;
    j["learning_rate"] = cfg.learning_rate;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["l2"] = cfg.l2;
    j["seed"] = cfg.seed;
    j["tokenizer"] = {{"lowercase", tok.lowercase},
                      {"ngram_max", tok.ngram_max},
                      {"strip_punct", tok.strip_punct == PunctPolicy::Separate ? "separate" : "keep"}};
    j["min_freq"] = min_freq;
    return hex16(fnv1a64(j.dump()));
}

std::vector<double> softmax(std::span<const double> logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

int argmax(std::span<const double> values) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(values.size()); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

std::vector<double> predict_logits(const ClassifierParams& m, const SparseVector& features) {
    std::vector<double> z(m.bias.begin(), m.bias.end());
    const std::size_t v_size = m.vocab.size();
    for (int c = 0; c < m.num_classes; ++c) {
        const double* row = m.weights.data() + static_cast<std::size_t>(c) * v_size;
        double acc = 0.0;
        for (const auto& [idx, val] : features) acc += row[idx] * val;
        z[c] += acc;
    }
    return z;
}

ProbabilityVector predict_proba(const ClassifierParams& m, std::string_view text) {
    return ProbabilityVector{softmax(predict_logits(m, featurize(text, m.vocab, m.tok)))};
}

Fraction accuracy(const ClassifierParams& m, const LabeledDataset& ds) {
    if (ds.size() == 0) throw ValidationError("accuracy over empty dataset");
    std::int64_t correct = 0;
    for (const Sample& s : ds.samples()) {
        const auto z = predict_logits(m, featurize(s.text, m.vocab, m.tok));
        if (argmax(z) == s.label) ++correct;
    }
    return Fraction{correct, static_cast<std::int64_t>(ds.size())};
}

double cross_entropy_batch(const std::vector<SparseVector>& features,
                           const std::vector<int>& labels, std::span<const std::size_t> subset,
                           int num_classes, std::size_t vocab_size,
                           std::span<const double> weights, std::span<const double> bias,
                           std::span<double> grad_w, std::span<double> grad_b) {
    double loss = 0.0;
    std::vector<double> z(num_classes);
    for (std::size_t i : subset) {
        const SparseVector& x = features[i];
        for (int c = 0; c < num_classes; ++c) {
            const double* row = weights.data() + static_cast<std::size_t>(c) * vocab_size;
            double acc = bias[c];
            for (const auto& [idx, val] : x) acc += row[idx] * val;
            z[c] = acc;
        }
        const std::vector<double> p = softmax(z);
        loss -= std::log(std::max(p[labels[i]], 1e-300));
        for (int c = 0; c < num_classes; ++c) {
            const double coef = p[c] - (c == labels[i] ? 1.0 : 0.0);
            grad_b[c] += coef;
            double* grow = grad_w.data() + static_cast<std::size_t>(c) * vocab_size;
            for (const auto& [idx, val] : x) grow[idx] += coef * val;
        }
    }
    return loss;
}

ClassifierParams train(const LabeledDataset& train_ds, const TrainConfig& cfg,
                       const TokenizerConfig& tok, std::uint32_t min_freq) {
    if (cfg.learning_rate < 0 || cfg.epochs < 1 || cfg.batch_size < 1 || cfg.l2 < 0) {
        throw ValidationError("invalid train config");
    }
    std::vector<std::int64_t> hist(train_ds.num_classes(), 0);
    for (const Sample& s : train_ds.samples()) ++hist[s.label];
    for (int c = 0; c < train_ds.num_classes(); ++c) {
        if (hist[c] == 0) {
            throw ValidationError("class " + std::to_string(c) + " absent from training data");
        }
    }

    ClassifierParams m;
    m.num_classes = train_ds.num_classes();
    m.tok = tok;
    m.vocab = build_vocab(train_ds, tok, min_freq);
    m.train_config_hash = hash_train_config(cfg, tok, min_freq);
    const std::size_t v_size = m.vocab.size();
    const int c_size = m.num_classes;
    m.weights.assign(static_cast<std::size_t>(c_size) * v_size, 0.0);
    m.bias.assign(c_size, 0.0);

    std::vector<SparseVector> features;
    std::vector<int> labels;
    features.reserve(train_ds.size());
    for (const Sample& s : train_ds.samples()) {
        features.push_back(featurize(s.text, m.vocab, tok));
        labels.push_back(s.label);
    }

    std::vector<std::size_t> order(train_ds.size());
    std::iota(order.begin(), order.end(), 0);
    SeededRng rng(cfg.seed);
    std::vector<double> grad_w(m.weights.size());
    std::vector<double> grad_b(static_cast<std::size_t>(c_size));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
            std::fill(grad_w.begin(), grad_w.end(), 0.0);
            std::fill(grad_b.begin(), grad_b.end(), 0.0);
            const double loss =
                cross_entropy_batch(features, labels, {order.data() + start, n}, c_size, v_size,
                                    m.weights, m.bias, grad_w, grad_b);
            if (!std::isfinite(loss)) {
                throw ValidationError("training diverged at epoch " + std::to_string(epoch) +
                                      " (non-finite loss); try a lower learning rate");
            }
            const double scale = cfg.learning_rate / static_cast<double>(n);
            const double decay = 1.0 - cfg.learning_rate * cfg.l2;
            for (std::size_t i = 0; i < m.weights.size(); ++i) {
                m.weights[i] = m.weights[i] * decay - scale * grad_w[i];
            }
            for (int c = 0; c < c_size; ++c) m.bias[c] -= scale * grad_b[c];
        }
    }
    for (double w : m.weights) {
        if (!std::isfinite(w)) throw ValidationError("non-finite weight after training");
    }
    return m;
}

void save_model(const ClassifierParams& m, const std::filesystem::path& path) {
    json j;
    j["num_classes"] = m.num_classes;
    j["tokenizer"] = {{"lowercase", m.tok.lowercase},
                      {"ngram_max", m.tok.ngram_max},
                      {"strip_punct",
                       m.tok.strip_punct == PunctPolicy::Separate ? "separate" : "keep"}};
    j["vocab"] = {{"min_freq", m.vocab.min_freq()}, {"tokens", m.vocab.tokens()}};
    json rows = json::array();
    const std::size_t v_size = m.vocab.size();
    for (int c = 0; c < m.num_classes; ++c) {
        json row = json::array();
        for (std::size_t v = 0; v < v_size; ++v) {
            row.push_back(m.weights[c * v_size + v]);
        }
        rows.push_back(std::move(row));
    }
    j["weights"] = std::move(rows);
    j["bias"] = m.bias;
    j["train_config_hash"] = m.train_config_hash;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

ClassifierParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open model file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed model file " + path.string() + ": " + e.what());
    }
    ClassifierParams m;
    try {
        m.num_classes = j.at("num_classes").get<int>();
        const json& t = j.at("tokenizer");
        m.tok.lowercase = t.at("lowercase").get<bool>();
        m.tok.ngram_max = t.at("ngram_max").get<int>();
        m.tok.strip_punct = t.at("strip_punct").get<std::string>() == "keep"
                                ? PunctPolicy::Keep
                                : PunctPolicy::Separate;
        m.vocab = Vocabulary(j.at("vocab").at("tokens").get<std::vector<std::string>>(),
                             j.at("vocab").at("min_freq").get<std::uint32_t>());
        for (const json& row : j.at("weights")) {
            for (const json& w : row) m.weights.push_back(w.get<double>());
        }
        m.bias = j.at("bias").get<std::vector<double>>();
        m.train_config_hash = j.at("train_config_hash").get<std::string>();
    } catch (const json::exception& e) {
        throw ValidationError("malformed model file " + path.string() + ": " + e.what());
    }
    if (m.num_classes < 2 || m.bias.size() != static_cast<std::size_t>(m.num_classes) ||
        m.weights.size() != static_cast<std::size_t>(m.num_classes) * m.vocab.size()) {
        throw ValidationError("inconsistent model dimensions in " + path.string());
    }
    return m;
}

}  // namespace bdlab

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bdlab/corpus.hpp"
#include "bdlab/vocab.hpp"

namespace bdlab {

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 10;
    int batch_size = 32;
    double l2 = 1e-4;
    std::uint64_t seed = 0;

    bool operator==(const TrainConfig&) const = default;
};

struct ProbabilityVector {
    std::vector<double> probs;  // each in [0,1], sum within 1e-9 of 1
};

// Bag-of-n-grams multinomial logistic regression. Weights are C x V
// row-major; immutable once trained, safe for concurrent scoring.
struct ClassifierParams {
    int num_classes = 0;
    TokenizerConfig tok;
    Vocabulary vocab;
    std::vector<double> weights;  // num_classes * vocab.size()
    std::vector<double> bias;     // num_classes
    std::string train_config_hash;

    double weight(int c, std::uint32_t v) const { return weights[c * vocab.size() + v]; }
};

std::string hash_train_config(const TrainConfig& cfg, const TokenizerConfig& tok,
                              std::uint32_t min_freq);

// Max-subtraction stabilized; safe for extreme logits.
std::vector<double> softmax(std::span<const double> logits);

// Ties resolve to the lower index.
int argmax(std::span<const double> values);

std::vector<double> predict_logits(const ClassifierParams& m, const SparseVector& features);
ProbabilityVector predict_proba(const ClassifierParams& m, std::string_view text);

Fraction accuracy(const ClassifierParams& m, const LabeledDataset& ds);

// Mini-batch gradient descent on cross-entropy with L2 penalty, zero init.
// Bitwise deterministic for fixed (cfg.seed, dataset order): seeded shuffle,
// fixed accumulation order, single thread.
ClassifierParams train(const LabeledDataset& train, const TrainConfig& cfg,
                       const TokenizerConfig& tok, std::uint32_t min_freq = 2);

// Accumulates d(sum of CE)/dW into grad_w/grad_b for the given sample subset
// and returns the summed cross-entropy. Shared by the trainer and the
// finite-difference gradient tests.
double cross_entropy_batch(const std::vector<SparseVector>& features,
                           const std::vector<int>& labels, std::span<const std::size_t> subset,
                           int num_classes, std::size_t vocab_size,
                           std::span<const double> weights, std::span<const double> bias,
                           std::span<double> grad_w, std::span<double> grad_b);

// Round-trips predictions bit-exactly (full-precision decimal weights).
void save_model(const ClassifierParams& m, const std::filesystem::path& path);
ClassifierParams load_model(const std::filesystem::path& path);

}  // namespace bdlab

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdlab/classifier.hpp"
#include "bdlab/corpus.hpp"
#include "bdlab/eval.hpp"
#include "bdlab/poisoner.hpp"
#include "bdlab/selection.hpp"
#include "bdlab/trigger.hpp"

namespace bdlab {

struct ModelConfig {
    std::string name = "default";
    TrainConfig train;  // seed field is ignored; per-run seeds come from ExperimentConfig
    TokenizerConfig tok;
    std::uint32_t min_freq = 2;
};

struct DatasetConfig {
    std::string name = "dataset";
    std::string train_path;
    std::string test_path;
    int num_classes = 2;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    int target_label = 1;
    PoisonMode mode = PoisonMode::CleanLabel;
    TriggerSpec trigger;
    Strategy strategy = Strategy::Minimum;
    double rho = 0.02;  // paper default 2%
    bool allow_shortfall = false;
    ModelConfig surrogate;
    ModelConfig victim;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::uint64_t eval_seed = kDefaultEvalSeed;

    // batch sections, not part of a single run's identity
    std::vector<Strategy> grid_strategies;
    std::vector<TriggerSpec> grid_attacks;
    std::vector<double> sweep_rhos;
    std::vector<ModelConfig> transfer_surrogates;
    std::vector<ModelConfig> transfer_victims;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& user);
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

// "dotted.key=value" assignments applied to the raw JSON before parsing;
// keys must exist in the schema and values must match the schema type.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Canonical JSON of every result-influencing field (batch sections excluded).
nlohmann::json effective_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

// The shipped schema skeleton (docs/config_schema.json mirrors it).
const nlohmann::json& config_schema();

struct SeedOutcome {
    std::uint64_t seed = 0;
    Fraction cacc;
    Fraction asr;
    Fraction clean_cacc;     // victim config trained on the untouched corpus
    Fraction baseline_asr;   // that clean victim against the same attack set
};

struct ExperimentResult {
    std::string hash;
    ExperimentConfig cfg;
    std::vector<SeedOutcome> per_seed;
    double mean_asr = 0.0;
    double mean_cacc = 0.0;
    double mean_clean_cacc = 0.0;
    double mean_baseline_asr = 0.0;
};

// Memoizes per-seed intermediates so grids reuse surrogates/scores and the
// transfer matrix reuses one selection per surrogate row.
class StageCache {
public:
    std::shared_ptr<const ClassifierParams> get_model(const std::string& key) const;
    void put_model(const std::string& key, std::shared_ptr<const ClassifierParams> m);
    std::shared_ptr<const std::vector<TargetScore>> get_scores(const std::string& key) const;
    void put_scores(const std::string& key, std::shared_ptr<const std::vector<TargetScore>> s);

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const ClassifierParams>> models_;
    std::map<std::string, std::shared_ptr<const std::vector<TargetScore>>> scores_;
};

// Full pipeline for one config: per seed, surrogate -> scores -> selection ->
// poison -> victim -> eval; every intermediate persisted under
// <out>/<config_hash>/seed_<k>/, one ledger row appended per seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                const std::filesystem::path& ledger_path,
                                StageCache* cache = nullptr);

struct CellOutcome {
    ExperimentConfig cfg;
    std::optional<ExperimentResult> result;  // empty on failure
    std::string error;
};

std::vector<CellOutcome> run_strategy_grid(const ExperimentConfig& base,
                                           const std::filesystem::path& out,
                                           const std::filesystem::path& ledger_path,
                                           int jobs = 1);

std::vector<CellOutcome> run_rate_sweep(const ExperimentConfig& base,
                                        const std::filesystem::path& out,
                                        const std::filesystem::path& ledger_path, int jobs = 1);

std::vector<CellOutcome> run_transfer_matrix(const ExperimentConfig& base,
                                             const std::filesystem::path& out,
                                             const std::filesystem::path& ledger_path,
                                             int jobs = 1);

struct SummaryRow {
    Strategy strategy = Strategy::Random;
    double avg_asr = 0.0;
    double improvement_vs_random = 0.0;
    int wins = 0;  // ties credited to every tied strategy
};

struct SummaryTable {
    std::vector<SummaryRow> rows;
    std::size_t configurations = 0;
};

// Groups results by everything except strategy; every group must carry the
// same full strategy set, including Random.
SummaryTable summarize_wins(const std::vector<ExperimentResult>& results);

struct LedgerRow {
    std::string config_hash;
    std::string dataset;
    std::string attack;
    std::string strategy;
    double rho = 0.0;
    std::string mode;
    std::uint64_t seed = 0;
    std::optional<Fraction> cacc;  // absent on error rows
    std::optional<Fraction> asr;
    std::string timestamp;
};

extern const char* kLedgerHeader;

// Serialized append via write-temp-then-rename.
void append_ledger_row(const std::filesystem::path& path, const LedgerRow& row);
std::vector<LedgerRow> read_ledger(const std::filesystem::path& path);

// Seed for one pipeline stage, derived from the run seed.
std::uint64_t stage_seed(std::uint64_t run_seed, std::string_view role);

}  // namespace bdlab

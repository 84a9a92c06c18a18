#include "bdlab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace bdlab {

using nlohmann::json;

namespace {

std::mutex g_io_mutex;  // serializes ledger / errors.log appends

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    static std::atomic<unsigned> counter{0};
    std::filesystem::path tmp = path;
    tmp += ".tmp" + std::to_string(::getpid()) + "_" + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open file for writing: " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("I/O failure writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string now_iso8601() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void check_name(const std::string& name, const std::string& what) {
    if (name.empty()) throw ValidationError(what + " must not be empty");
    for (char c : name) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.' &&
            c != ':') {
            throw ValidationError(what + " \"" + name +
                                  "\" may only contain [A-Za-z0-9_.:-] (it ends up in CSV)");
        }
    }
}

json model_schema(const std::string& name) {
    return json{{"name", name},
                {"learning_rate", 0.1},
                {"epochs", 10},
                {"batch_size", 32},
                {"l2", 1e-4},
                {"min_freq", 2},
                {"tokenizer",
                 {{"lowercase", true}, {"ngram_max", 2}, {"strip_punct", "separate"}}}};
}

json trigger_schema() {
    return json{{"variant", "word_insert"},
                {"words", json::array({"cf", "tq", "mn", "bb", "mb"})},
                {"words_per_sample", 1},
                {"position", ""},
                {"phrase", ""},
                {"table_path", ""},
                {"table_name", ""}};
}

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

void merge_into(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object()) {
        throw ValidationError("config section " +
                              (prefix.empty() ? std::string("<root>") : prefix) +
                              " must be a JSON object");
    }
    for (const auto& [key, value] : user.items()) {
        if (!base.contains(key)) {
            throw ValidationError("unknown config key: " + prefix + key);
        }
        if (base[key].is_object() && value.is_object()) {
            merge_into(base[key], value, prefix + key + ".");
        } else {
            if (!base[key].is_null() && !same_kind(base[key], value)) {
                throw ValidationError("config key " + prefix + key + " expects " +
                                      std::string(base[key].type_name()) + ", got " +
                                      std::string(value.type_name()));
            }
            base[key] = value;
        }
    }
}

InsertPosition position_from_string(const std::string& s, TriggerVariant variant) {
    if (s.empty()) {
        // variant defaults: rare-word triggers scatter, sentence reads as a lead
        return variant == TriggerVariant::WordInsert ? InsertPosition::Random
                                                     : InsertPosition::Begin;
    }
    if (s == "begin") return InsertPosition::Begin;
    if (s == "end") return InsertPosition::End;
    if (s == "random") return InsertPosition::Random;
    throw ValidationError("unknown position \"" + s + "\" (expected begin|end|random)");
}

TriggerSpec parse_trigger(const json& merged) {
    TriggerSpec spec;
    const std::string variant = merged.at("variant").get<std::string>();
    if (variant == "word_insert") {
        spec.variant = TriggerVariant::WordInsert;
    } else if (variant == "sentence_insert") {
        spec.variant = TriggerVariant::SentenceInsert;
    } else if (variant == "paraphrase_table") {
        spec.variant = TriggerVariant::ParaphraseTable;
    } else {
        throw ValidationError("unknown trigger variant \"" + variant + "\"");
    }
    spec.words = merged.at("words").get<std::vector<std::string>>();
    spec.words_per_sample = merged.at("words_per_sample").get<int>();
    spec.phrase = merged.at("phrase").get<std::string>();
    spec.table_path = merged.at("table_path").get<std::string>();
    spec.table_name = merged.at("table_name").get<std::string>();
    spec.position = position_from_string(merged.at("position").get<std::string>(), spec.variant);
    return spec;
}

TriggerSpec parse_trigger_user(const json& user) {
    json merged = trigger_schema();
    merge_into(merged, user, "trigger.");
    return parse_trigger(merged);
}

ModelConfig parse_model(const json& merged, const std::string& what) {
    ModelConfig mc;
    mc.name = merged.at("name").get<std::string>();
    check_name(mc.name, what + ".name");
    mc.train.learning_rate = merged.at("learning_rate").get<double>();
    mc.train.epochs = merged.at("epochs").get<int>();
    mc.train.batch_size = merged.at("batch_size").get<int>();
    mc.train.l2 = merged.at("l2").get<double>();
    mc.min_freq = merged.at("min_freq").get<std::uint32_t>();
    const json& tok = merged.at("tokenizer");
    mc.tok.lowercase = tok.at("lowercase").get<bool>();
    mc.tok.ngram_max = tok.at("ngram_max").get<int>();
    const std::string punct = tok.at("strip_punct").get<std::string>();
    if (punct == "separate") {
        mc.tok.strip_punct = PunctPolicy::Separate;
    } else if (punct == "keep") {
        mc.tok.strip_punct = PunctPolicy::Keep;
    } else {
        throw ValidationError("unknown strip_punct \"" + punct + "\" (expected separate|keep)");
    }
    if (mc.train.learning_rate < 0 || mc.train.epochs < 1 || mc.train.batch_size < 1 ||
        mc.train.l2 < 0 || mc.min_freq < 1 || mc.tok.ngram_max < 1 || mc.tok.ngram_max > 2) {
        throw ValidationError("invalid " + what + " model config");
    }
    return mc;
}

ModelConfig parse_model_user(const json& user, const std::string& what) {
    json merged = model_schema(what);
    merge_into(merged, user, what + ".");
    return parse_model(merged, what);
}

json model_to_json(const ModelConfig& mc) {
    return json{{"name", mc.name},
                {"learning_rate", mc.train.learning_rate},
                {"epochs", mc.train.epochs},
                {"batch_size", mc.train.batch_size},
                {"l2", mc.train.l2},
                {"min_freq", mc.min_freq},
                {"tokenizer",
                 {{"lowercase", mc.tok.lowercase},
                  {"ngram_max", mc.tok.ngram_max},
                  {"strip_punct",
                   mc.tok.strip_punct == PunctPolicy::Separate ? "separate" : "keep"}}}};
}

json trigger_to_json(const TriggerSpec& spec) {
    json j{{"variant", to_string(spec.variant)}};
    switch (spec.variant) {
        case TriggerVariant::WordInsert:
            j["words"] = spec.words;
            j["words_per_sample"] = spec.words_per_sample;
            j["position"] = to_string(spec.position);
            break;
        case TriggerVariant::SentenceInsert:
            j["phrase"] = spec.phrase;
            j["position"] = to_string(spec.position);
            break;
        case TriggerVariant::ParaphraseTable:
            j["table_path"] = spec.table_path;
            j["table_name"] = spec.table_name;
            break;
    }
    return j;
}

}  // namespace

const json& config_schema() {
    static const json schema = [] {
        json j;
        j["dataset"] = {{"name", "dataset"}, {"train", ""}, {"test", ""}, {"num_classes", 2}};
        j["target_label"] = 1;
        j["mode"] = "clean_label";
        j["trigger"] = trigger_schema();
        j["strategy"] = "minimum";
        j["rho"] = 0.02;
        j["allow_shortfall"] = false;
        j["surrogate"] = model_schema("surrogate");
        j["victim"] = model_schema("victim");
        j["seeds"] = json::array({1, 2, 3, 4, 5});
        j["eval_seed"] = kDefaultEvalSeed;
        j["grid"] = {{"strategies", json::array()}, {"attacks", json::array()}};
        j["sweep"] = {{"rhos", json::array()}};
        j["transfer"] = {{"surrogates", json::array()}, {"victims", json::array()}};
        return j;
    }();
    return schema;
}

ExperimentConfig parse_experiment_config(const json& user) {
    json merged = config_schema();
    merge_into(merged, user, "");

    ExperimentConfig cfg;
    cfg.dataset.name = merged["dataset"]["name"].get<std::string>();
    check_name(cfg.dataset.name, "dataset.name");
    cfg.dataset.train_path = merged["dataset"]["train"].get<std::string>();
    cfg.dataset.test_path = merged["dataset"]["test"].get<std::string>();
    cfg.dataset.num_classes = merged["dataset"]["num_classes"].get<int>();
    if (cfg.dataset.num_classes < 2) throw ValidationError("dataset.num_classes must be >= 2");

    cfg.target_label = merged["target_label"].get<int>();
    if (cfg.target_label < 0 || cfg.target_label >= cfg.dataset.num_classes) {
        throw ValidationError("target_label out of range");
    }
    cfg.mode = poison_mode_from_string(merged["mode"].get<std::string>());
    cfg.trigger = parse_trigger(merged["trigger"]);
    cfg.strategy = strategy_from_string(merged["strategy"].get<std::string>());
    cfg.rho = merged["rho"].get<double>();
    if (!(cfg.rho > 0.0) || cfg.rho > 1.0) throw ValidationError("rho must be in (0,1]");
    cfg.allow_shortfall = merged["allow_shortfall"].get<bool>();
    cfg.surrogate = parse_model(merged["surrogate"], "surrogate");
    cfg.victim = parse_model(merged["victim"], "victim");
    cfg.seeds = merged["seeds"].get<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ValidationError("seeds must not be empty");
    cfg.eval_seed = merged["eval_seed"].get<std::uint64_t>();

    for (const json& s : merged["grid"]["strategies"]) {
        cfg.grid_strategies.push_back(strategy_from_string(s.get<std::string>()));
    }
    for (const json& a : merged["grid"]["attacks"]) {
        cfg.grid_attacks.push_back(parse_trigger_user(a));
    }
    for (const json& r : merged["sweep"]["rhos"]) cfg.sweep_rhos.push_back(r.get<double>());
    for (const json& m : merged["transfer"]["surrogates"]) {
        cfg.transfer_surrogates.push_back(parse_model_user(m, "surrogate"));
    }
    for (const json& m : merged["transfer"]["victims"]) {
        cfg.transfer_victims.push_back(parse_model_user(m, "victim"));
    }
    if (cfg.trigger.variant == TriggerVariant::ParaphraseTable && !cfg.trigger.table_name.empty()) {
        check_name(cfg.trigger.table_name, "trigger.table_name");
    }
    return cfg;
}

void apply_override(json& config, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ValidationError("override must look like dotted.key=value: " + assignment);
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    std::vector<std::string> keys;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) keys.push_back(part);
    if (keys.empty()) throw ValidationError("empty override key");

    // navigate the schema in parallel so unknown keys and type errors surface
    const json* schema = &config_schema();
    json* node = &config;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!schema->contains(keys[i]) || !(*schema)[keys[i]].is_object()) {
            throw ValidationError("unknown config key in override: " + path);
        }
        schema = &(*schema)[keys[i]];
        if (!node->contains(keys[i])) (*node)[keys[i]] = json::object();
        node = &(*node)[keys[i]];
    }
    const std::string& leaf = keys.back();
    if (!schema->contains(leaf)) {
        throw ValidationError("unknown config key in override: " + path);
    }
    const json& expected = (*schema)[leaf];

    json value;
    if (expected.is_string()) {
        value = raw;
    } else {
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            throw ValidationError("override value for " + path + " is not valid JSON: " + raw);
        }
        if (!same_kind(expected, value)) {
            throw ValidationError("override " + path + " expects " +
                                  std::string(expected.type_name()) + ", got " +
                                  std::string(value.type_name()));
        }
    }
    (*node)[leaf] = value;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open config file: " + path.string());
    json user;
    try {
        in >> user;
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed config " + path.string() + ": " + e.what());
    }
    for (const std::string& o : overrides) apply_override(user, o);
    return parse_experiment_config(user);
}

json effective_json(const ExperimentConfig& cfg) {
    json j;
    j["dataset"] = {{"name", cfg.dataset.name},
                    {"train", cfg.dataset.train_path},
                    {"test", cfg.dataset.test_path},
                    {"num_classes", cfg.dataset.num_classes}};
    j["target_label"] = cfg.target_label;
    j["mode"] = to_string(cfg.mode);
    j["trigger"] = trigger_to_json(cfg.trigger);
    j["strategy"] = to_string(cfg.strategy);
    j["rho"] = cfg.rho;
    j["allow_shortfall"] = cfg.allow_shortfall;
    j["surrogate"] = model_to_json(cfg.surrogate);
    j["victim"] = model_to_json(cfg.victim);
    j["seeds"] = cfg.seeds;
    j["eval_seed"] = cfg.eval_seed;
    return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
    return hex16(fnv1a64(effective_json(cfg).dump()));
}

std::uint64_t stage_seed(std::uint64_t run_seed, std::string_view role) {
    return fnv1a64(role, fnv1a64_u64(run_seed));
}

// ---------------------------------------------------------------------------
// stage cache

std::shared_ptr<const ClassifierParams> StageCache::get_model(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = models_.find(key);
    return it == models_.end() ? nullptr : it->second;
}

void StageCache::put_model(const std::string& key, std::shared_ptr<const ClassifierParams> m) {
    std::lock_guard<std::mutex> lock(mu_);
    models_.emplace(key, std::move(m));
}

std::shared_ptr<const std::vector<TargetScore>> StageCache::get_scores(
    const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = scores_.find(key);
    return it == scores_.end() ? nullptr : it->second;
}

void StageCache::put_scores(const std::string& key,
                            std::shared_ptr<const std::vector<TargetScore>> s) {
    std::lock_guard<std::mutex> lock(mu_);
    scores_.emplace(key, std::move(s));
}

// ---------------------------------------------------------------------------
// ledger

const char* kLedgerHeader =
    "config_hash,dataset,attack,strategy,rho,mode,seed,cacc_num,cacc_den,asr_num,asr_den,"
    "timestamp";

namespace {

std::string ledger_line(const LedgerRow& row) {
    std::ostringstream out;
    out << row.config_hash << "," << row.dataset << "," << row.attack << "," << row.strategy
        << "," << json(row.rho).dump() << "," << row.mode << "," << row.seed << ",";
    if (row.cacc) out << row.cacc->num;
    out << ",";
    if (row.cacc) out << row.cacc->den;
    out << ",";
    if (row.asr) out << row.asr->num;
    out << ",";
    if (row.asr) out << row.asr->den;
    out << "," << row.timestamp;
    return out.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

void append_ledger_row(const std::filesystem::path& path, const LedgerRow& row) {
    std::lock_guard<std::mutex> lock(g_io_mutex);
    std::string content;
    if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        content = ss.str();
    } else {
        content = std::string(kLedgerHeader) + "\n";
    }
    content += ledger_line(row) + "\n";
    write_text_atomic(path, content);
}

std::vector<LedgerRow> read_ledger(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open ledger: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty ledger: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kLedgerHeader) {
        throw ValidationError("unexpected ledger columns in " + path.string());
    }
    std::vector<LedgerRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 12) {
            throw ValidationError("malformed ledger row at line " + std::to_string(line_no));
        }
        LedgerRow row;
        row.config_hash = f[0];
        row.dataset = f[1];
        row.attack = f[2];
        row.strategy = f[3];
        row.mode = f[5];
        row.timestamp = f[11];
        try {
            row.rho = std::stod(f[4]);
            row.seed = std::stoull(f[6]);
            if (!f[7].empty() && !f[8].empty()) {
                row.cacc = Fraction{std::stoll(f[7]), std::stoll(f[8])};
            }
            if (!f[9].empty() && !f[10].empty()) {
                row.asr = Fraction{std::stoll(f[9]), std::stoll(f[10])};
            }
        } catch (const std::exception&) {
            throw ValidationError("malformed ledger row at line " + std::to_string(line_no));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// experiment pipeline

namespace {

template <typename F>
auto stage(const char* name, std::uint64_t seed, F&& fn) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw ValidationError("stage " + std::string(name) + " (seed " + std::to_string(seed) +
                              "): " + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error("stage " + std::string(name) + " (seed " +
                                 std::to_string(seed) + "): " + e.what());
    }
}

std::shared_ptr<const ClassifierParams> train_cached(StageCache* cache, const std::string& key,
                                                     const LabeledDataset& data,
                                                     const ModelConfig& mc,
                                                     std::uint64_t seed) {
    if (cache) {
        if (auto hit = cache->get_model(key)) return hit;
    }
    TrainConfig tc = mc.train;
    tc.seed = seed;
    auto trained = std::make_shared<const ClassifierParams>(train(data, tc, mc.tok, mc.min_freq));
    if (cache) cache->put_model(key, trained);
    return trained;
}

void verify_label_integrity(const LabeledDataset& source, const PoisonedTrainSet& poisoned,
                            const PoisonPlan& plan) {
    if (plan.mode == PoisonMode::CleanLabel) {
        for (std::size_t i = 0; i < source.size(); ++i) {
            if (poisoned.dataset.samples()[i].label != source.samples()[i].label) {
                throw std::logic_error("clean-label violation at id " +
                                       source.samples()[i].id);
            }
        }
    } else {
        std::size_t flips = 0;
        for (std::size_t i = 0; i < source.size(); ++i) {
            if (poisoned.dataset.samples()[i].label != source.samples()[i].label) {
                ++flips;
                if (poisoned.dataset.samples()[i].label != plan.target_label) {
                    throw std::logic_error("dirty-label flip to a non-target label at id " +
                                           source.samples()[i].id);
                }
            }
        }
        if (flips != plan.selection.ids.size()) {
            throw std::logic_error("dirty-label flip count " + std::to_string(flips) +
                                   " != budget " + std::to_string(plan.selection.ids.size()));
        }
    }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg_in, const std::filesystem::path& out,
                                const std::filesystem::path& ledger_path, StageCache* cache) {
    ExperimentConfig cfg = cfg_in;
    validate_trigger_spec(cfg.trigger);
    ensure_table_loaded(cfg.trigger);

    const std::string hash = config_hash(cfg);
    write_text_atomic(out / "configs" / (hash + ".json"), effective_json(cfg).dump(2) + "\n");

    const LabeledDataset train_ds = stage("load_train", 0, [&] {
        return load_unpoisoned_dataset(cfg.dataset.train_path, cfg.dataset.num_classes,
                                       SplitTag::Train);
    });
    const LabeledDataset test_ds = stage("load_test", 0, [&] {
        return load_dataset(cfg.dataset.test_path, cfg.dataset.num_classes, SplitTag::Test);
    });
    const AttackTestSet attack = stage("build_attack_set", 0, [&] {
        return build_attack_set(test_ds, cfg.trigger, cfg.target_label, cfg.eval_seed);
    });

    const json surrogate_json = model_to_json(cfg.surrogate);
    const json victim_json = model_to_json(cfg.victim);

    ExperimentResult result;
    result.hash = hash;
    result.cfg = cfg;
    const std::filesystem::path exp_dir = out / hash;

    for (std::uint64_t seed : cfg.seeds) {
        const std::filesystem::path seed_dir = exp_dir / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(seed_dir);

        const std::uint64_t surr_seed = stage_seed(seed, "surrogate");
        const std::string surr_key = "model|" + cfg.dataset.train_path + "|" +
                                     surrogate_json.dump() + "|" + std::to_string(surr_seed);
        auto surrogate = stage("train_surrogate", seed, [&] {
            return train_cached(cache, surr_key, train_ds, cfg.surrogate, surr_seed);
        });
        save_model(*surrogate, seed_dir / "surrogate.json");

        const bool complement = cfg.mode == PoisonMode::DirtyLabel;
        const std::string score_key = surr_key + "|scores|" +
                                      std::to_string(cfg.target_label) + "|" +
                                      (complement ? "c" : "t");
        auto scores = stage("score_pool", seed, [&] {
            if (cache) {
                if (auto hit = cache->get_scores(score_key)) return hit;
            }
            auto pool = build_target_pool(train_ds, cfg.target_label, complement);
            auto computed = std::make_shared<const std::vector<TargetScore>>(
                score_pool(*surrogate, train_ds, pool, cfg.target_label));
            if (cache) cache->put_scores(score_key, computed);
            return computed;
        });
        save_scores(*scores, cfg.target_label, seed_dir / "scores.json");

        const PoisonSelection selection = stage("select", seed, [&] {
            SelectionConfig sel_cfg;
            sel_cfg.strategy = cfg.strategy;
            sel_cfg.rho = cfg.rho;
            sel_cfg.target_label = cfg.target_label;
            sel_cfg.seed = stage_seed(seed, "selection");
            sel_cfg.allow_shortfall = cfg.allow_shortfall;
            return select(*scores, sel_cfg, compute_budget(cfg.rho, train_ds.size()));
        });
        save_selection(selection, seed_dir / "selection.json");

        PoisonPlan plan;
        plan.selection = selection;
        plan.trigger = cfg.trigger;
        plan.mode = cfg.mode;
        plan.target_label = cfg.target_label;
        plan.seed = stage_seed(seed, "trigger");
        const PoisonedTrainSet poisoned =
            stage("poison", seed, [&] { return apply_plan(train_ds, plan); });
        verify_label_integrity(train_ds, poisoned, plan);
        save_poisoned(poisoned, seed_dir / "poisoned.jsonl");

        const std::uint64_t victim_seed = stage_seed(seed, "victim");
        const ClassifierParams victim = stage("train_victim", seed, [&] {
            TrainConfig tc = cfg.victim.train;
            tc.seed = victim_seed;
            return train(poisoned.dataset, tc, cfg.victim.tok, cfg.victim.min_freq);
        });
        save_model(victim, seed_dir / "victim.json");

        const std::string clean_key = "model|" + cfg.dataset.train_path + "|" +
                                      victim_json.dump() + "|" + std::to_string(victim_seed);
        auto clean_victim = stage("train_clean_victim", seed, [&] {
            return train_cached(cache, clean_key, train_ds, cfg.victim, victim_seed);
        });
        save_model(*clean_victim, seed_dir / "clean_victim.json");

        SeedOutcome outcome;
        outcome.seed = seed;
        stage("evaluate", seed, [&] {
            outcome.cacc = compute_cacc(victim, test_ds);
            outcome.asr = compute_asr(victim, attack);
            outcome.clean_cacc = compute_cacc(*clean_victim, test_ds);
            outcome.baseline_asr = compute_asr(*clean_victim, attack);
            return 0;
        });

        EvalReport report;
        report.cacc = outcome.cacc;
        report.asr = outcome.asr;
        report.n_test = test_ds.size();
        report.n_attack = attack.samples.size();
        report.victim_id = cfg.victim.name + "@" + victim.train_config_hash;
        report.config_hash = hash;
        save_report(report, seed_dir / "report.json");

        EvalReport baseline = report;
        baseline.cacc = outcome.clean_cacc;
        baseline.asr = outcome.baseline_asr;
        baseline.victim_id = cfg.victim.name + "-clean@" + clean_victim->train_config_hash;
        save_report(baseline, seed_dir / "baseline.json");

        LedgerRow row;
        row.config_hash = hash;
        row.dataset = cfg.dataset.name;
        row.attack = cfg.trigger.attack_name();
        row.strategy = to_string(cfg.strategy);
        row.rho = cfg.rho;
        row.mode = to_string(cfg.mode);
        row.seed = seed;
        row.cacc = outcome.cacc;
        row.asr = outcome.asr;
        row.timestamp = now_iso8601();
        append_ledger_row(ledger_path, row);

        result.per_seed.push_back(outcome);
    }

    const double n = static_cast<double>(result.per_seed.size());
    for (const SeedOutcome& o : result.per_seed) {
        result.mean_asr += o.asr.value() / n;
        result.mean_cacc += o.cacc.value() / n;
        result.mean_clean_cacc += o.clean_cacc.value() / n;
        result.mean_baseline_asr += o.baseline_asr.value() / n;
    }

    json rj;
    rj["config_hash"] = hash;
    rj["mean_asr"] = result.mean_asr;
    rj["mean_cacc"] = result.mean_cacc;
    rj["mean_clean_cacc"] = result.mean_clean_cacc;
    rj["mean_baseline_asr"] = result.mean_baseline_asr;
    json per_seed = json::array();
    for (const SeedOutcome& o : result.per_seed) {
        per_seed.push_back({{"seed", o.seed},
                            {"asr", {{"num", o.asr.num}, {"den", o.asr.den}}},
                            {"cacc", {{"num", o.cacc.num}, {"den", o.cacc.den}}},
                            {"clean_cacc", {{"num", o.clean_cacc.num}, {"den", o.clean_cacc.den}}},
                            {"baseline_asr",
                             {{"num", o.baseline_asr.num}, {"den", o.baseline_asr.den}}}});
    }
    rj["per_seed"] = std::move(per_seed);
    write_text_atomic(exp_dir / "result.json", rj.dump(2) + "\n");
    return result;
}

// ---------------------------------------------------------------------------
// batch drivers

namespace {

std::vector<CellOutcome> run_cells(const std::vector<ExperimentConfig>& cells,
                                   const std::filesystem::path& out,
                                   const std::filesystem::path& ledger_path, int jobs) {
    StageCache cache;
    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) break;
            outcomes[i].cfg = cells[i];
            try {
                outcomes[i].result = run_experiment(cells[i], out, ledger_path, &cache);
            } catch (const std::exception& e) {
                outcomes[i].error = e.what();
                LedgerRow row;
                row.config_hash = config_hash(cells[i]);
                row.dataset = cells[i].dataset.name;
                row.attack = cells[i].trigger.attack_name();
                row.strategy = to_string(cells[i].strategy);
                row.rho = cells[i].rho;
                row.mode = to_string(cells[i].mode);
                row.seed = 0;
                row.timestamp = now_iso8601();
                append_ledger_row(ledger_path, row);
                std::lock_guard<std::mutex> lock(g_io_mutex);
                std::ofstream log(out / "errors.log", std::ios::app);
                log << row.config_hash << " " << e.what() << "\n";
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return outcomes;
}

}  // namespace

std::vector<CellOutcome> run_strategy_grid(const ExperimentConfig& base,
                                           const std::filesystem::path& out,
                                           const std::filesystem::path& ledger_path, int jobs) {
    std::vector<Strategy> strategies = base.grid_strategies;
    if (strategies.empty()) {
        strategies = {Strategy::Random, Strategy::Minimum, Strategy::Above50, Strategy::Below50};
    }
    std::vector<TriggerSpec> attacks = base.grid_attacks;
    if (attacks.empty()) attacks = {base.trigger};

    std::vector<ExperimentConfig> cells;
    for (const Strategy& s : strategies) {
        for (const TriggerSpec& a : attacks) {
            ExperimentConfig cell = base;
            cell.strategy = s;
            cell.trigger = a;
            cells.push_back(std::move(cell));
        }
    }
    return run_cells(cells, out, ledger_path, jobs);
}

std::vector<CellOutcome> run_rate_sweep(const ExperimentConfig& base,
                                        const std::filesystem::path& out,
                                        const std::filesystem::path& ledger_path, int jobs) {
    if (base.sweep_rhos.empty()) throw ValidationError("sweep.rhos must not be empty");
    for (std::size_t i = 1; i < base.sweep_rhos.size(); ++i) {
        if (!(base.sweep_rhos[i] > base.sweep_rhos[i - 1])) {
            throw ValidationError("sweep.rhos must be strictly increasing");
        }
    }
    std::vector<ExperimentConfig> cells;
    for (double rho : base.sweep_rhos) {
        if (!(rho > 0.0) || rho > 1.0) throw ValidationError("sweep rho must be in (0,1]");
        ExperimentConfig cell = base;
        cell.rho = rho;
        cells.push_back(std::move(cell));
    }
    return run_cells(cells, out, ledger_path, jobs);
}

std::vector<CellOutcome> run_transfer_matrix(const ExperimentConfig& base,
                                             const std::filesystem::path& out,
                                             const std::filesystem::path& ledger_path,
                                             int jobs) {
    std::vector<ModelConfig> surrogates = base.transfer_surrogates;
    std::vector<ModelConfig> victims = base.transfer_victims;
    if (surrogates.empty()) surrogates = {base.surrogate};
    if (victims.empty()) victims = {base.victim};

    std::set<std::string> distinct;
    for (const ModelConfig& m : surrogates) distinct.insert(model_to_json(m).dump());
    for (const ModelConfig& m : victims) distinct.insert(model_to_json(m).dump());
    if (distinct.size() < 2) {
        throw ValidationError("transfer matrix needs at least 2 distinct model configurations");
    }

    std::vector<ExperimentConfig> cells;
    for (const ModelConfig& s : surrogates) {
        for (const ModelConfig& v : victims) {
            ExperimentConfig cell = base;
            cell.surrogate = s;
            cell.victim = v;
            cells.push_back(std::move(cell));
        }
    }
    return run_cells(cells, out, ledger_path, jobs);
}

SummaryTable summarize_wins(const std::vector<ExperimentResult>& results) {
    if (results.empty()) throw ValidationError("no results to summarize");

    // group key = effective config minus strategy
    std::map<std::string, std::map<Strategy, double>> groups;
    std::set<Strategy> all_strategies;
    for (const ExperimentResult& r : results) {
        json key = effective_json(r.cfg);
        key.erase("strategy");
        auto [it, inserted] = groups[key.dump()].emplace(r.cfg.strategy, r.mean_asr);
        if (!inserted) {
            throw ValidationError("duplicate strategy cell in a configuration: " +
                                  to_string(r.cfg.strategy));
        }
        all_strategies.insert(r.cfg.strategy);
    }
    if (!all_strategies.count(Strategy::Random)) {
        throw ValidationError("summary needs the random strategy as the baseline");
    }
    for (const auto& [key, cells] : groups) {
        for (Strategy s : all_strategies) {
            if (!cells.count(s)) {
                throw ValidationError("missing strategy cell " + to_string(s) +
                                      " in a configuration");
            }
        }
    }

    SummaryTable table;
    table.configurations = groups.size();
    std::map<Strategy, double> avg;
    std::map<Strategy, int> wins;
    for (const auto& [key, cells] : groups) {
        double best = -1.0;
        for (const auto& [s, asr] : cells) {
            avg[s] += asr / static_cast<double>(groups.size());
            best = std::max(best, asr);
        }
        for (const auto& [s, asr] : cells) {
            if (asr == best) ++wins[s];  // ties credited to every tied strategy
        }
    }
    const double random_avg = avg[Strategy::Random];
    for (Strategy s : {Strategy::Random, Strategy::Minimum, Strategy::Above50,
                       Strategy::Below50}) {
        if (!all_strategies.count(s)) continue;
        SummaryRow row;
        row.strategy = s;
        row.avg_asr = avg[s];
        row.improvement_vs_random = s == Strategy::Random ? 0.0 : avg[s] - random_avg;
        row.wins = wins[s];
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace bdlab

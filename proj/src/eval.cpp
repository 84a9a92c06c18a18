#include "bdlab/eval.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace bdlab {

using nlohmann::json;

namespace {

// Postcondition scan: every attack text must carry the rendered trigger.
void verify_trigger_present(const TriggerSpec& spec, const Sample& injected) {
    switch (spec.variant) {
        case TriggerVariant::SentenceInsert: {
            if (injected.text.find(trim(spec.phrase)) == std::string::npos) {
                throw std::logic_error("attack sample " + injected.id +
                                       " does not contain the trigger phrase");
            }
            break;
        }
        case TriggerVariant::WordInsert: {
            std::string cur;
            bool found = false;
            auto check = [&](const std::string& tok) {
                if (!tok.empty() &&
                    std::find(spec.words.begin(), spec.words.end(), tok) != spec.words.end()) {
                    found = true;
                }
            };
            for (char ch : injected.text) {
                if (ch == ' ') {
                    check(cur);
                    cur.clear();
                } else {
                    cur.push_back(ch);
                }
            }
            check(cur);
            if (!found) {
                throw std::logic_error("attack sample " + injected.id +
                                       " does not contain any trigger word");
            }
            break;
        }
        case TriggerVariant::ParaphraseTable: {
            if (!spec.table || spec.table->entries.at(injected.id) != injected.text) {
                throw std::logic_error("attack sample " + injected.id +
                                       " does not match its paraphrase table entry");
            }
            break;
        }
    }
}

}  // namespace

AttackTestSet build_attack_set(const LabeledDataset& test, const TriggerSpec& trigger,
                               int target_label, std::uint64_t eval_seed) {
    validate_trigger_spec(trigger);
    if (target_label < 0 || target_label >= test.num_classes()) {
        throw ValidationError("target label out of range: " + std::to_string(target_label));
    }
    AttackTestSet attack;
    attack.target_label = target_label;

    if (trigger.variant == TriggerVariant::ParaphraseTable) {
        if (!trigger.table) throw std::logic_error("paraphrase table not loaded");
        std::string missing;
        for (const Sample& s : test.samples()) {
            if (s.label != target_label && !trigger.table->entries.count(s.id)) {
                missing += " " + s.id;
            }
        }
        if (!missing.empty()) {
            throw ValidationError("paraphrase coverage gap for test ids:" + missing);
        }
    }

    for (const Sample& s : test.samples()) {
        if (s.label == target_label) continue;
        Sample injected = inject(trigger, s, eval_seed);
        verify_trigger_present(trigger, injected);
        attack.samples.push_back(std::move(injected));
        attack.source_ids.push_back(s.id);
    }
    if (attack.samples.empty()) {
        throw ValidationError("empty attack set: every test sample carries the target label");
    }
    return attack;
}

Fraction compute_cacc(const ClassifierParams& victim, const LabeledDataset& test) {
    return accuracy(victim, test);
}

Fraction compute_asr(const ClassifierParams& victim, const AttackTestSet& attack) {
    if (attack.samples.empty()) throw ValidationError("empty attack set");
    std::int64_t hits = 0;
    for (const Sample& s : attack.samples) {
        const auto z = predict_logits(victim, featurize(s.text, victim.vocab, victim.tok));
        if (argmax(z) == attack.target_label) ++hits;
    }
    return Fraction{hits, static_cast<std::int64_t>(attack.samples.size())};
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
    json j;
    j["cacc"] = {{"num", report.cacc.num}, {"den", report.cacc.den},
                 {"value", report.cacc.value()}};
    j["asr"] = {{"num", report.asr.num}, {"den", report.asr.den}, {"value", report.asr.value()}};
    j["n_test"] = report.n_test;
    j["n_attack"] = report.n_attack;
    j["victim_id"] = report.victim_id;
    j["config_hash"] = report.config_hash;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open report file: " + path.string());
    json j;
    try {
        in >> j;
        EvalReport r;
        r.cacc = Fraction{j.at("cacc").at("num").get<std::int64_t>(),
                          j.at("cacc").at("den").get<std::int64_t>()};
        r.asr = Fraction{j.at("asr").at("num").get<std::int64_t>(),
                         j.at("asr").at("den").get<std::int64_t>()};
        r.n_test = j.at("n_test").get<std::size_t>();
        r.n_attack = j.at("n_attack").get<std::size_t>();
        r.victim_id = j.at("victim_id").get<std::string>();
        r.config_hash = j.at("config_hash").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw ValidationError("malformed report file " + path.string() + ": " + e.what());
    }
}

}  // namespace bdlab

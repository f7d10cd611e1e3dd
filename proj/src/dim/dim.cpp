#include "nlufb/dim/dim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace nlufb::dim {

using core::Dataset;
using core::Turn;

double slot_value_coverage(std::span<const std::string> utterance,
                           const core::Interpretation& p) {
    std::set<std::string> utt(utterance.begin(), utterance.end());
    long present = 0, total = 0;
    for (const core::Slot& s : p.slots) {
        for (const std::string& tok : core::tokenize(s.value)) {
            ++total;
            present += utt.count(tok) ? 1 : 0;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(present) / static_cast<double>(total);
}

nn::RawFeatures raw_dim_features(const Turn& t, const DimFeatureConfig& cfg) {
    if (t.hypotheses.empty()) throw std::invalid_argument("turn has no hypotheses: " + t.turn_id);
    nn::RawFeatures raw;
    raw.sequential["utt"] = t.utterance;

    const core::Hypothesis& top = t.hypotheses.front();
    std::vector<std::string> slot_types;
    std::vector<std::string> slot_values;
    for (const core::Slot& s : top.interpretation.canonical_slots()) {
        slot_types.push_back(s.type);
        for (const std::string& tok : core::tokenize(s.value)) slot_values.push_back(tok);
    }
    raw.sequential["top_slot_types"] = std::move(slot_types);
    raw.sequential["top_slot_values"] = std::move(slot_values);

    raw.categorical["top_domain"] = top.interpretation.domain;
    raw.categorical["top_intent"] = top.interpretation.intent;
    for (const std::string& key : cfg.context_keys) {
        auto it = t.context.find(key);
        raw.categorical["ctx_" + key] = it == t.context.end() ? "<absent>" : it->second;
    }

    raw.numerical["top_conf"] = {top.confidence};
    double second = t.hypotheses.size() > 1 ? t.hypotheses[1].confidence : 0.0;
    raw.numerical["conf_margin"] = {top.confidence - second};
    raw.numerical["hyp_count"] = {static_cast<double>(t.hypotheses.size())};
    raw.numerical["top_utt_overlap"] = {slot_value_coverage(t.utterance, top.interpretation)};
    return raw;
}

nn::FeatureBundle build_dim_features(const Turn& t, const nn::Model& model,
                                     const DimFeatureConfig& cfg) {
    return model.encode(raw_dim_features(t, cfg));
}

DimTrainResult train_dim(const Dataset& d_live, const DimHyperparams& hp, uint64_t seed) {
    if (d_live.records.empty()) throw std::invalid_argument("empty live dataset");
    for (const Turn& t : d_live.records) {
        if (!t.defect_label.has_value())
            throw std::invalid_argument("turn not annotated with a defect label: " + t.turn_id);
    }

    auto [train_split, valid_split] = core::split_dataset(d_live, hp.split_ratio, seed);

    bool any_defect = false;
    for (const Turn& t : train_split.records) any_defect = any_defect || *t.defect_label;
    if (!any_defect) throw std::runtime_error("no defects in training split");

    nn::ArchBuilder builder(hp.seq_dim, hp.cat_dim, hp.hidden_size);
    std::vector<nn::RawFeatures> raws;
    raws.reserve(train_split.records.size());
    for (const Turn& t : train_split.records) {
        raws.push_back(raw_dim_features(t, hp.features));
        builder.observe(raws.back());
    }

    nn::Model model = nn::init_model(builder.arch(), seed);
    model.vocabs = builder.vocabs();

    std::vector<nn::Sample> samples;
    samples.reserve(raws.size());
    for (size_t i = 0; i < raws.size(); ++i) {
        samples.push_back({model.encode(raws[i]),
                           *train_split.records[i].defect_label ? 1 : 0});
    }

    nn::TrainConfig tc;
    tc.epochs = hp.epochs;
    tc.batch_size = hp.batch_size;
    tc.learning_rate = hp.learning_rate;
    tc.class_weighting = hp.class_weighting;
    tc.seed = seed;
    model = nn::train(std::move(model), samples, tc);
    return {std::move(model), std::move(valid_split)};
}

double score_turn(const nn::Model& model, const Turn& t, const DimFeatureConfig& cfg) {
    return model.predict(build_dim_features(t, model, cfg));
}

double prediction_accuracy(std::span<const Turn> pred_set) {
    if (pred_set.empty()) return 0.0;
    long defects = 0;
    for (const Turn& t : pred_set) {
        if (!t.defect_label.has_value())
            throw std::invalid_argument("turn missing defect label: " + t.turn_id);
        defects += *t.defect_label ? 1 : 0;
    }
    return static_cast<double>(defects) / static_cast<double>(pred_set.size());
}

ThresSearchResult thres_search_scored(std::span<const double> scores,
                                      std::span<const int> defect_labels, double lambda,
                                      double epsilon) {
    if (scores.size() != defect_labels.size())
        throw std::invalid_argument("scores and labels must align");
    if (lambda <= 0.0 || lambda >= 1.0 || epsilon <= 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("lambda and epsilon must be in (0,1)");

    double low = 0.0, up = 1.0;
    double tau = 0.0, alpha = 0.0;
    int iterations = 0;
    bool up_verified = false;  // some probe of `up` achieved lambda
    double up_alpha = 0.0;
    while (std::abs(low - up) > epsilon) {
        tau = (low + up) / 2.0;
        long picked = 0, defects = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] > tau) {
                ++picked;
                defects += defect_labels[i];
            }
        }
        alpha = picked == 0 ? 0.0 : static_cast<double>(defects) / static_cast<double>(picked);
        if (alpha < lambda) {
            low = tau;
        } else {
            up = tau;
            up_verified = true;
            up_alpha = alpha;
        }
        ++iterations;
    }
    // When the last bisection step took the failing branch, the midpoint
    // just probed misses lambda while sitting within epsilon of the upper
    // endpoint that was verified to achieve it; return the verified
    // endpoint so the selected set keeps the accuracy guarantee.
    if (up_verified) return {up, up_alpha, iterations};
    return {tau, alpha, iterations};
}

ThresSearchResult thres_search(const nn::Model& model, const Dataset& d_valid, double lambda,
                               double epsilon, const DimFeatureConfig& cfg) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(d_valid.records.size());
    labels.reserve(d_valid.records.size());
    for (const Turn& t : d_valid.records) {
        if (!t.defect_label.has_value())
            throw std::invalid_argument("validation turn missing defect label: " + t.turn_id);
        scores.push_back(score_turn(model, t, cfg));
        labels.push_back(*t.defect_label ? 1 : 0);
    }
    return thres_search_scored(scores, labels, lambda, epsilon);
}

Dataset select_targets(const nn::Model& model, const Dataset& d_live, double tau,
                       const DimFeatureConfig& cfg) {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("tau must be in [0,1]");
    Dataset targets;
    targets.provenance = core::Provenance::target_defects;
    for (const Turn& t : d_live.records) {
        if (score_turn(model, t, cfg) > tau) targets.records.push_back(t);
    }
    return targets;
}

namespace {

std::string group_key(const Turn& t, const std::vector<std::string>& signal_keys) {
    const core::Interpretation& top = t.top_interpretation();
    std::string key;
    for (const std::string& sig : signal_keys) {
        key += "|";
        if (sig == "domain") {
            key += top.domain;
        } else if (sig == "intent") {
            key += top.intent;
        } else if (sig == "slots") {
            for (const core::Slot& s : top.canonical_slots()) key += s.type + "=" + s.value + ";";
        } else if (sig == "utterance") {
            for (const std::string& tok : t.utterance) key += tok + " ";
        } else {
            throw std::invalid_argument("unknown signal key: " + sig);
        }
    }
    return key;
}

}  // namespace

Dataset naive_group_baseline(const Dataset& d_live, const std::vector<std::string>& signal_keys,
                             double ratio_threshold) {
    if (signal_keys.empty()) throw std::invalid_argument("signal_keys must be non-empty");
    std::map<std::string, std::pair<std::vector<const Turn*>, long>> groups;
    for (const Turn& t : d_live.records) {
        if (!t.defect_label.has_value())
            throw std::invalid_argument("turn missing defect label: " + t.turn_id);
        auto& [members, defects] = groups[group_key(t, signal_keys)];
        members.push_back(&t);
        defects += *t.defect_label ? 1 : 0;
    }
    Dataset selected;
    selected.provenance = core::Provenance::target_defects;
    for (const Turn& t : d_live.records) {
        const auto& [members, defects] = groups[group_key(t, signal_keys)];
        double ratio = static_cast<double>(defects) / static_cast<double>(members.size());
        if (ratio > ratio_threshold) selected.records.push_back(t);
    }
    return selected;
}

}  // namespace nlufb::dim

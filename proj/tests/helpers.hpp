#pragma once
// Shared fixtures for the test suites: hand-built turns/sessions, small
// model architectures, and independent scoring oracles.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nlufb/core/types.hpp"
#include "nlufb/nn/model.hpp"

namespace test_helpers {

using nlufb::core::Hypothesis;
using nlufb::core::Interpretation;
using nlufb::core::Session;
using nlufb::core::Turn;

inline Interpretation interp(const std::string& domain, const std::string& intent,
                             std::vector<nlufb::core::Slot> slots = {}) {
    return {domain, intent, std::move(slots)};
}

inline std::vector<Hypothesis> kbest(std::vector<Interpretation> interps, double top_conf = 0.9) {
    std::vector<Hypothesis> hyps;
    double conf = top_conf;
    for (size_t i = 0; i < interps.size(); ++i) {
        hyps.push_back({std::move(interps[i]), conf, static_cast<int>(i)});
        conf *= 0.8;
    }
    return hyps;
}

inline Turn make_turn(const std::string& id, const std::string& session_id, int64_t ts,
                      const std::string& utterance, std::vector<Hypothesis> hyps,
                      bool barged = false) {
    Turn t;
    t.turn_id = id;
    t.session_id = session_id;
    t.timestamp = ts;
    t.utterance = nlufb::core::tokenize(utterance);
    t.hypotheses = std::move(hyps);
    t.response.response_text = "resp";
    t.response.barged_in = barged;
    return t;
}

inline Turn simple_turn(const std::string& id, const std::string& session_id, int64_t ts,
                        const std::string& utterance = "play something",
                        const std::string& domain = "Music", const std::string& intent = "Play") {
    return make_turn(id, session_id, ts, utterance, kbest({interp(domain, intent)}));
}

// Rank-sum AUC, an implementation-independent oracle.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<std::pair<double, int>> pairs;
    for (size_t i = 0; i < scores.size(); ++i) pairs.push_back({scores[i], labels[i]});
    std::sort(pairs.begin(), pairs.end());
    double rank_sum = 0;
    long pos = 0, neg = 0;
    size_t i = 0;
    while (i < pairs.size()) {
        size_t j = i;
        while (j < pairs.size() && pairs[j].first == pairs[i].first) ++j;
        double mean_rank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (size_t k = i; k < j; ++k) {
            if (pairs[k].second == 1) {
                rank_sum += mean_rank;
                ++pos;
            } else {
                ++neg;
            }
        }
        i = j;
    }
    if (pos == 0 || neg == 0) return 0.5;
    return (rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0) /
           (static_cast<double>(pos) * static_cast<double>(neg));
}

// A tiny two-categorical model architecture used across the nn tests.
inline nlufb::nn::ModelArch toy_arch(int vocab_a = 3, int vocab_b = 3, int dim = 4,
                                     int hidden = 4) {
    nlufb::nn::ModelArch arch;
    arch.hidden_size = hidden;
    arch.features.push_back({"a", nlufb::nn::FeatureKind::categorical, vocab_a, dim});
    arch.features.push_back({"b", nlufb::nn::FeatureKind::categorical, vocab_b, dim});
    arch.sort_features();
    return arch;
}

}  // namespace test_helpers

#include "nlufb/rerank/rerank.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nlufb/core/jsonl.hpp"

namespace nlufb::rerank {

using core::Dataset;
using core::Hypothesis;
using core::Interpretation;
using core::Session;
using core::Turn;
using ojson = nlohmann::ordered_json;

std::string to_string(Origin o) {
    return o == Origin::pass_through ? "pass_through" : "corrected";
}

Origin origin_from_string(const std::string& s) {
    if (s == "pass_through") return Origin::pass_through;
    if (s == "corrected") return Origin::corrected;
    throw std::invalid_argument("unknown origin: " + s);
}

std::vector<SupervisionRecord> build_curated_dataset(const Dataset& d_sample,
                                                     const Dataset& d_target,
                                                     const nn::Model& dcm_model,
                                                     const dim::DimFeatureConfig& cfg) {
    std::set<std::string> sample_ids;
    for (const Turn& t : d_sample.records) sample_ids.insert(t.turn_id);
    std::set<std::string> target_ids;
    for (const Turn& t : d_target.records) {
        if (!sample_ids.count(t.turn_id))
            throw std::invalid_argument("target turn not in the sampled dataset: " + t.turn_id);
        target_ids.insert(t.turn_id);
    }

    std::vector<SupervisionRecord> records;
    records.reserve(d_sample.records.size());
    for (const Turn& t : d_sample.records) {
        SupervisionRecord rec;
        rec.turn = t;
        if (target_ids.count(t.turn_id)) {
            rec.origin = Origin::corrected;
            rec.gold = dcm::correct(t, dcm_model, cfg);
        } else {
            rec.origin = Origin::pass_through;
            rec.gold = t.top_interpretation();
        }
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

nn::RawFeatures hypothesis_raw(const Turn& t, const Hypothesis& h,
                               const dim::DimFeatureConfig& cfg) {
    nn::RawFeatures raw = dim::raw_dim_features(t, cfg);
    raw.merge(dcm::raw_candidate_features(h.interpretation));
    nn::RawFeatures extra;
    extra.numerical["cand_rank"] = {static_cast<double>(h.rank)};
    extra.numerical["cand_conf"] = {h.confidence};
    extra.numerical["cand_utt_overlap"] = {
        dim::slot_value_coverage(t.utterance, h.interpretation)};
    raw.merge(extra);
    return raw;
}

}  // namespace

nn::Model train_reranker(std::span<const SupervisionRecord> records, const RerankHyperparams& hp,
                         uint64_t seed) {
    if (records.empty()) throw std::invalid_argument("no supervision records");

    std::vector<nn::RawFeatures> raws;
    std::vector<int> labels;
    long skipped = 0;
    nn::ArchBuilder builder(hp.seq_dim, hp.cat_dim, hp.hidden_size);
    for (const SupervisionRecord& rec : records) {
        bool gold_present = false;
        for (const Hypothesis& h : rec.turn.hypotheses)
            gold_present = gold_present || h.interpretation == rec.gold;
        if (!gold_present) {
            ++skipped;
            continue;
        }
        for (const Hypothesis& h : rec.turn.hypotheses) {
            raws.push_back(hypothesis_raw(rec.turn, h, hp.turn_features));
            builder.observe(raws.back());
            labels.push_back(h.interpretation == rec.gold ? 1 : 0);
        }
    }
    if (skipped > 0) {
        std::cerr << "warning: skipped " << skipped
                  << " record(s) whose gold interpretation is outside the hypothesis list\n";
    }
    if (raws.empty()) throw std::runtime_error("no usable supervision records");

    nn::Model model = nn::init_model(builder.arch(), seed);
    model.vocabs = builder.vocabs();

    std::vector<nn::Sample> samples;
    samples.reserve(raws.size());
    for (size_t i = 0; i < raws.size(); ++i)
        samples.push_back({model.encode(raws[i]), labels[i]});

    nn::TrainConfig tc;
    tc.epochs = hp.epochs;
    tc.batch_size = hp.batch_size;
    tc.learning_rate = hp.learning_rate;
    tc.class_weighting = hp.class_weighting;
    tc.seed = seed;
    return nn::train(std::move(model), samples, tc);
}

double score_hypothesis(const nn::Model& model, const Turn& t, const Hypothesis& h,
                        const dim::DimFeatureConfig& cfg) {
    return model.predict(model.encode(hypothesis_raw(t, h, cfg)));
}

std::vector<Hypothesis> rerank_with_scores(const Turn& t, std::span<const double> scores) {
    if (t.hypotheses.empty()) throw std::invalid_argument("turn has no hypotheses: " + t.turn_id);
    if (scores.size() != t.hypotheses.size())
        throw std::invalid_argument("one score per hypothesis required");
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores[a] > scores[b];  // stable: ties keep original rank order
    });
    std::vector<Hypothesis> out;
    out.reserve(order.size());
    for (size_t i = 0; i < order.size(); ++i) {
        Hypothesis h = t.hypotheses[order[i]];
        h.rank = static_cast<int>(i);
        out.push_back(std::move(h));
    }
    return out;
}

std::vector<Hypothesis> rerank(const Turn& t, const nn::Model& model,
                               const dim::DimFeatureConfig& cfg) {
    std::vector<double> scores;
    scores.reserve(t.hypotheses.size());
    for (const Hypothesis& h : t.hypotheses) scores.push_back(score_hypothesis(model, t, h, cfg));
    return rerank_with_scores(t, scores);
}

EvalReport evaluate_shadow_with(std::span<const Session> sessions, const HypothesisScorer& scorer) {
    EvalReport report;
    long changed = 0, total = 0;
    long delta_base_wrong = 0, delta_new_wrong = 0;
    for (const Session& s : sessions) {
        for (const Turn& t : s.turns) {
            if (!t.oracle_interpretation.has_value())
                throw std::invalid_argument("shadow evaluation needs oracle interpretations: " +
                                            t.turn_id);
            const Interpretation& oracle = *t.oracle_interpretation;
            const Interpretation& base = t.top_interpretation();
            std::vector<double> scores = scorer(t);
            std::vector<Hypothesis> ranked = rerank_with_scores(t, scores);
            const Interpretation& fresh = ranked.front().interpretation;

            DomainCounts& d = report.per_domain[oracle.domain];
            ++d.total;
            ++total;
            bool base_ok = base == oracle;
            bool fresh_ok = fresh == oracle;
            if (fresh_ok && !base_ok) {
                ++d.win;
            } else if (base_ok && !fresh_ok) {
                ++d.loss;
            } else {
                ++d.tie;
            }
            if (!(fresh == base)) {
                ++changed;
                delta_base_wrong += base_ok ? 0 : 1;
                delta_new_wrong += fresh_ok ? 0 : 1;
            }
        }
    }
    for (const auto& [_, d] : report.per_domain) {
        report.overall.total += d.total;
        report.overall.win += d.win;
        report.overall.loss += d.loss;
        report.overall.tie += d.tie;
    }
    report.delta_turns = changed;
    report.changed_fraction = total == 0 ? 0.0 : static_cast<double>(changed) / total;
    if (changed > 0) {
        report.defect_proxy_before = static_cast<double>(delta_base_wrong) / changed;
        report.defect_proxy_after = static_cast<double>(delta_new_wrong) / changed;
    }
    return report;
}

EvalReport evaluate_shadow(std::span<const Session> sessions, const nn::Model& model,
                           const dim::DimFeatureConfig& cfg) {
    return evaluate_shadow_with(sessions, [&](const Turn& t) {
        std::vector<double> scores;
        scores.reserve(t.hypotheses.size());
        for (const Hypothesis& h : t.hypotheses)
            scores.push_back(score_hypothesis(model, t, h, cfg));
        return scores;
    });
}

namespace {

AttributionCounts attribute(const Dataset& d) {
    AttributionCounts counts;
    for (const Turn& t : d.records) {
        if (!t.oracle_interpretation.has_value())
            throw std::invalid_argument("error attribution needs oracle interpretations: " +
                                        t.turn_id);
        ++counts.total;
        if (t.top_interpretation() == *t.oracle_interpretation) {
            ++counts.nuisance;
        } else {
            ++counts.seeded_confusion;
        }
    }
    return counts;
}

}  // namespace

AttributionReport error_attribution_report(const Dataset& defects, const Dataset& targets) {
    return {attribute(defects), attribute(targets)};
}

std::string format_eval_table(const EvalReport& report) {
    std::ostringstream out;
    auto row = [&](const std::string& name, const DomainCounts& d) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-12s %8ld %8ld %8ld %8ld %8ld %9.2f%%\n", name.c_str(),
                      d.total, d.win, d.loss, d.tie, d.delta1(), 100.0 * d.delta2());
        out << buf;
    };
    char head[160];
    std::snprintf(head, sizeof(head), "%-12s %8s %8s %8s %8s %8s %10s\n", "Domain", "Total", "Win",
                  "Loss", "Tie", "Delta1", "Delta2");
    out << head;
    for (const auto& [domain, counts] : report.per_domain) row(domain, counts);
    row("OVERALL", report.overall);
    char tail[200];
    std::snprintf(tail, sizeof(tail),
                  "changed: %.4f%% of turns (%ld); defect proxy on deltas: %.1f%% -> %.1f%%\n",
                  100.0 * report.changed_fraction, report.delta_turns,
                  100.0 * report.defect_proxy_before, 100.0 * report.defect_proxy_after);
    out << tail;
    return out.str();
}

ojson eval_report_to_json(const EvalReport& report) {
    ojson j;
    auto counts = [](const DomainCounts& d) {
        return ojson{{"total", d.total}, {"win", d.win},       {"loss", d.loss},
                     {"tie", d.tie},     {"delta1", d.delta1()}, {"delta2", d.delta2()}};
    };
    ojson domains;
    for (const auto& [domain, d] : report.per_domain) domains[domain] = counts(d);
    j["per_domain"] = std::move(domains);
    j["overall"] = counts(report.overall);
    j["changed_fraction"] = report.changed_fraction;
    j["delta_turns"] = report.delta_turns;
    j["defect_proxy_before"] = report.defect_proxy_before;
    j["defect_proxy_after"] = report.defect_proxy_after;
    return j;
}

ojson attribution_to_json(const AttributionReport& report) {
    auto counts = [](const AttributionCounts& c) {
        return ojson{{"total", c.total},
                     {"seeded_confusion", c.seeded_confusion},
                     {"nuisance", c.nuisance},
                     {"seeded_fraction", c.seeded_fraction()}};
    };
    return ojson{{"defects", counts(report.defects)}, {"targets", counts(report.targets)}};
}

void write_curated(std::span<const SupervisionRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write curated dataset: " + path.string());
    for (const SupervisionRecord& rec : records) {
        ojson j;
        j["turn"] = core::turn_to_json(rec.turn);
        j["gold"] = core::interpretation_to_json(rec.gold);
        j["origin"] = to_string(rec.origin);
        out << j.dump() << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<SupervisionRecord> read_curated(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open curated dataset: " + path.string());
    std::vector<SupervisionRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ojson j = ojson::parse(line);
        SupervisionRecord rec;
        rec.turn = core::turn_from_json(j.at("turn"));
        rec.gold = core::interpretation_from_json(j.at("gold"));
        rec.origin = origin_from_string(j.at("origin").get<std::string>());
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace nlufb::rerank

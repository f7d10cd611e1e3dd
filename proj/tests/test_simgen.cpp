#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "nlufb/core/jsonl.hpp"
#include "nlufb/feedback/feedback.hpp"
#include "nlufb/simgen/simgen.hpp"

using namespace nlufb;

namespace {

simgen::SimConfig small_config(uint64_t seed = 5, int n_sessions = 200) {
    simgen::SimConfig cfg = simgen::default_sim_config();
    cfg.seed = seed;
    cfg.n_sessions = n_sessions;
    return cfg;
}

std::string log_bytes(const std::vector<core::Session>& sessions) {
    std::ostringstream out;
    core::Dataset flat = core::flatten(sessions);
    for (const core::Turn& t : flat.records) out << core::turn_to_line(t) << "\n";
    return out.str();
}

}  // namespace

TEST_CASE("generate_traffic is byte-deterministic for a fixed seed") {
    auto a = simgen::generate_traffic(small_config(9, 50));
    auto b = simgen::generate_traffic(small_config(9, 50));
    CHECK(log_bytes(a) == log_bytes(b));
    auto c = simgen::generate_traffic(small_config(10, 50));
    CHECK(log_bytes(a) != log_bytes(c));
}

TEST_CASE("forced probabilities: rate 1 rule with beta=1, eta=0 barges every triggered turn") {
    simgen::SimConfig cfg = small_config(3, 300);
    cfg.behavior.barge_in_prob_on_error = 1.0;
    cfg.behavior.random_defect_noise_prob = 0.0;
    cfg.behavior.rephrase_prob_after_defect = 0.0;
    for (auto& r : cfg.rules) r.rate = 1.0;

    simgen::SimTrace trace;
    auto sessions = simgen::generate_traffic(cfg, &trace);
    std::set<std::string> triggered_groups;
    for (const auto& r : cfg.rules) triggered_groups.insert(r.trigger);

    long triggered = 0;
    for (const auto& s : sessions) {
        for (const auto& t : s.turns) {
            const std::string& group = trace.turn_group.at(t.turn_id);
            if (triggered_groups.count(group)) {
                ++triggered;
                CHECK(t.response.barged_in);
                CHECK_FALSE(t.top_interpretation() == *t.oracle_interpretation);
            } else {
                CHECK_FALSE(t.response.barged_in);
                CHECK(t.top_interpretation() == *t.oracle_interpretation);
            }
        }
    }
    CHECK(triggered > 0);
}

TEST_CASE("config validation rejects degenerate setups") {
    simgen::SimConfig cfg = small_config();
    cfg.k_best = 1;
    CHECK_THROWS_AS(simgen::generate_traffic(cfg), std::invalid_argument);

    cfg = small_config();
    cfg.catalog.clear();
    CHECK_THROWS_AS(simgen::generate_traffic(cfg), std::invalid_argument);

    cfg = small_config();
    cfg.rules[0].rate = 1.5;
    CHECK_THROWS(simgen::generate_traffic(cfg));

    cfg = small_config();
    cfg.rules[0].correct = {"Nope", "Missing", {}};
    CHECK_THROWS_WITH_AS(simgen::generate_traffic(cfg), doctest::Contains("not in the catalog"),
                         std::invalid_argument);
}

TEST_CASE("confusion rate concentrates within a 3-sigma binomial bound") {
    simgen::SimConfig cfg = small_config(17, 1000);
    cfg.rules = {{"music.play_ottr",
                  {"QA", "GeneralQuestion", {{"Topic", "old town road"}}},
                  {"Music", "PlaySong", {{"Song", "old town road"}}},
                  0.5}};
    simgen::SimTrace trace;
    auto sessions = simgen::generate_traffic(cfg, &trace);

    long triggered_group_turns = 0, wrong = 0;
    for (const auto& s : sessions) {
        for (const auto& t : s.turns) {
            if (trace.turn_group.at(t.turn_id) != "music.play_ottr") continue;
            // Rephrase turns are follow-ups, not fresh rolls of the rule.
            bool is_rephrase = false;
            for (const auto& [ante, rep] : trace.rephrase_pairs) is_rephrase |= rep == t.turn_id;
            if (is_rephrase) continue;
            ++triggered_group_turns;
            wrong += trace.confused_turn_ids.count(t.turn_id) ? 1 : 0;
        }
    }
    REQUIRE(triggered_group_turns > 100);
    double p_hat = static_cast<double>(wrong) / static_cast<double>(triggered_group_turns);
    double sigma = std::sqrt(0.25 / static_cast<double>(triggered_group_turns));
    CHECK(std::abs(p_hat - 0.5) <= 3.0 * sigma);
}

TEST_CASE("oracle interpretation is always reachable within the k-best") {
    simgen::SimConfig cfg = small_config(23, 300);
    auto sessions = simgen::generate_traffic(cfg);
    for (const auto& s : sessions) {
        for (const auto& t : s.turns) {
            REQUIRE(t.oracle_interpretation.has_value());
            bool reachable = false;
            for (const auto& h : t.hypotheses)
                reachable = reachable || h.interpretation == *t.oracle_interpretation;
            CHECK(reachable);
            core::validate_hypotheses(t.hypotheses);
            CHECK(static_cast<int>(t.hypotheses.size()) <= cfg.k_best);
        }
    }
}

TEST_CASE("rephrase turns share the oracle interpretation of their antecedent") {
    simgen::SimConfig cfg = small_config(29, 400);
    cfg.behavior.rephrase_prob_after_defect = 1.0;
    simgen::SimTrace trace;
    auto sessions = simgen::generate_traffic(cfg, &trace);
    REQUIRE(!trace.rephrase_pairs.empty());

    std::map<std::string, const core::Turn*> by_id;
    for (const auto& s : sessions)
        for (const auto& t : s.turns) by_id[t.turn_id] = &t;
    for (const auto& [ante_id, rep_id] : trace.rephrase_pairs) {
        const core::Turn* ante = by_id.at(ante_id);
        const core::Turn* rep = by_id.at(rep_id);
        CHECK(*ante->oracle_interpretation == *rep->oracle_interpretation);
        CHECK(ante->session_id == rep->session_id);
        CHECK(rep->timestamp > ante->timestamp);
        CHECK_FALSE(rep->rephrase_of.has_value());  // left for the annotator
        CHECK(rep->utterance != ante->utterance);   // different template
    }
}

TEST_CASE("oracle_report: all-correct traffic scores 100%, rate-1 group scores 0%") {
    simgen::SimConfig cfg = small_config(31, 100);
    cfg.rules.clear();
    cfg.behavior.random_defect_noise_prob = 0.0;
    auto clean = simgen::generate_traffic(cfg);
    auto summary = simgen::oracle_report(clean);
    CHECK(summary.top1_accuracy == 1.0);
    CHECK(summary.defect_signals == 0);

    cfg = small_config(31, 300);
    cfg.rules = simgen::default_rules();
    cfg.rules[0].rate = 1.0;
    simgen::SimTrace trace;
    cfg.behavior.rephrase_prob_after_defect = 0.0;
    auto confused = simgen::generate_traffic(cfg, &trace);
    auto s2 = simgen::oracle_report(confused);
    std::string group_key = core::format_interpretation(
        core::Interpretation{"Music", "PlaySong", {{"Song", "old town road"}}});
    const auto& g = s2.per_group.at(group_key);
    CHECK(g.top1_correct == 0);
    CHECK(g.top1_wrong == g.total);
}

TEST_CASE("oracle_report matches a brute-force recount on mixed traffic") {
    auto sessions = simgen::generate_traffic(small_config(41, 300));
    auto summary = simgen::oracle_report(sessions);

    long total = 0, correct = 0, defects = 0;
    for (const auto& s : sessions) {
        for (const auto& t : s.turns) {
            ++total;
            correct += t.top_interpretation() == *t.oracle_interpretation ? 1 : 0;
            defects += (t.response.barged_in || t.response.terminated_early) ? 1 : 0;
        }
    }
    CHECK(summary.total_turns == total);
    CHECK(summary.defect_signals == defects);
    CHECK(summary.top1_accuracy ==
          doctest::Approx(static_cast<double>(correct) / total).epsilon(1e-12));

    long group_total = 0;
    for (const auto& [_, g] : summary.per_group) {
        group_total += g.total;
        CHECK(g.top1_correct + g.top1_wrong == g.total);
    }
    CHECK(group_total == total);
}

TEST_CASE("oracle_report requires oracle interpretations") {
    auto sessions = simgen::generate_traffic(small_config(43, 5));
    sessions[0].turns[0].oracle_interpretation.reset();
    CHECK_THROWS(simgen::oracle_report(sessions));
}

TEST_CASE("default catalog: templates cohere within entries and separate across entries") {
    auto catalog = simgen::default_catalog();
    double min_within = 1.0, max_cross = 0.0;
    for (size_t i = 0; i < catalog.size(); ++i) {
        auto tokens_of = [](const std::string& s) { return core::tokenize(s); };
        for (size_t a = 0; a < catalog[i].templates.size(); ++a) {
            for (size_t b = a + 1; b < catalog[i].templates.size(); ++b) {
                double j = feedback::token_jaccard(tokens_of(catalog[i].templates[a]),
                                                   tokens_of(catalog[i].templates[b]));
                min_within = std::min(min_within, j);
            }
            for (size_t k = i + 1; k < catalog.size(); ++k) {
                for (const auto& other : catalog[k].templates) {
                    double j = feedback::token_jaccard(tokens_of(catalog[i].templates[a]),
                                                       tokens_of(other));
                    max_cross = std::max(max_cross, j);
                }
            }
        }
    }
    // The rephrase detector's default threshold is 0.5: paraphrases of one
    // goal must clear it, different goals must stay under it.
    CHECK(min_within >= 0.5);
    CHECK(max_cross < 0.5);
}

TEST_CASE("every catalog entry carries at least two templates and valid interpretations") {
    for (const auto& e : simgen::default_catalog()) {
        CHECK(e.templates.size() >= 2);
        CHECK_NOTHROW(core::validate_interpretation(e.interpretation()));
    }
}

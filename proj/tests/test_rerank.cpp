#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "nlufb/core/rng.hpp"
#include "nlufb/feedback/feedback.hpp"
#include "nlufb/rerank/rerank.hpp"
#include "nlufb/simgen/simgen.hpp"

using namespace nlufb;
using test_helpers::interp;
using test_helpers::kbest;
using test_helpers::make_turn;
using test_helpers::simple_turn;

namespace {

// A DCM that always scores the turn's own rank-0 candidate highest: handy
// when a test needs corrected records without caring about their quality.
nn::Model trivial_dcm(const std::vector<core::Session>& sessions) {
    auto pairs = dcm::extract_high_value_pairs(sessions);
    auto catalog = core::InterpretationCatalog::from_dataset(core::flatten(sessions));
    auto instances = dcm::generate_dcm_training_data(pairs, 5, 3, catalog, 3);
    dcm::DcmHyperparams hp;
    hp.epochs = 1;
    hp.hidden_size = 4;
    hp.seq_dim = 4;
    hp.cat_dim = 4;
    return dcm::train_dcm(instances, hp, 1);
}

std::vector<core::Session> annotated_sim(uint64_t seed, int n_sessions,
                                         double gamma = 0.8) {
    auto cfg = simgen::default_sim_config();
    cfg.seed = seed;
    cfg.n_sessions = n_sessions;
    cfg.behavior.rephrase_prob_after_defect = gamma;
    return feedback::annotate_sessions(simgen::generate_traffic(cfg), {});
}

}  // namespace

TEST_CASE("build_curated_dataset: targets become corrected records, the rest pass through") {
    auto sessions = annotated_sim(3, 400, 1.0);
    nn::Model dcm_model = trivial_dcm(sessions);
    core::Dataset d_sample = core::flatten(sessions);

    core::Dataset d_target;
    d_target.provenance = core::Provenance::target_defects;
    for (size_t i = 0; i < d_sample.records.size(); i += 21)
        d_target.records.push_back(d_sample.records[i]);

    auto records = rerank::build_curated_dataset(d_sample, d_target, dcm_model);
    CHECK(records.size() == d_sample.records.size());

    std::set<std::string> target_ids;
    for (const auto& t : d_target.records) target_ids.insert(t.turn_id);
    long corrected = 0;
    for (const auto& rec : records) {
        if (rec.origin == rerank::Origin::corrected) {
            ++corrected;
            CHECK(target_ids.count(rec.turn.turn_id));
            // gold always stays within the turn's own k-best
            bool member = false;
            for (const auto& h : rec.turn.hypotheses) member |= h.interpretation == rec.gold;
            CHECK(member);
        } else {
            CHECK_FALSE(target_ids.count(rec.turn.turn_id));
            CHECK(rec.gold == rec.turn.top_interpretation());
        }
    }
    CHECK(corrected == static_cast<long>(d_target.records.size()));
}

TEST_CASE("build_curated_dataset: empty target set gives all pass-through") {
    auto sessions = annotated_sim(5, 60, 1.0);
    nn::Model dcm_model = trivial_dcm(sessions);
    core::Dataset d_sample = core::flatten(sessions);
    core::Dataset empty;
    empty.provenance = core::Provenance::target_defects;
    auto records = rerank::build_curated_dataset(d_sample, empty, dcm_model);
    CHECK(records.size() == d_sample.records.size());
    for (const auto& rec : records) CHECK(rec.origin == rerank::Origin::pass_through);
}

TEST_CASE("build_curated_dataset: corrected gold may equal the existing top-1 and is retained") {
    auto sessions = annotated_sim(7, 300, 1.0);
    nn::Model dcm_model = trivial_dcm(sessions);
    core::Dataset d_sample = core::flatten(sessions);
    core::Dataset d_target;
    d_target.provenance = core::Provenance::target_defects;
    for (size_t i = 0; i < d_sample.records.size(); i += 9)
        d_target.records.push_back(d_sample.records[i]);
    auto records = rerank::build_curated_dataset(d_sample, d_target, dcm_model);

    long confirmed = 0, corrected = 0;
    for (const auto& rec : records) {
        if (rec.origin != rerank::Origin::corrected) continue;
        ++corrected;
        // independent recount against the correction model's own output
        CHECK(rec.gold == dcm::correct(rec.turn, dcm_model));
        confirmed += rec.gold == rec.turn.top_interpretation() ? 1 : 0;
    }
    CHECK(corrected > 0);
    CHECK(confirmed > 0);  // rank-0 confirmations occur and are kept
}

TEST_CASE("build_curated_dataset rejects targets outside the sample") {
    auto sessions = annotated_sim(9, 40, 1.0);
    nn::Model dcm_model = trivial_dcm(sessions);
    core::Dataset d_sample = core::flatten(sessions);
    core::Dataset stray;
    stray.records.push_back(simple_turn("not-in-sample", "sX", 1));
    CHECK_THROWS(rerank::build_curated_dataset(d_sample, stray, dcm_model));
}

TEST_CASE("rerank_with_scores: singleton unchanged; ascending scores reverse the list") {
    core::Turn single = make_turn("t", "s", 1, "u", kbest({interp("A", "B")}));
    std::vector<double> one = {0.3};
    auto out = rerank::rerank_with_scores(single, one);
    REQUIRE(out.size() == 1);
    CHECK(out[0].interpretation == interp("A", "B"));
    CHECK(out[0].rank == 0);

    core::Turn t = make_turn("t2", "s", 2, "u",
                             kbest({interp("A", "B"), interp("C", "D"), interp("E", "F")}));
    std::vector<double> rising = {0.1, 0.5, 0.9};
    auto rev = rerank::rerank_with_scores(t, rising);
    CHECK(rev[0].interpretation == interp("E", "F"));
    CHECK(rev[1].interpretation == interp("C", "D"));
    CHECK(rev[2].interpretation == interp("A", "B"));
    // ranks renumbered, original confidences preserved per hypothesis
    CHECK(rev[0].rank == 0);
    CHECK(rev[0].confidence == doctest::Approx(t.hypotheses[2].confidence));
    CHECK(rev[2].confidence == doctest::Approx(t.hypotheses[0].confidence));
}

TEST_CASE("rerank ties keep the original rank order") {
    core::Turn t = make_turn("t", "s", 1, "u",
                             kbest({interp("A", "B"), interp("C", "D"), interp("E", "F")}));
    std::vector<double> tied = {0.5, 0.5, 0.5};
    auto out = rerank::rerank_with_scores(t, tied);
    CHECK(out[0].interpretation == interp("A", "B"));
    CHECK(out[1].interpretation == interp("C", "D"));
    CHECK(out[2].interpretation == interp("E", "F"));
}

TEST_CASE("rerank output is always a permutation of the input hypotheses") {
    auto sessions = annotated_sim(11, 80, 1.0);
    core::Rng rng(4);
    for (const auto& s : sessions) {
        for (const auto& t : s.turns) {
            std::vector<double> scores;
            for (size_t i = 0; i < t.hypotheses.size(); ++i) scores.push_back(rng.uniform());
            auto out = rerank::rerank_with_scores(t, scores);
            REQUIRE(out.size() == t.hypotheses.size());
            std::multiset<std::string> before, after;
            for (const auto& h : t.hypotheses)
                before.insert(core::format_interpretation(h.interpretation));
            for (const auto& h : out) after.insert(core::format_interpretation(h.interpretation));
            CHECK(before == after);
            for (size_t i = 0; i < out.size(); ++i) CHECK(out[i].rank == static_cast<int>(i));
        }
    }
}

TEST_CASE("train_reranker skips records whose gold is outside the hypothesis list") {
    auto sessions = annotated_sim(13, 60, 1.0);
    core::Dataset d_sample = core::flatten(sessions);
    std::vector<rerank::SupervisionRecord> records;
    for (const auto& t : d_sample.records)
        records.push_back({t, t.top_interpretation(), rerank::Origin::pass_through});
    records[0].gold = interp("NoSuch", "Interp");

    rerank::RerankHyperparams hp;
    hp.epochs = 1;
    hp.hidden_size = 4;
    hp.seq_dim = 4;
    hp.cat_dim = 4;
    CHECK_NOTHROW(rerank::train_reranker(records, hp, 1));
}

TEST_CASE("evaluate_shadow: identical outputs everywhere give zero wins/losses/changes") {
    auto cfg = simgen::default_sim_config();
    cfg.seed = 15;
    cfg.n_sessions = 100;
    auto sessions = simgen::generate_traffic(cfg);
    // Score by descending original rank: reproduces the baseline order.
    auto report = rerank::evaluate_shadow_with(sessions, [](const core::Turn& t) {
        std::vector<double> s;
        for (const auto& h : t.hypotheses) s.push_back(1.0 - 0.1 * h.rank);
        return s;
    });
    CHECK(report.overall.win == 0);
    CHECK(report.overall.loss == 0);
    CHECK(report.overall.tie == report.overall.total);
    CHECK(report.changed_fraction == 0.0);
    CHECK(report.delta_turns == 0);
    long domain_total = 0;
    for (const auto& [_, d] : report.per_domain) {
        CHECK(d.win + d.loss + d.tie == d.total);
        domain_total += d.total;
    }
    CHECK(domain_total == report.overall.total);
}

TEST_CASE("evaluate_shadow: an oracle scorer fixes every seeded confusion and nothing else") {
    auto cfg = simgen::default_sim_config();
    cfg.seed = 17;
    cfg.n_sessions = 300;
    simgen::SimTrace trace;
    auto sessions = simgen::generate_traffic(cfg, &trace);

    auto report = rerank::evaluate_shadow_with(sessions, [](const core::Turn& t) {
        std::vector<double> s;
        for (const auto& h : t.hypotheses)
            s.push_back(h.interpretation == *t.oracle_interpretation ? 1.0 : 0.0);
        return s;
    });
    CHECK(report.overall.win == static_cast<long>(trace.confused_turn_ids.size()));
    CHECK(report.overall.loss == 0);
    CHECK(report.delta_turns == report.overall.win);
    CHECK(report.defect_proxy_before == 1.0);
    CHECK(report.defect_proxy_after == 0.0);
}

TEST_CASE("evaluate_shadow requires oracle interpretations") {
    auto sessions = annotated_sim(19, 5, 1.0);
    sessions[0].turns[0].oracle_interpretation.reset();
    CHECK_THROWS(rerank::evaluate_shadow_with(sessions, [](const core::Turn& t) {
        return std::vector<double>(t.hypotheses.size(), 0.5);
    }));
}

TEST_CASE("error attribution: eta=0 traffic is 100% seeded confusion in both sets") {
    auto cfg = simgen::default_sim_config();
    cfg.seed = 21;
    cfg.n_sessions = 400;
    cfg.behavior.random_defect_noise_prob = 0.0;
    cfg.behavior.barge_in_prob_on_error = 1.0;
    auto sessions = feedback::annotate_sessions(simgen::generate_traffic(cfg), {});
    core::Dataset defects;
    for (const auto& s : sessions)
        for (const auto& t : s.turns)
            if (*t.defect_label) defects.records.push_back(t);
    REQUIRE(!defects.records.empty());
    core::Dataset targets = defects;  // any subset works for the property
    targets.provenance = core::Provenance::target_defects;

    auto report = rerank::error_attribution_report(defects, targets);
    CHECK(report.defects.seeded_fraction() == 1.0);
    CHECK(report.targets.seeded_fraction() == 1.0);
    CHECK(report.defects.seeded_confusion + report.defects.nuisance == report.defects.total);
    CHECK(report.defects.total == static_cast<long>(defects.records.size()));
}

TEST_CASE("pass-through-only training reproduces the baseline top-1 on held-out traffic") {
    auto train_sessions = annotated_sim(23, 400);
    core::Dataset d_sample = core::flatten(train_sessions);
    std::vector<rerank::SupervisionRecord> records;
    for (const auto& t : d_sample.records)
        records.push_back({t, t.top_interpretation(), rerank::Origin::pass_through});

    rerank::RerankHyperparams hp;
    hp.epochs = 6;
    hp.hidden_size = 8;
    hp.seq_dim = 6;
    hp.cat_dim = 4;
    nn::Model model = rerank::train_reranker(records, hp, 5);

    auto cfg = simgen::default_sim_config();
    cfg.seed = 24;  // held-out week
    cfg.n_sessions = 150;
    auto heldout = simgen::generate_traffic(cfg);
    long total = 0, same = 0;
    for (const auto& s : heldout) {
        for (const auto& t : s.turns) {
            ++total;
            auto ranked = rerank::rerank(t, model);
            same += ranked.front().interpretation == t.top_interpretation() ? 1 : 0;
        }
    }
    double agreement = static_cast<double>(same) / static_cast<double>(total);
    INFO("agreement ", agreement);
    CHECK(agreement >= 0.99);
}

TEST_CASE("curated records round-trip through the line-delimited format") {
    auto sessions = annotated_sim(27, 30, 1.0);
    nn::Model dcm_model = trivial_dcm(sessions);
    core::Dataset d_sample = core::flatten(sessions);
    core::Dataset d_target;
    d_target.provenance = core::Provenance::target_defects;
    d_target.records.push_back(d_sample.records[2]);
    auto records = rerank::build_curated_dataset(d_sample, d_target, dcm_model);

    auto path = std::filesystem::temp_directory_path() / "nlufb_curated_roundtrip.jsonl";
    rerank::write_curated(records, path);
    auto loaded = rerank::read_curated(path);
    REQUIRE(loaded.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        CHECK(loaded[i].turn == records[i].turn);
        CHECK(loaded[i].gold == records[i].gold);
        CHECK(loaded[i].origin == records[i].origin);
    }
    std::filesystem::remove(path);
}

TEST_CASE("eval table formatting carries every domain row plus the overall row") {
    rerank::EvalReport report;
    report.per_domain["Music"] = {100, 10, 2, 88};
    report.per_domain["Weather"] = {50, 1, 1, 48};
    report.overall = {150, 11, 3, 136};
    report.changed_fraction = 0.02;
    report.delta_turns = 14;
    std::string table = rerank::format_eval_table(report);
    CHECK(table.find("Music") != std::string::npos);
    CHECK(table.find("Weather") != std::string::npos);
    CHECK(table.find("OVERALL") != std::string::npos);
    CHECK(table.find("Delta1") != std::string::npos);
}

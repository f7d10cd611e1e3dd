#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <map>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "nlufb/core/rng.hpp"
#include "nlufb/dcm/dcm.hpp"
#include "nlufb/feedback/feedback.hpp"
#include "nlufb/nn/train.hpp"
#include "nlufb/simgen/simgen.hpp"

using namespace nlufb;
using test_helpers::interp;
using test_helpers::kbest;
using test_helpers::make_turn;
using test_helpers::simple_turn;

namespace {

core::Session pair_session(bool rephrase_defective) {
    core::Session s;
    s.session_id = "u1#0";
    s.user_id = "u1";
    core::Turn t1 = make_turn("t1", "u1#0", 1000, "play old town road",
                              kbest({interp("QA", "GeneralQuestion", {{"Topic", "ottr"}}),
                                     interp("Music", "PlaySong", {{"Song", "ottr"}})}),
                              true);
    t1.defect_label = true;
    core::Turn t2 = make_turn("t2", "u1#0", 6000, "play the song old town road",
                              kbest({interp("Music", "PlaySong", {{"Song", "ottr"}}),
                                     interp("QA", "GeneralQuestion", {{"Topic", "ottr"}}),
                                     interp("Weather", "GetForecast")}),
                              rephrase_defective);
    t2.defect_label = rephrase_defective;
    t2.rephrase_of = "t1";
    s.turns = {t1, t2};
    return s;
}

core::InterpretationCatalog big_catalog(int n) {
    core::InterpretationCatalog catalog;
    for (int i = 0; i < n; ++i)
        catalog.entries.push_back(interp("D" + std::to_string(i), "I" + std::to_string(i)));
    std::sort(catalog.entries.begin(), catalog.entries.end());
    return catalog;
}

}  // namespace

TEST_CASE("extract_high_value_pairs: defect followed by clean rephrase yields one pair") {
    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{pair_session(false)});
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].defect_turn.turn_id == "t1");
    CHECK(pairs[0].rephrase_turn.turn_id == "t2");
}

TEST_CASE("extract_high_value_pairs: a defective rephrase disqualifies the pair") {
    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{pair_session(true)});
    CHECK(pairs.empty());
}

TEST_CASE("extract_high_value_pairs: chains contribute only the pairwise link that qualifies") {
    core::Session s;
    s.session_id = "u1#0";
    s.user_id = "u1";
    core::Turn t1 = simple_turn("t1", "u1#0", 1000, "play old town road");
    t1.defect_label = true;
    core::Turn t2 = simple_turn("t2", "u1#0", 5000, "play old town road now");
    t2.defect_label = true;
    t2.rephrase_of = "t1";
    core::Turn t3 = simple_turn("t3", "u1#0", 9000, "play old town road please");
    t3.defect_label = false;
    t3.rephrase_of = "t2";
    s.turns = {t1, t2, t3};

    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{s});
    // Brute-force enumeration of the invariant over all ordered turn pairs:
    // (t2, t3) is the only one satisfying defect + linked + non-defective.
    long expected = 0;
    for (const auto& a : s.turns)
        for (const auto& b : s.turns)
            if (b.rephrase_of == a.turn_id && *a.defect_label && !*b.defect_label) ++expected;
    REQUIRE(pairs.size() == static_cast<size_t>(expected));
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].defect_turn.turn_id == "t2");
    CHECK(pairs[0].rephrase_turn.turn_id == "t3");
}

TEST_CASE("generate: k=5, q=3 yields 1 positive plus up to 7 negatives") {
    // Rephrase with a full 5-best list.
    core::Session s = pair_session(false);
    s.turns[1].hypotheses = kbest({interp("Music", "PlaySong", {{"Song", "ottr"}}),
                                   interp("QA", "GeneralQuestion"), interp("A", "B"),
                                   interp("C", "D"), interp("E", "F")});
    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{s});
    REQUIRE(pairs.size() == 1);

    auto instances = dcm::generate_dcm_training_data(pairs, 5, 3, big_catalog(20), 42);
    CHECK(instances.size() == 8);  // 1 + (5-1) + 3
    long positives = 0;
    for (const auto& inst : instances) positives += inst.label;
    CHECK(positives == 1);
    CHECK(instances[0].label == 1);
    CHECK(instances[0].candidate == s.turns[1].top_interpretation());
}

TEST_CASE("generate: q=0 reproduces the base scheme of k instances per pair") {
    core::Session s = pair_session(false);
    s.turns[1].hypotheses = kbest({interp("Music", "PlaySong", {{"Song", "ottr"}}),
                                   interp("QA", "GeneralQuestion"), interp("A", "B"),
                                   interp("C", "D"), interp("E", "F")});
    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{s});
    auto instances = dcm::generate_dcm_training_data(pairs, 5, 0, big_catalog(20), 42);
    CHECK(instances.size() == 5);
}

TEST_CASE("generate: noise negatives never collide with the rephrase k-best") {
    auto cfg = simgen::default_sim_config();
    cfg.seed = 55;
    cfg.n_sessions = 600;
    cfg.behavior.rephrase_prob_after_defect = 1.0;
    auto sessions = feedback::annotate_sessions(simgen::generate_traffic(cfg), {});
    auto pairs = dcm::extract_high_value_pairs(sessions);
    REQUIRE(pairs.size() > 50);
    auto catalog = core::InterpretationCatalog::from_dataset(core::flatten(sessions));
    auto instances = dcm::generate_dcm_training_data(pairs, 5, 3, catalog, 7);

    std::map<std::string, const core::Turn*> rephrase_by_defect;
    for (const auto& p : pairs) rephrase_by_defect[p.defect_turn.turn_id] = &p.rephrase_turn;

    // Brute-force membership oracle over every generated instance.
    std::map<std::string, long> positives_per_pair;
    for (const auto& inst : instances) {
        const core::Turn* rephrase = rephrase_by_defect.at(inst.turn.turn_id);
        bool in_kbest = false;
        for (const auto& h : rephrase->hypotheses)
            in_kbest = in_kbest || h.interpretation == inst.candidate;
        if (inst.label == 1) {
            ++positives_per_pair[inst.turn.turn_id];
            CHECK(inst.candidate == rephrase->top_interpretation());
        }
        CHECK((inst.label == 1 || !in_kbest ||
               !(inst.candidate == rephrase->top_interpretation())));
    }
    for (const auto& [_, n] : positives_per_pair) CHECK(n == 1);

    long per_pair_max = 1 + (5 - 1) + 3;
    CHECK(instances.size() <= pairs.size() * static_cast<size_t>(per_pair_max));
}

TEST_CASE("generate: noise sampling is order-independent given the per-pair seeds") {
    core::Session s1 = pair_session(false);
    core::Session s2 = pair_session(false);
    for (auto& t : s2.turns) {
        t.turn_id += "x";
        t.session_id = "u2#0";
    }
    s2.session_id = "u2#0";
    s2.turns[1].rephrase_of = "t1x";
    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{s1, s2});
    REQUIRE(pairs.size() == 2);
    std::vector<dcm::HighValuePair> reversed = {pairs[1], pairs[0]};

    auto fwd = dcm::generate_dcm_training_data(pairs, 3, 2, big_catalog(15), 9);
    auto rev = dcm::generate_dcm_training_data(reversed, 3, 2, big_catalog(15), 9);

    auto key = [](const dcm::DcmInstance& i) {
        return i.turn.turn_id + "|" + core::format_interpretation(i.candidate) + "|" +
               std::to_string(i.label);
    };
    std::multiset<std::string> a, b;
    for (const auto& i : fwd) a.insert(key(i));
    for (const auto& i : rev) b.insert(key(i));
    CHECK(a == b);
}

TEST_CASE("generate: a starved catalog emits fewer noise negatives with a warning") {
    core::Session s = pair_session(false);
    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{s});
    // Catalog holds only the rephrase's own k-best members.
    core::InterpretationCatalog catalog;
    for (const auto& h : s.turns[1].hypotheses) catalog.entries.push_back(h.interpretation);
    std::sort(catalog.entries.begin(), catalog.entries.end());
    auto instances = dcm::generate_dcm_training_data(pairs, 5, 3, catalog, 1);
    long noise = 0;
    for (const auto& inst : instances) {
        bool in_kbest = false;
        for (const auto& h : s.turns[1].hypotheses)
            in_kbest = in_kbest || h.interpretation == inst.candidate;
        noise += in_kbest ? 0 : 1;
    }
    CHECK(noise == 0);
}

TEST_CASE("correct_with_scores: argmax with ties broken toward the lower rank") {
    core::Turn t = make_turn("t", "s", 1, "u",
                             kbest({interp("A", "B"), interp("C", "D"), interp("E", "F")}));
    std::vector<double> scores = {0.2, 0.9, 0.9};
    CHECK(dcm::correct_with_scores(t, scores) == interp("C", "D"));

    core::Turn single = make_turn("t2", "s", 2, "u", kbest({interp("A", "B")}));
    std::vector<double> one = {0.4};
    CHECK(dcm::correct_with_scores(single, one) == interp("A", "B"));
}

TEST_CASE("correct stays within the turn's own k-best") {
    auto cfg = simgen::default_sim_config();
    cfg.seed = 4;
    cfg.n_sessions = 120;
    cfg.behavior.rephrase_prob_after_defect = 1.0;
    auto sessions = feedback::annotate_sessions(simgen::generate_traffic(cfg), {});
    auto pairs = dcm::extract_high_value_pairs(sessions);
    REQUIRE(!pairs.empty());
    auto catalog = core::InterpretationCatalog::from_dataset(core::flatten(sessions));
    auto instances = dcm::generate_dcm_training_data(pairs, 5, 3, catalog, 7);

    dcm::DcmHyperparams hp;
    hp.epochs = 2;
    hp.hidden_size = 8;
    hp.seq_dim = 6;
    hp.cat_dim = 4;
    nn::Model model = dcm::train_dcm(instances, hp, 11);

    for (const auto& s : sessions) {
        for (const auto& t : s.turns) {
            core::Interpretation fixed = dcm::correct(t, model);
            bool member = false;
            for (const auto& h : t.hypotheses) member = member || h.interpretation == fixed;
            CHECK(member);
        }
        if (&s - sessions.data() > 20) break;
    }
}

TEST_CASE("train_dcm rejects single-class data and is seed-deterministic") {
    core::Session s = pair_session(false);
    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{s});
    auto instances = dcm::generate_dcm_training_data(pairs, 3, 1, big_catalog(10), 3);

    std::vector<dcm::DcmInstance> only_pos;
    for (const auto& i : instances)
        if (i.label == 1) only_pos.push_back(i);
    dcm::DcmHyperparams hp;
    hp.epochs = 1;
    hp.hidden_size = 4;
    hp.seq_dim = 4;
    hp.cat_dim = 4;
    CHECK_THROWS_AS(dcm::train_dcm(only_pos, hp, 1), std::runtime_error);

    nn::Model m1 = dcm::train_dcm(instances, hp, 5);
    nn::Model m2 = dcm::train_dcm(instances, hp, 5);
    for (const auto& [name, t] : m1.params) {
        const nn::Tensor& u = m2.params.at(name);
        for (size_t i = 0; i < t.v.size(); ++i) CHECK(t.v[i] == u.v[i]);
    }
}

TEST_CASE("train_dcm: correct interpretation recoverable from utterances scores >= 0.9") {
    auto cfg = simgen::default_sim_config();
    cfg.seed = 61;
    cfg.n_sessions = 1200;
    cfg.behavior.rephrase_prob_after_defect = 1.0;
    cfg.behavior.barge_in_prob_on_error = 1.0;
    auto sessions = feedback::annotate_sessions(simgen::generate_traffic(cfg), {});
    auto pairs = dcm::extract_high_value_pairs(sessions);
    REQUIRE(pairs.size() > 100);

    size_t holdout = pairs.size() / 5;
    std::vector<dcm::HighValuePair> train_pairs(pairs.begin(), pairs.end() - holdout);
    std::vector<dcm::HighValuePair> test_pairs(pairs.end() - holdout, pairs.end());

    auto catalog = core::InterpretationCatalog::from_dataset(core::flatten(sessions));
    auto train_inst = dcm::generate_dcm_training_data(train_pairs, 5, 3, catalog, 7);
    auto test_inst = dcm::generate_dcm_training_data(test_pairs, 5, 3, catalog, 8);

    dcm::DcmHyperparams hp;
    hp.epochs = 12;
    hp.hidden_size = 20;
    hp.seq_dim = 10;
    hp.cat_dim = 8;
    nn::Model model = dcm::train_dcm(train_inst, hp, 31);

    long correct_calls = 0;
    for (const auto& inst : test_inst) {
        double p = dcm::score_candidate(model, inst.turn, inst.candidate);
        int pred = p > 0.5 ? 1 : 0;
        correct_calls += pred == inst.label ? 1 : 0;
    }
    double acc = static_cast<double>(correct_calls) / static_cast<double>(test_inst.size());
    INFO("held-out instance accuracy ", acc);
    CHECK(acc >= 0.9);
}

TEST_CASE("grad_check passes on the DCM architecture") {
    core::Session s = pair_session(false);
    auto pairs = dcm::extract_high_value_pairs(std::vector<core::Session>{s});
    auto instances = dcm::generate_dcm_training_data(pairs, 3, 2, big_catalog(10), 3);

    nn::ArchBuilder builder(6, 4, 5);
    std::vector<nn::RawFeatures> raws;
    for (const auto& inst : instances) {
        nn::RawFeatures raw = dim::raw_dim_features(inst.turn);
        raw.merge(dcm::raw_candidate_features(inst.candidate));
        builder.observe(raw);
        raws.push_back(std::move(raw));
    }
    nn::Model model = nn::init_model(builder.arch(), 17);
    model.vocabs = builder.vocabs();
    nn::Sample sample{model.encode(raws[0]), 1};
    auto r = nn::grad_check(model, sample, 1e-4, 2.0);
    INFO("worst ", r.worst_param);
    CHECK(r.max_rel_error < 1e-4);
}

#include "nlufb/simgen/simgen.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "nlufb/core/rng.hpp"

namespace nlufb::simgen {

using core::Hypothesis;
using core::Interpretation;
using core::Rng;
using core::Session;
using core::Turn;

void validate(const SimConfig& cfg) {
    if (cfg.k_best < 2)
        throw std::invalid_argument("k_best must be at least 2: corrections need a lower rank");
    if (cfg.catalog.empty()) throw std::invalid_argument("intent catalog is empty");
    if (cfg.n_sessions <= 0) throw std::invalid_argument("n_sessions must be positive");
    if (cfg.min_goals_per_session < 1 || cfg.max_goals_per_session < cfg.min_goals_per_session)
        throw std::invalid_argument("invalid goals-per-session range");

    auto check_prob = [](double p, const char* name) {
        if (p < 0.0 || p > 1.0)
            throw std::invalid_argument(std::string(name) + " must be in [0,1]");
    };
    check_prob(cfg.behavior.barge_in_prob_on_error, "barge_in_prob_on_error");
    check_prob(cfg.behavior.rephrase_prob_after_defect, "rephrase_prob_after_defect");
    check_prob(cfg.behavior.random_defect_noise_prob, "random_defect_noise_prob");
    check_prob(cfg.behavior.confusable_in_kbest_prob, "confusable_in_kbest_prob");

    std::set<std::string> ids;
    for (const CatalogEntry& e : cfg.catalog) {
        if (!ids.insert(e.id).second)
            throw std::invalid_argument("duplicate catalog entry id: " + e.id);
        if (e.templates.size() < 2)
            throw std::invalid_argument("catalog entry needs >= 2 templates: " + e.id);
        core::validate_interpretation(e.interpretation());
    }
    for (const ConfusionRule& r : cfg.rules) {
        check_prob(r.rate, "confusion rate");
        if (!ids.count(r.trigger))
            throw std::invalid_argument("confusion rule triggers unknown group: " + r.trigger);
        core::validate_interpretation(r.wrong);
        bool correct_known = false;
        for (const CatalogEntry& e : cfg.catalog)
            if (e.interpretation() == r.correct) correct_known = true;
        if (!correct_known)
            throw std::invalid_argument(
                "confusion rule's correct interpretation is not in the catalog: " +
                core::format_interpretation(r.correct));
    }
}

namespace {

struct TurnPlan {
    const CatalogEntry* entry;
    const ConfusionRule* rule;  // nullptr when the group has no rule
    int template_index;
    bool confused;
};

std::vector<Hypothesis> build_kbest(const SimConfig& cfg, Rng& rng, const TurnPlan& plan) {
    const Interpretation correct = plan.entry->interpretation();
    std::vector<Interpretation> ranked;
    ranked.reserve(static_cast<size_t>(cfg.k_best));

    if (plan.confused) {
        ranked.push_back(plan.rule->wrong);
    } else {
        ranked.push_back(correct);
    }

    // Distractors drawn from other catalog entries, distinct from anything
    // already placed.
    std::vector<const CatalogEntry*> others;
    for (const CatalogEntry& e : cfg.catalog) others.push_back(&e);
    rng.shuffle(others);

    std::vector<Interpretation> fillers;
    if (plan.confused) {
        fillers.push_back(correct);  // the correction target, buried below top-1
    } else if (plan.rule && rng.bernoulli(cfg.behavior.confusable_in_kbest_prob)) {
        fillers.push_back(plan.rule->wrong);
    }
    for (const CatalogEntry* e : others) {
        if (static_cast<int>(ranked.size() + fillers.size()) >= cfg.k_best) break;
        Interpretation p = e->interpretation();
        bool dup = p == ranked.front();
        for (const Interpretation& q : fillers) dup = dup || p == q;
        if (!dup) fillers.push_back(std::move(p));
    }
    // Random order below the top slot; on a confused turn this buries the
    // oracle at a uniform non-top rank.
    rng.shuffle(fillers);
    for (Interpretation& p : fillers) ranked.push_back(std::move(p));

    std::vector<Hypothesis> hyps;
    double conf = plan.confused ? rng.uniform(0.40, 0.65) : rng.uniform(0.70, 0.95);
    for (size_t i = 0; i < ranked.size(); ++i) {
        hyps.push_back({std::move(ranked[i]), conf, static_cast<int>(i)});
        conf *= rng.uniform(0.55, 0.90);
    }
    return hyps;
}

Turn make_turn(const SimConfig& cfg, Rng& rng, const TurnPlan& plan, const std::string& session_id,
               int turn_index, int64_t timestamp) {
    Turn t;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "-t%03d", turn_index);
    t.turn_id = session_id + buf;
    t.session_id = session_id;
    t.timestamp = timestamp;
    t.utterance = core::tokenize(plan.entry->templates[static_cast<size_t>(plan.template_index)]);
    t.hypotheses = build_kbest(cfg, rng, plan);
    t.context["device_has_screen"] = rng.bernoulli(0.5) ? "true" : "false";
    t.oracle_interpretation = plan.entry->interpretation();

    bool top1_wrong = !(t.hypotheses.front().interpretation == *t.oracle_interpretation);
    if (top1_wrong) {
        t.response.response_text = "served " + core::format_interpretation(
                                                   t.hypotheses.front().interpretation);
        t.response.barged_in = rng.bernoulli(cfg.behavior.barge_in_prob_on_error);
    } else {
        t.response.response_text = "ok " + core::format_interpretation(*t.oracle_interpretation);
        t.response.barged_in = rng.bernoulli(cfg.behavior.random_defect_noise_prob);
    }
    return t;
}

}  // namespace

std::vector<Session> generate_traffic(const SimConfig& cfg, SimTrace* trace) {
    validate(cfg);
    Rng rng(cfg.seed);

    std::map<std::string, const ConfusionRule*> rule_by_group;
    for (const ConfusionRule& r : cfg.rules) rule_by_group[r.trigger] = &r;

    std::vector<Session> sessions;
    sessions.reserve(static_cast<size_t>(cfg.n_sessions));

    for (int s = 0; s < cfg.n_sessions; ++s) {
        Session session;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "u%06d", s);
        session.user_id = buf;
        session.session_id = session.user_id + "#0";

        int64_t ts = 1700000000000LL + static_cast<int64_t>(s) * 3600000LL + rng.uniform_int(60000);

        int n_goals = cfg.min_goals_per_session +
                      rng.uniform_int(cfg.max_goals_per_session - cfg.min_goals_per_session + 1);
        n_goals = std::min<int>(n_goals, static_cast<int>(cfg.catalog.size()));

        // Distinct goals per session so cross-turn similarity stays low.
        std::vector<int> entry_ids(cfg.catalog.size());
        for (size_t i = 0; i < entry_ids.size(); ++i) entry_ids[i] = static_cast<int>(i);
        rng.shuffle(entry_ids);

        int turn_index = 0;
        for (int g = 0; g < n_goals; ++g) {
            const CatalogEntry& entry = cfg.catalog[static_cast<size_t>(entry_ids[static_cast<size_t>(g)])];
            auto rule_it = rule_by_group.find(entry.id);
            const ConfusionRule* rule = rule_it == rule_by_group.end() ? nullptr : rule_it->second;

            TurnPlan plan;
            plan.entry = &entry;
            plan.rule = rule;
            plan.template_index = rng.uniform_int(static_cast<int>(entry.templates.size()));
            plan.confused = rule != nullptr && rng.bernoulli(rule->rate);

            Turn turn = make_turn(cfg, rng, plan, session.session_id, turn_index++, ts);
            ts += 3000 + rng.uniform_int(6000);
            if (trace) {
                trace->turn_group[turn.turn_id] = entry.id;
                if (plan.confused) trace->confused_turn_ids.insert(turn.turn_id);
            }
            std::string antecedent_id = turn.turn_id;
            session.turns.push_back(std::move(turn));

            if (plan.confused && rng.bernoulli(cfg.behavior.rephrase_prob_after_defect)) {
                TurnPlan rep = plan;
                rep.confused = false;  // the clarified request is understood
                int alt = rng.uniform_int(static_cast<int>(entry.templates.size()) - 1);
                rep.template_index = alt >= plan.template_index ? alt + 1 : alt;
                Turn rturn = make_turn(cfg, rng, rep, session.session_id, turn_index++, ts);
                ts += 3000 + rng.uniform_int(6000);
                if (trace) {
                    trace->turn_group[rturn.turn_id] = entry.id;
                    trace->rephrase_pairs.emplace_back(antecedent_id, rturn.turn_id);
                }
                session.turns.push_back(std::move(rturn));
            }
        }
        sessions.push_back(std::move(session));
    }
    return sessions;
}

OracleSummary oracle_report(std::span<const Session> sessions) {
    OracleSummary summary;
    long correct = 0;
    for (const Session& s : sessions) {
        for (const Turn& t : s.turns) {
            if (!t.oracle_interpretation.has_value())
                throw std::invalid_argument("turn missing oracle interpretation: " + t.turn_id);
            GroupStats& g = summary.per_group[core::format_interpretation(*t.oracle_interpretation)];
            ++g.total;
            ++summary.total_turns;
            if (t.top_interpretation() == *t.oracle_interpretation) {
                ++g.top1_correct;
                ++correct;
            } else {
                ++g.top1_wrong;
            }
            if (t.response.barged_in || t.response.terminated_early) ++summary.defect_signals;
        }
    }
    if (summary.total_turns > 0) {
        summary.top1_accuracy =
            static_cast<double>(correct) / static_cast<double>(summary.total_turns);
        summary.defect_signal_rate =
            static_cast<double>(summary.defect_signals) / static_cast<double>(summary.total_turns);
    }
    return summary;
}

std::vector<CatalogEntry> default_catalog() {
    return {
        {"music.play_ottr", "Music", "PlaySong", {{"Song", "old town road"}},
         {"play old town road", "play the song old town road", "play old town road now",
          "play old town road please"}},
        {"music.play_jazz", "Music", "PlayGenre", {{"Genre", "smooth jazz"}},
         {"put on some smooth jazz", "put on smooth jazz", "put on some smooth jazz music"}},
        {"music.next_track", "Music", "NextTrack", {},
         {"skip to the next track", "skip to next track", "jump to the next track"}},
        {"weather.today", "Weather", "GetForecast", {{"Day", "today"}},
         {"whats the weather for today", "whats the weather like today", "whats the weather today"}},
        {"weather.rain_tomorrow", "Weather", "GetPrecipitation", {{"Day", "tomorrow"}},
         {"is it going to rain tomorrow", "is it likely to rain tomorrow",
          "is it gonna rain tomorrow"}},
        {"shopping.add_milk", "Shopping", "AddToList", {{"Item", "milk"}},
         {"add milk to my shopping list", "add milk to my list", "add milk to the shopping list"}},
        {"shopping.order_batteries", "Shopping", "ReorderItem", {{"Item", "batteries"}},
         {"order more batteries", "order more batteries again", "please order more batteries"}},
        {"smarthome.lights_on", "SmartHome", "TurnOnDevice", {{"Device", "living room lights"}},
         {"turn on the living room lights", "turn on living room lights",
          "switch on the living room lights"}},
        {"smarthome.thermostat", "SmartHome", "SetTemperature", {{"Temperature", "seventy two"}},
         {"set the thermostat to seventy two", "set thermostat to seventy two",
          "set the thermostat to seventy two degrees"}},
        {"qa.capital_france", "QA", "GeneralQuestion", {{"Topic", "capital of france"}},
         {"what is the capital of france", "whats the capital of france",
          "what is the capital city of france"}},
        {"qa.height_everest", "QA", "GeneralQuestion", {{"Topic", "height of everest"}},
         {"how tall is mount everest", "how high is mount everest",
          "how tall is mount everest exactly"}},
        {"timers.set_ten", "Timers", "SetTimer", {{"Duration", "ten minutes"}},
         {"set a timer for ten minutes", "set timer for ten minutes",
          "start a timer for ten minutes"}},
    };
}

std::vector<ConfusionRule> default_rules() {
    return {
        {"music.play_ottr",
         {"QA", "GeneralQuestion", {{"Topic", "old town road"}}},
         {"Music", "PlaySong", {{"Song", "old town road"}}},
         0.30},
        {"smarthome.lights_on",
         {"SmartHome", "TurnOnDevice", {{"Device", "bedroom lights"}}},
         {"SmartHome", "TurnOnDevice", {{"Device", "living room lights"}}},
         0.30},
        {"weather.rain_tomorrow",
         {"Weather", "GetForecast", {{"Day", "today"}}},
         {"Weather", "GetPrecipitation", {{"Day", "tomorrow"}}},
         0.20},
    };
}

SimConfig default_sim_config() {
    SimConfig cfg;
    cfg.seed = 11;
    cfg.n_sessions = 2000;
    cfg.catalog = default_catalog();
    cfg.rules = default_rules();
    cfg.k_best = 5;
    return cfg;
}

}  // namespace nlufb::simgen

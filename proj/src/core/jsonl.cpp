#include "nlufb/core/jsonl.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace nlufb::core {

ojson interpretation_to_json(const Interpretation& p) {
    ojson slots = ojson::array();
    for (const Slot& s : p.slots) slots.push_back({{"type", s.type}, {"value", s.value}});
    return ojson{{"domain", p.domain}, {"intent", p.intent}, {"slots", std::move(slots)}};
}

Interpretation interpretation_from_json(const ojson& j) {
    Interpretation p;
    p.domain = j.at("domain").get<std::string>();
    p.intent = j.at("intent").get<std::string>();
    for (const auto& s : j.at("slots")) {
        p.slots.push_back({s.at("type").get<std::string>(), s.at("value").get<std::string>()});
    }
    validate_interpretation(p);
    return p;
}

ojson turn_to_json(const Turn& t) {
    ojson j;
    j["turn_id"] = t.turn_id;
    j["session_id"] = t.session_id;
    j["timestamp"] = t.timestamp;
    j["utterance"] = t.utterance;
    ojson hyps = ojson::array();
    for (const Hypothesis& h : t.hypotheses) {
        ojson hj = interpretation_to_json(h.interpretation);
        hj["confidence"] = h.confidence;
        hyps.push_back(std::move(hj));
    }
    j["hypotheses"] = std::move(hyps);
    j["context"] = t.context;
    j["response"] = ojson{{"response_text", t.response.response_text},
                          {"barged_in", t.response.barged_in},
                          {"terminated_early", t.response.terminated_early}};
    if (t.defect_label.has_value()) j["defect_label"] = *t.defect_label;
    if (t.rephrase_of.has_value()) j["rephrase_of"] = *t.rephrase_of;
    if (t.oracle_interpretation.has_value())
        j["oracle_interpretation"] = interpretation_to_json(*t.oracle_interpretation);
    return j;
}

Turn turn_from_json(const ojson& j) {
    Turn t;
    t.turn_id = j.at("turn_id").get<std::string>();
    t.session_id = j.at("session_id").get<std::string>();
    t.timestamp = j.at("timestamp").get<int64_t>();
    t.utterance = j.at("utterance").get<std::vector<std::string>>();
    int rank = 0;
    for (const auto& hj : j.at("hypotheses")) {
        Hypothesis h;
        h.interpretation = interpretation_from_json(hj);
        h.confidence = hj.at("confidence").get<double>();
        h.rank = rank++;
        t.hypotheses.push_back(std::move(h));
    }
    validate_hypotheses(t.hypotheses);
    if (j.contains("context"))
        t.context = j.at("context").get<std::map<std::string, std::string>>();
    const auto& r = j.at("response");
    t.response.response_text = r.at("response_text").get<std::string>();
    t.response.barged_in = r.at("barged_in").get<bool>();
    t.response.terminated_early = r.at("terminated_early").get<bool>();
    if (j.contains("defect_label")) t.defect_label = j.at("defect_label").get<bool>();
    if (j.contains("rephrase_of")) t.rephrase_of = j.at("rephrase_of").get<std::string>();
    if (j.contains("oracle_interpretation"))
        t.oracle_interpretation = interpretation_from_json(j.at("oracle_interpretation"));
    return t;
}

std::string turn_to_line(const Turn& t) { return turn_to_json(t).dump(); }

Turn turn_from_line(const std::string& line) { return turn_from_json(ojson::parse(line)); }

namespace {

std::vector<const Turn*> sorted_turn_view(const std::vector<Turn>& turns) {
    std::vector<const Turn*> view;
    view.reserve(turns.size());
    for (const Turn& t : turns) view.push_back(&t);
    std::sort(view.begin(), view.end(), [](const Turn* a, const Turn* b) {
        return std::tie(a->session_id, a->timestamp, a->turn_id) <
               std::tie(b->session_id, b->timestamp, b->turn_id);
    });
    return view;
}

void write_lines(const std::vector<const Turn*>& turns, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (const Turn* t : turns) out << turn_to_line(*t) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

void write_session_log(const std::vector<Session>& sessions, const std::filesystem::path& path) {
    write_turn_log(flatten(sessions).records, path);
}

void write_turn_log(const std::vector<Turn>& turns, const std::filesystem::path& path) {
    write_lines(sorted_turn_view(turns), path);
}

std::vector<Session> read_session_log(const std::filesystem::path& path) {
    Dataset d = read_turn_log(path);
    std::map<std::string, Session> by_session;
    for (Turn& t : d.records) {
        Session& s = by_session[t.session_id];
        if (s.turns.empty()) {
            s.session_id = t.session_id;
            s.user_id = user_key(t.session_id);
        }
        s.turns.push_back(std::move(t));
    }
    std::vector<Session> sessions;
    sessions.reserve(by_session.size());
    for (auto& [_, s] : by_session) {
        std::sort(s.turns.begin(), s.turns.end(), [](const Turn& a, const Turn& b) {
            return std::tie(a.timestamp, a.turn_id) < std::tie(b.timestamp, b.turn_id);
        });
        sessions.push_back(std::move(s));
    }
    return sessions;
}

Dataset read_turn_log(const std::filesystem::path& path, Provenance provenance) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open session log: " + path.string());
    Dataset d;
    d.provenance = provenance;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            d.records.push_back(turn_from_line(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    return d;
}

}  // namespace nlufb::core

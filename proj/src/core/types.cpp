#include "nlufb/core/types.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nlufb/core/rng.hpp"

namespace nlufb::core {

std::vector<Slot> Interpretation::canonical_slots() const {
    std::vector<Slot> sorted = slots;
    std::sort(sorted.begin(), sorted.end());
    return sorted;
}

bool Interpretation::operator==(const Interpretation& other) const {
    return domain == other.domain && intent == other.intent &&
           canonical_slots() == other.canonical_slots();
}

bool Interpretation::operator<(const Interpretation& other) const {
    if (domain != other.domain) return domain < other.domain;
    if (intent != other.intent) return intent < other.intent;
    return canonical_slots() < other.canonical_slots();
}

std::string format_interpretation(const Interpretation& p) {
    std::string out = p.domain + "/" + p.intent;
    if (!p.slots.empty()) {
        out += "[";
        bool first = true;
        for (const Slot& s : p.canonical_slots()) {
            if (!first) out += ";";
            out += s.type + "=" + s.value;
            first = false;
        }
        out += "]";
    }
    return out;
}

Interpretation parse_interpretation(const std::string& text) {
    Interpretation p;
    std::string body = text;
    auto bracket = body.find('[');
    std::string slot_part;
    if (bracket != std::string::npos) {
        if (body.back() != ']')
            throw std::invalid_argument("malformed interpretation literal: " + text);
        slot_part = body.substr(bracket + 1, body.size() - bracket - 2);
        body = body.substr(0, bracket);
    }
    auto slash = body.find('/');
    if (slash == std::string::npos)
        throw std::invalid_argument("interpretation literal needs Domain/Intent: " + text);
    p.domain = body.substr(0, slash);
    p.intent = body.substr(slash + 1);
    if (!slot_part.empty()) {
        std::stringstream ss(slot_part);
        std::string item;
        while (std::getline(ss, item, ';')) {
            auto eq = item.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("malformed slot literal: " + item);
            p.slots.push_back({item.substr(0, eq), item.substr(eq + 1)});
        }
    }
    validate_interpretation(p);
    return p;
}

void validate_interpretation(const Interpretation& p) {
    if (p.domain.empty() || p.intent.empty())
        throw std::invalid_argument("interpretation domain and intent must be non-empty");
    std::set<std::string> types;
    for (const Slot& s : p.slots) {
        if (!types.insert(s.type).second)
            throw std::invalid_argument("duplicate slot type: " + s.type);
    }
}

void validate_hypotheses(const std::vector<Hypothesis>& hyps) {
    if (hyps.empty()) throw std::invalid_argument("hypothesis list must be non-empty");
    for (size_t i = 0; i < hyps.size(); ++i) {
        const Hypothesis& h = hyps[i];
        validate_interpretation(h.interpretation);
        if (h.rank != static_cast<int>(i))
            throw std::invalid_argument("hypothesis ranks must run 0..k-1");
        if (h.confidence < 0.0 || h.confidence > 1.0)
            throw std::invalid_argument("hypothesis confidence outside [0,1]");
        if (i > 0 && h.confidence > hyps[i - 1].confidence + 1e-12)
            throw std::invalid_argument("hypothesis confidences must be non-increasing by rank");
    }
}

const Interpretation& Turn::top_interpretation() const {
    if (hypotheses.empty()) throw std::logic_error("turn has no hypotheses: " + turn_id);
    return hypotheses.front().interpretation;
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::live: return "live";
        case Provenance::train_split: return "train_split";
        case Provenance::valid_split: return "valid_split";
        case Provenance::target_defects: return "target_defects";
        case Provenance::curated: return "curated";
    }
    return "live";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "live") return Provenance::live;
    if (s == "train_split") return Provenance::train_split;
    if (s == "valid_split") return Provenance::valid_split;
    if (s == "target_defects") return Provenance::target_defects;
    if (s == "curated") return Provenance::curated;
    throw std::invalid_argument("unknown provenance: " + s);
}

InterpretationCatalog InterpretationCatalog::from_dataset(const Dataset& d) {
    std::set<Interpretation> seen;
    for (const Turn& t : d.records)
        for (const Hypothesis& h : t.hypotheses) seen.insert(h.interpretation);
    InterpretationCatalog catalog;
    catalog.entries.assign(seen.begin(), seen.end());
    return catalog;
}

bool InterpretationCatalog::contains(const Interpretation& p) const {
    return std::binary_search(entries.begin(), entries.end(), p);
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

std::string user_key(const std::string& session_id) {
    auto pos = session_id.find('#');
    return pos == std::string::npos ? session_id : session_id.substr(0, pos);
}

std::vector<Session> sessionize(const std::vector<Turn>& turns, int64_t session_gap_ms) {
    if (session_gap_ms <= 0) throw std::invalid_argument("session_gap_ms must be positive");
    std::set<std::string> ids;
    for (const Turn& t : turns) {
        if (!ids.insert(t.turn_id).second)
            throw std::invalid_argument("duplicate turn_id: " + t.turn_id);
    }

    std::map<std::string, std::vector<Turn>> by_user;
    for (const Turn& t : turns) by_user[user_key(t.session_id)].push_back(t);

    std::vector<Session> sessions;
    for (auto& [user, user_turns] : by_user) {
        std::sort(user_turns.begin(), user_turns.end(), [](const Turn& a, const Turn& b) {
            return std::tie(a.timestamp, a.turn_id) < std::tie(b.timestamp, b.turn_id);
        });
        size_t start = 0;
        int index = 0;
        auto emit = [&](size_t end) {
            Session s;
            s.user_id = user;
            s.session_id = user + "#" + std::to_string(index++);
            s.turns.assign(user_turns.begin() + static_cast<long>(start),
                           user_turns.begin() + static_cast<long>(end));
            sessions.push_back(std::move(s));
            start = end;
        };
        for (size_t i = 1; i < user_turns.size(); ++i) {
            if (user_turns[i].timestamp - user_turns[i - 1].timestamp > session_gap_ms) emit(i);
        }
        if (start < user_turns.size()) emit(user_turns.size());
    }
    return sessions;
}

Dataset flatten(const std::vector<Session>& sessions, Provenance provenance) {
    Dataset d;
    d.provenance = provenance;
    for (const Session& s : sessions)
        d.records.insert(d.records.end(), s.turns.begin(), s.turns.end());
    return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, std::pair<int, int> ratio,
                                          uint64_t seed) {
    if (d.records.empty()) throw std::invalid_argument("cannot split an empty dataset");
    if (ratio.first <= 0 || ratio.second <= 0)
        throw std::invalid_argument("split ratio components must be positive");

    std::map<std::string, std::vector<const Turn*>> by_session;
    for (const Turn& t : d.records) by_session[t.session_id].push_back(&t);

    std::vector<std::string> session_ids;
    session_ids.reserve(by_session.size());
    for (const auto& [sid, _] : by_session) session_ids.push_back(sid);
    Rng rng(seed);
    rng.shuffle(session_ids);

    const double total = static_cast<double>(d.records.size());
    const double target =
        total * static_cast<double>(ratio.first) / static_cast<double>(ratio.first + ratio.second);

    std::set<std::string> first_side;
    double assigned = 0;
    for (const std::string& sid : session_ids) {
        double size = static_cast<double>(by_session[sid].size());
        // Take the session only if it moves the first side closer to quota.
        if (std::abs(assigned + size - target) <= std::abs(assigned - target)) {
            first_side.insert(sid);
            assigned += size;
        }
    }

    Dataset a, b;
    a.provenance = Provenance::train_split;
    b.provenance = Provenance::valid_split;
    for (const Turn& t : d.records) {
        (first_side.count(t.session_id) ? a : b).records.push_back(t);
    }
    return {std::move(a), std::move(b)};
}

}  // namespace nlufb::core

#pragma once
// Core domain types for conversational traffic logs: interpretations,
// k-best hypotheses, turns, sessions, and turn-level datasets.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nlufb::core {

// One (slot_type, slot_value) pair. Slot types are unique within an
// interpretation.
struct Slot {
    std::string type;
    std::string value;

    bool operator==(const Slot&) const = default;
    auto operator<=>(const Slot&) const = default;
};

// A semantic interpretation: domain, intent, and slots. This is the unit
// ranked in a k-best list and the unit replaced by a correction.
//
// Equality is structural and slot-order-insensitive: two interpretations
// are equal iff domain, intent, and the slot *set* all match.
struct Interpretation {
    std::string domain;
    std::string intent;
    std::vector<Slot> slots;

    // Slots sorted by type; the canonical form used for comparison.
    std::vector<Slot> canonical_slots() const;

    bool operator==(const Interpretation& other) const;
    bool operator!=(const Interpretation& other) const { return !(*this == other); }
    bool operator<(const Interpretation& other) const;
};

// "Domain/Intent[type=value;type=value]" - used for grouping keys, catalog
// ordering, and config literals.
std::string format_interpretation(const Interpretation& p);

// Inverse of format_interpretation. Accepts "Domain/Intent" with no slots.
Interpretation parse_interpretation(const std::string& text);

// Throws std::invalid_argument if domain/intent are empty or slot types repeat.
void validate_interpretation(const Interpretation& p);

// One entry of a k-best list. rank 0 is the served (top) prediction.
struct Hypothesis {
    Interpretation interpretation;
    double confidence = 0.0;  // in [0,1]
    int rank = 0;

    bool operator==(const Hypothesis&) const = default;
};

// Ranks must run 0..k-1 with non-increasing confidences in [0,1].
void validate_hypotheses(const std::vector<Hypothesis>& hyps);

// System response signals. Consumed only by the dissatisfaction detector;
// never visible to any model feature.
struct ResponseSignals {
    std::string response_text;
    bool barged_in = false;
    bool terminated_early = false;

    bool operator==(const ResponseSignals&) const = default;
};

// One user request with everything logged about it.
//
// `oracle_interpretation` is populated only by the traffic simulator and is
// read only by simulator reports and the evaluator; feature extraction must
// never touch it.
struct Turn {
    std::string turn_id;
    std::string session_id;
    int64_t timestamp = 0;  // epoch milliseconds
    std::vector<std::string> utterance;  // normalized tokens
    std::vector<Hypothesis> hypotheses;  // k-best, rank order
    std::map<std::string, std::string> context;
    ResponseSignals response;
    std::optional<bool> defect_label;          // e_d, set by the annotator
    std::optional<std::string> rephrase_of;    // e_r: antecedent turn_id
    std::optional<Interpretation> oracle_interpretation;

    const Interpretation& top_interpretation() const;

    bool operator==(const Turn&) const = default;
};

// Time-consecutive turns by one user.
struct Session {
    std::string session_id;
    std::string user_id;
    std::vector<Turn> turns;

    bool operator==(const Session&) const = default;
};

enum class Provenance { live, train_split, valid_split, target_defects, curated };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// Turn-level view of traffic.
struct Dataset {
    std::vector<Turn> records;
    Provenance provenance = Provenance::live;
};

// All interpretations observed in training traffic, deduplicated and kept
// in canonical order so uniform sampling is deterministic.
struct InterpretationCatalog {
    std::vector<Interpretation> entries;  // sorted, unique

    static InterpretationCatalog from_dataset(const Dataset& d);
    bool contains(const Interpretation& p) const;
    size_t size() const { return entries.size(); }
};

// Lowercase + whitespace tokenization. Matches how utterances are stored
// on Turn and how rephrase similarity is computed.
std::vector<std::string> tokenize(const std::string& text);

// The user-level key a session_id derives from: everything before the
// first '#', or the whole id when no '#' is present.
std::string user_key(const std::string& session_id);

// Groups turns by user key, orders by (timestamp, turn_id), and splits
// whenever the gap between consecutive turns exceeds session_gap_ms.
// Turns are copied unmodified, so flattening the result reproduces the
// input multiset. Throws on duplicate turn_id.
std::vector<Session> sessionize(const std::vector<Turn>& turns, int64_t session_gap_ms);

// Flattens sessions into a turn-level dataset with the given provenance.
Dataset flatten(const std::vector<Session>& sessions, Provenance provenance = Provenance::live);

// Session-granular split, deterministic given seed. Whole sessions are
// assigned greedily (shuffled order) so rephrase pairs are never severed;
// the first side's turn count lands as close to ratio.first/(first+second)
// as session granularity allows. Throws on empty input.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d,
                                          std::pair<int, int> ratio,
                                          uint64_t seed);

}  // namespace nlufb::core

#include "nlufb/feedback/feedback.hpp"

#include <set>
#include <stdexcept>

namespace nlufb::feedback {

using core::Session;
using core::Turn;

void validate(const FeedbackConfig& cfg) {
    if (cfg.rephrase_similarity_threshold < 0.0 || cfg.rephrase_similarity_threshold > 1.0)
        throw std::invalid_argument("rephrase_similarity_threshold must be in [0,1]");
    if (cfg.rephrase_window_turns <= 0 || cfg.rephrase_window_ms <= 0)
        throw std::invalid_argument("rephrase windows must be positive");
}

bool detect_defect(const Turn& t) {
    return t.response.barged_in || t.response.terminated_early;
}

double token_jaccard(std::span<const std::string> a, std::span<const std::string> b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 0.0;
    size_t inter = 0;
    for (const std::string& tok : sa) inter += sb.count(tok);
    size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

bool detect_rephrase(const Turn& earlier, const Turn& later, int turn_distance,
                     const FeedbackConfig& cfg) {
    if (earlier.session_id != later.session_id)
        throw std::invalid_argument("rephrase detection is within-session only: " +
                                    earlier.turn_id + " vs " + later.turn_id);
    if (turn_distance <= 0 || turn_distance > cfg.rephrase_window_turns) return false;
    if (later.timestamp - earlier.timestamp > cfg.rephrase_window_ms) return false;
    return token_jaccard(earlier.utterance, later.utterance) >=
           cfg.rephrase_similarity_threshold;
}

std::vector<Session> annotate_sessions(std::vector<Session> sessions, const FeedbackConfig& cfg) {
    validate(cfg);
    for (Session& s : sessions) {
        for (Turn& t : s.turns) t.defect_label = detect_defect(t);
        for (size_t j = 0; j < s.turns.size(); ++j) {
            Turn& later = s.turns[j];
            later.rephrase_of.reset();
            for (size_t back = 1; back <= static_cast<size_t>(cfg.rephrase_window_turns) && back <= j;
                 ++back) {
                const Turn& earlier = s.turns[j - back];
                if (detect_rephrase(earlier, later, static_cast<int>(back), cfg)) {
                    later.rephrase_of = earlier.turn_id;
                    break;  // closest qualifying antecedent wins
                }
            }
        }
    }
    return sessions;
}

}  // namespace nlufb::feedback

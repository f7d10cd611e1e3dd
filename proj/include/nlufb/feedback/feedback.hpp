#pragma once
// Rule-based dissatisfaction and rephrase detectors. These populate the
// defect and rephrase labels that all downstream surrogate training
// consumes.

#include <span>
#include <string>
#include <vector>

#include "nlufb/core/types.hpp"

namespace nlufb::feedback {

struct FeedbackConfig {
    double rephrase_similarity_threshold = 0.5;  // token Jaccard, inclusive
    int rephrase_window_turns = 5;
    int64_t rephrase_window_ms = 90000;
};

void validate(const FeedbackConfig& cfg);

// Dissatisfaction rule: barge-in or early termination.
bool detect_defect(const core::Turn& t);

// Jaccard similarity over unique tokens.
double token_jaccard(std::span<const std::string> a, std::span<const std::string> b);

// True iff `later` rephrases `earlier`: both window constraints hold and
// the token Jaccard of the normalized utterances clears the threshold.
// `turn_distance` is the number of turns separating them in the session.
// Throws on a cross-session pair.
bool detect_rephrase(const core::Turn& earlier, const core::Turn& later, int turn_distance,
                     const FeedbackConfig& cfg);

// Sets defect_label on every turn and rephrase_of on every turn with a
// qualifying antecedent (closest earlier turn wins). Idempotent.
std::vector<core::Session> annotate_sessions(std::vector<core::Session> sessions,
                                             const FeedbackConfig& cfg);

}  // namespace nlufb::feedback

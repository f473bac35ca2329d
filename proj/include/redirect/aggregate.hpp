#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "redirect/measures.hpp"
#include "redirect/segmentation.hpp"

namespace redirect {

enum class Measure { redirection, similarity_difference, dependence, orientation };

std::string_view measure_name(Measure m);
std::optional<Measure> parse_measure(std::string_view s);

/// The measure's value for a score, or nothing when it was not computed
/// (unscored utterances have no redirection).
std::optional<double> measure_value(const UtteranceScore& score, Measure m);

/// Per-session, per-role means of one measure. Unscored utterances are left
/// out; a role with no values makes the summary partial, with NaN averages
/// and relative values.
struct SessionSummary {
  std::string conversation_id;
  std::size_t session_index = 0;
  double t_avg = 0.0;  // role A
  double c_avg = 0.0;  // role B
  double t_rel = 0.5;
  double c_rel = 0.5;
  std::size_t n_scored_a = 0;
  std::size_t n_scored_b = 0;
  bool partial = false;
  std::size_t turn_count = 0;
  std::size_t token_count = 0;
};

SessionSummary session_averages(std::span<const UtteranceScore> scores, const Session& session,
                                Measure measure = Measure::redirection);

/// exp(t) / (exp(t) + exp(c)) and its complement, evaluated as a logistic
/// of the difference so large magnitudes cannot overflow.
std::pair<double, double> relative_redirection(double t_avg, double c_avg);

struct ConversationSummaries {
  std::string conversation_id;
  std::optional<Outcome> outcome;
  std::optional<std::string> outcome_reason;
  std::vector<SessionSummary> sessions;
};

std::vector<ConversationSummaries> summarize(const SegmentedCorpus& corpus,
                                             const std::vector<ScoredConversation>& scores,
                                             Measure measure = Measure::redirection);

/// First-k vs last-k means of a conversation. NaN when no session in the
/// slice has a value.
struct PhaseRow {
  std::string conversation_id;
  std::size_t session_count = 0;
  double a_avg_first = 0.0, a_avg_last = 0.0;
  double b_avg_first = 0.0, b_avg_last = 0.0;
  double a_rel_first = 0.0, a_rel_last = 0.0;
  double b_rel_first = 0.0, b_rel_last = 0.0;
};

/// One row per conversation with at least min_sessions sessions. Throws
/// ConfigError when k < 1 or min_sessions < 2k.
std::vector<PhaseRow> phase_slices(std::span<const ConversationSummaries> conversations,
                                   std::size_t k = 5, std::size_t min_sessions = 10);

struct CohortConfig {
  std::set<std::string> unsuccessful_codes = {"s2", "s3", "s4", "s6", "c3"};
  std::size_t min_sessions = 3;
  std::size_t first_k = 3;
  std::uint64_t seed = 0;
};

struct CohortSelection {
  std::vector<std::string> unsuccessful;  // sorted ids
  std::vector<std::string> control;       // sorted ids
  std::vector<std::string> warnings;
};

/// Unsuccessful: outcome_reason in the code set and >= min_sessions
/// sessions. Control: an equally sized seeded uniform sample without
/// replacement from conversations with no outcome_reason, not labeled
/// `unlabeled`, with >= min_sessions sessions. Throws ConfigError when no
/// conversation carries outcome metadata.
CohortSelection cohort_filter(const SegmentedCorpus& corpus, const CohortConfig& cfg);

/// Mean of one role's session averages over the first `first_k` sessions;
/// NaN when none has a value.
double early_role_mean(const ConversationSummaries& conversation, Role role, std::size_t first_k);

}  // namespace redirect

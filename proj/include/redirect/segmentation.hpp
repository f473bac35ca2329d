#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "redirect/corpus.hpp"

namespace redirect {

/// Where maximal same-role runs are collapsed into turns.
enum class MergeMode {
  within_burst,  // after splitting: a long gap between two same-role messages still splits
  before_split,  // merge the whole conversation, then split on turn start times
};

struct SegmentationConfig {
  double n_multiplier = 100.0;  // split when a reply time exceeds N x median
  std::size_t min_turns = 4;
  MergeMode merge = MergeMode::within_burst;
  AutomatedFilter automated;
  bool drop_video_bursts = false;  // drop bursts holding an utterance with meta video=true

  /// Throws ConfigError when n_multiplier <= 0 or min_turns < 2.
  void validate() const;
};

struct SessionCovariates {
  std::size_t turn_count = 0;
  std::size_t token_count_total = 0;
  double median_token_count = 0.0;

  friend bool operator==(const SessionCovariates&, const SessionCovariates&) = default;
};

struct Session {
  std::string conversation_id;
  std::size_t index = 0;  // 0-based among surviving sessions of the conversation
  std::vector<Utterance> utterances;  // strictly alternating roles
  SessionCovariates covariates;

  friend bool operator==(const Session&, const Session&) = default;
};

struct SegmentedConversation {
  std::string conversation_id;
  std::optional<Outcome> outcome;
  std::optional<std::string> outcome_reason;
  std::vector<Session> sessions;
};

struct SegmentedCorpus {
  std::vector<SegmentedConversation> conversations;  // corpus order
  std::size_t skipped_conversations = 0;              // median undefined
  std::size_t total_sessions() const;
};

/// Median gap between consecutive utterances (any roles) over the whole
/// conversation. Throws DegenerateInputError for fewer than 2 utterances.
double median_reply_time(std::span<const Utterance> utterances);
double median_reply_time(const Conversation& conv);

std::vector<Session> split_sessions(const Conversation& conv, const SegmentationConfig& cfg);

/// Segments every conversation; conversations without a defined median are
/// counted in skipped_conversations. Parallel over conversations.
SegmentedCorpus segment_corpus(const Corpus& corpus, const SegmentationConfig& cfg,
                               unsigned workers = 1);

/// True when the session satisfies alternation, min_turns and >= 2
/// utterances per role.
bool is_valid_session(std::span<const Utterance> utterances, std::size_t min_turns);

struct SweepRow {
  double n = 0.0;
  double mean_sessions = 0.0;
  double median_sessions = 0.0;
  double stdev_sessions = 0.0;
};

/// Session-count statistics across conversations for each N. The standard
/// deviation is the sample one (0 for a single conversation).
std::vector<SweepRow> n_sweep(const Corpus& corpus, std::span<const double> n_values,
                              const SegmentationConfig& base);

}  // namespace redirect

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "redirect/scorer.hpp"
#include "redirect/segmentation.hpp"
#include "redirect/tfidf.hpp"

namespace redirect {

/// Four consecutive turns of one session around a focal utterance, e.g.
/// (T_{k-1}, C_k, T_k, C_{k+1}) for a role-A focal. Non-owning.
struct AdjacencyWindow {
  const Utterance* prev_other = nullptr;
  const Utterance* prev_self = nullptr;
  const Utterance* focal = nullptr;
  const Utterance* reply = nullptr;

  /// prev_other.role == focal.role != prev_self.role == reply.role.
  bool valid() const;
};

struct PositionedWindow {
  std::size_t position = 0;  // index of the focal utterance in the session
  AdjacencyWindow window;
};

/// Every complete window of a session: focal positions 2 .. size-2. The
/// first two turns have no prev_other / prev_self and the last has no reply.
std::vector<PositionedWindow> adjacency_windows(const Session& session);

struct UtteranceScore {
  std::string conversation_id;
  std::size_t session_index = 0;
  std::size_t position = 0;
  std::string utterance_id;
  Role role = Role::A;
  bool scored = false;  // false when the scorer failed for P or Q
  double p_likelihood = 0.0;
  double q_likelihood = 0.0;
  double redirection = 0.0;
  std::optional<double> similarity_difference;
  bool similarity_degenerate = false;  // some text had no known terms
  std::optional<double> dependence;
  std::optional<double> orientation;  // ingested, never computed here
};

/// Log-odds ratio of the reply's likelihood after the focal utterance (P)
/// against its likelihood after the speaker's previous utterance (Q):
///   P = p(reply | prev_self, focal),  Q = p(reply | prev_self, prev_other),
///   R = logit(P) - logit(Q).
/// A ScoringError from the backend leaves the score unscored.
UtteranceScore redirection_score(const AdjacencyWindow& window, const Scorer& scorer);

struct SimilarityResult {
  double value = 0.0;  // in [-2, 2]
  bool degenerate = false;
};

/// cos(reply, focal) - cos(reply, prev_other) under the embedder. A text
/// with no known terms contributes cosine 0 and sets `degenerate`.
SimilarityResult similarity_difference(const AdjacencyWindow& window,
                                       const TfIdfEmbedder& embedder);

/// logit p(reply | focal) - logit p(reply | no context). Throws ScoringError.
double dependence_score(const AdjacencyWindow& window, const Scorer& scorer);

struct MeasureOptions {
  bool similarity = false;
  bool dependence = false;
};

std::vector<UtteranceScore> score_session(const Session& session, const Scorer& scorer,
                                          const TfIdfEmbedder* embedder,
                                          const MeasureOptions& options);

struct ScoredConversation {
  std::string conversation_id;
  std::vector<std::vector<UtteranceScore>> sessions;  // parallel to the segmented sessions
};

/// Scores every window of every session, parallel over conversations;
/// output order follows the segmented corpus.
std::vector<ScoredConversation> score_corpus(const SegmentedCorpus& corpus, const Scorer& scorer,
                                             const TfIdfEmbedder* embedder,
                                             const MeasureOptions& options, unsigned workers = 1);

struct Excerpt {
  std::string conversation_id;
  std::size_t session_index = 0;
  std::size_t position = 0;
  double redirection = 0.0;
  std::vector<Utterance> utterances;  // ends with the reply to the focal utterance
};

struct ExtremePair {
  Excerpt highest;
  Excerpt lowest;
};

/// Excerpts around the highest- and lowest-redirection utterances of a
/// conversation. Ties go to the earliest position; the lowest is taken
/// among the utterances other than the chosen highest one. Throws
/// DegenerateInputError with fewer than 2 scored utterances.
ExtremePair extract_extreme_pairs(const SegmentedConversation& conversation,
                                  const ScoredConversation& scores, std::size_t window = 4);

/// Reads "utterance_id,orientation" CSV (header optional).
std::unordered_map<std::string, double> load_orientation(const std::filesystem::path& path);
void attach_orientation(std::vector<ScoredConversation>& scores,
                        const std::unordered_map<std::string, double>& orientation);

}  // namespace redirect

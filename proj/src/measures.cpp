#include "redirect/measures.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "redirect/error.hpp"
#include "redirect/parallel.hpp"

namespace redirect {
namespace {

double likelihood(const Scorer& scorer, std::vector<Turn> context, const Utterance& reply) {
  ScoreRequest request;
  request.context = std::move(context);
  request.reply = Turn{reply.role, reply.text};
  return reply_probability(sequence_logprob(scorer, request));
}

Turn turn_of(const Utterance* u) { return Turn{u->role, u->text}; }

void require_valid(const AdjacencyWindow& w) {
  if (!w.valid()) throw DegenerateInputError("adjacency window roles do not alternate");
}

Excerpt excerpt_at(const SegmentedConversation& conv, const UtteranceScore& s,
                   std::size_t window) {
  const auto& utts = conv.sessions.at(s.session_index).utterances;
  Excerpt e;
  e.conversation_id = conv.conversation_id;
  e.session_index = s.session_index;
  e.position = s.position;
  e.redirection = s.redirection;
  const std::size_t last = std::min(s.position + 1, utts.size() - 1);
  const std::size_t span = std::max<std::size_t>(window, 2);
  const std::size_t first = last + 1 >= span ? last + 1 - span : 0;
  e.utterances.assign(utts.begin() + static_cast<std::ptrdiff_t>(first),
                      utts.begin() + static_cast<std::ptrdiff_t>(last + 1));
  return e;
}

}  // namespace

bool AdjacencyWindow::valid() const {
  if (!prev_other || !prev_self || !focal || !reply) return false;
  return prev_other->role == focal->role && prev_self->role == reply->role &&
         focal->role != reply->role;
}

std::vector<PositionedWindow> adjacency_windows(const Session& session) {
  std::vector<PositionedWindow> windows;
  const auto& u = session.utterances;
  for (std::size_t i = 2; i + 1 < u.size(); ++i)
    windows.push_back({i, AdjacencyWindow{&u[i - 2], &u[i - 1], &u[i], &u[i + 1]}});
  return windows;
}

UtteranceScore redirection_score(const AdjacencyWindow& window, const Scorer& scorer) {
  require_valid(window);
  UtteranceScore s;
  s.utterance_id = window.focal->id;
  s.conversation_id = window.focal->conversation_id;
  s.role = window.focal->role;
  try {
    s.p_likelihood = likelihood(scorer, {turn_of(window.prev_self), turn_of(window.focal)},
                                *window.reply);
    s.q_likelihood = likelihood(scorer, {turn_of(window.prev_self), turn_of(window.prev_other)},
                                *window.reply);
  } catch (const ScoringError&) {
    s.scored = false;
    return s;
  }
  s.redirection = logit(s.p_likelihood) - logit(s.q_likelihood);
  s.scored = true;
  return s;
}

SimilarityResult similarity_difference(const AdjacencyWindow& window,
                                       const TfIdfEmbedder& embedder) {
  require_valid(window);
  const SparseVector reply = embedder.embed(window.reply->text);
  const SparseVector focal = embedder.embed(window.focal->text);
  const SparseVector prev = embedder.embed(window.prev_other->text);
  SimilarityResult r;
  r.degenerate = reply.empty() || focal.empty() || prev.empty();
  r.value = dot(reply, focal) - dot(reply, prev);
  return r;
}

double dependence_score(const AdjacencyWindow& window, const Scorer& scorer) {
  require_valid(window);
  const double conditional = likelihood(scorer, {turn_of(window.focal)}, *window.reply);
  const double marginal = likelihood(scorer, {}, *window.reply);
  return logit(conditional) - logit(marginal);
}

std::vector<UtteranceScore> score_session(const Session& session, const Scorer& scorer,
                                          const TfIdfEmbedder* embedder,
                                          const MeasureOptions& options) {
  std::vector<UtteranceScore> scores;
  for (const auto& [position, window] : adjacency_windows(session)) {
    UtteranceScore s = redirection_score(window, scorer);
    s.conversation_id = session.conversation_id;
    s.session_index = session.index;
    s.position = position;
    if (options.similarity && embedder != nullptr) {
      const auto sim = similarity_difference(window, *embedder);
      s.similarity_difference = sim.value;
      s.similarity_degenerate = sim.degenerate;
    }
    if (options.dependence) {
      try {
        s.dependence = dependence_score(window, scorer);
      } catch (const ScoringError&) {
      }
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

std::vector<ScoredConversation> score_corpus(const SegmentedCorpus& corpus, const Scorer& scorer,
                                             const TfIdfEmbedder* embedder,
                                             const MeasureOptions& options, unsigned workers) {
  std::vector<ScoredConversation> out(corpus.conversations.size());
  parallel_for(corpus.conversations.size(), workers, [&](std::size_t i) {
    const auto& conv = corpus.conversations[i];
    out[i].conversation_id = conv.conversation_id;
    out[i].sessions.reserve(conv.sessions.size());
    for (const auto& s : conv.sessions)
      out[i].sessions.push_back(score_session(s, scorer, embedder, options));
  });
  return out;
}

ExtremePair extract_extreme_pairs(const SegmentedConversation& conversation,
                                  const ScoredConversation& scores, std::size_t window) {
  std::vector<const UtteranceScore*> scored;
  for (const auto& session : scores.sessions)
    for (const auto& s : session)
      if (s.scored) scored.push_back(&s);
  if (scored.size() < 2)
    throw DegenerateInputError("conversation " + conversation.conversation_id +
                               " has fewer than 2 scored utterances");
  std::size_t hi = 0;
  for (std::size_t i = 1; i < scored.size(); ++i)
    if (scored[i]->redirection > scored[hi]->redirection) hi = i;
  std::size_t lo = hi == 0 ? 1 : 0;
  for (std::size_t i = 0; i < scored.size(); ++i)
    if (i != hi && scored[i]->redirection < scored[lo]->redirection) lo = i;
  return ExtremePair{excerpt_at(conversation, *scored[hi], window),
                     excerpt_at(conversation, *scored[lo], window)};
}

std::unordered_map<std::string, double> load_orientation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open orientation file " + path.string());
  std::unordered_map<std::string, double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ParseError(line_no, "expected utterance_id,orientation");
    const std::string id = line.substr(0, comma);
    const std::string num = line.substr(comma + 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec != std::errc() || ptr != num.data() + num.size()) {
      if (line_no == 1) continue;  // header
      throw ParseError(line_no, "orientation is not a number");
    }
    values[id] = v;
  }
  return values;
}

void attach_orientation(std::vector<ScoredConversation>& scores,
                        const std::unordered_map<std::string, double>& orientation) {
  for (auto& conv : scores)
    for (auto& session : conv.sessions)
      for (auto& s : session)
        if (auto it = orientation.find(s.utterance_id); it != orientation.end())
          s.orientation = it->second;
}

}  // namespace redirect

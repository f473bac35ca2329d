#include "redirect/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "redirect/error.hpp"
#include "redirect/random.hpp"

namespace redirect {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RunningMean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    if (std::isnan(v)) return;
    sum += v;
    ++n;
  }
  double value() const { return n == 0 ? kNaN : sum / static_cast<double>(n); }
};

}  // namespace

std::string_view measure_name(Measure m) {
  switch (m) {
    case Measure::redirection: return "redirection";
    case Measure::similarity_difference: return "similarity_difference";
    case Measure::dependence: return "dependence";
    case Measure::orientation: return "orientation";
  }
  return "redirection";
}

std::optional<Measure> parse_measure(std::string_view s) {
  for (Measure m : {Measure::redirection, Measure::similarity_difference, Measure::dependence,
                    Measure::orientation})
    if (measure_name(m) == s) return m;
  return std::nullopt;
}

std::optional<double> measure_value(const UtteranceScore& score, Measure m) {
  switch (m) {
    case Measure::redirection:
      return score.scored ? std::optional<double>(score.redirection) : std::nullopt;
    case Measure::similarity_difference: return score.similarity_difference;
    case Measure::dependence: return score.dependence;
    case Measure::orientation: return score.orientation;
  }
  return std::nullopt;
}

std::pair<double, double> relative_redirection(double t_avg, double c_avg) {
  const double d = c_avg - t_avg;
  double t_rel;
  double c_rel;
  if (d >= 0.0) {
    const double e = std::exp(-d);
    t_rel = e / (1.0 + e);
    c_rel = 1.0 / (1.0 + e);
  } else {
    const double e = std::exp(d);
    t_rel = 1.0 / (1.0 + e);
    c_rel = e / (1.0 + e);
  }
  return {t_rel, c_rel};
}

SessionSummary session_averages(std::span<const UtteranceScore> scores, const Session& session,
                                Measure measure) {
  SessionSummary s;
  s.conversation_id = session.conversation_id;
  s.session_index = session.index;
  s.turn_count = session.covariates.turn_count;
  s.token_count = session.covariates.token_count_total;
  double sum_a = 0.0;
  double sum_b = 0.0;
  for (const auto& score : scores) {
    const auto v = measure_value(score, measure);
    if (!v) continue;
    if (score.role == Role::A) {
      sum_a += *v;
      ++s.n_scored_a;
    } else {
      sum_b += *v;
      ++s.n_scored_b;
    }
  }
  s.t_avg = s.n_scored_a ? sum_a / static_cast<double>(s.n_scored_a) : kNaN;
  s.c_avg = s.n_scored_b ? sum_b / static_cast<double>(s.n_scored_b) : kNaN;
  s.partial = s.n_scored_a == 0 || s.n_scored_b == 0;
  if (s.partial) {
    s.t_rel = kNaN;
    s.c_rel = kNaN;
  } else {
    std::tie(s.t_rel, s.c_rel) = relative_redirection(s.t_avg, s.c_avg);
  }
  return s;
}

std::vector<ConversationSummaries> summarize(const SegmentedCorpus& corpus,
                                             const std::vector<ScoredConversation>& scores,
                                             Measure measure) {
  if (scores.size() != corpus.conversations.size())
    throw ConfigError("scores do not match the segmented corpus");
  std::vector<ConversationSummaries> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& conv = corpus.conversations[i];
    ConversationSummaries cs;
    cs.conversation_id = conv.conversation_id;
    cs.outcome = conv.outcome;
    cs.outcome_reason = conv.outcome_reason;
    for (std::size_t j = 0; j < conv.sessions.size(); ++j)
      cs.sessions.push_back(session_averages(scores[i].sessions.at(j), conv.sessions[j], measure));
    out.push_back(std::move(cs));
  }
  return out;
}

std::vector<PhaseRow> phase_slices(std::span<const ConversationSummaries> conversations,
                                   std::size_t k, std::size_t min_sessions) {
  if (k < 1) throw ConfigError("phase window k must be at least 1");
  if (min_sessions < 2 * k) throw ConfigError("min_sessions must be at least 2k");
  std::vector<PhaseRow> rows;
  for (const auto& conv : conversations) {
    const std::size_t n = conv.sessions.size();
    if (n < min_sessions) continue;
    RunningMean af, al, bf, bl, arf, arl, brf, brl;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& first = conv.sessions[i];
      const auto& last = conv.sessions[n - k + i];
      af.add(first.t_avg);
      bf.add(first.c_avg);
      arf.add(first.t_rel);
      brf.add(first.c_rel);
      al.add(last.t_avg);
      bl.add(last.c_avg);
      arl.add(last.t_rel);
      brl.add(last.c_rel);
    }
    PhaseRow row;
    row.conversation_id = conv.conversation_id;
    row.session_count = n;
    row.a_avg_first = af.value();
    row.a_avg_last = al.value();
    row.b_avg_first = bf.value();
    row.b_avg_last = bl.value();
    row.a_rel_first = arf.value();
    row.a_rel_last = arl.value();
    row.b_rel_first = brf.value();
    row.b_rel_last = brl.value();
    rows.push_back(std::move(row));
  }
  return rows;
}

CohortSelection cohort_filter(const SegmentedCorpus& corpus, const CohortConfig& cfg) {
  const bool any_labels = std::any_of(
      corpus.conversations.begin(), corpus.conversations.end(),
      [](const SegmentedConversation& c) { return c.outcome || c.outcome_reason; });
  if (!any_labels) throw ConfigError("corpus carries no outcome metadata");

  CohortSelection sel;
  std::vector<std::string> pool;
  for (const auto& conv : corpus.conversations) {
    if (conv.sessions.size() < cfg.min_sessions) continue;
    if (conv.outcome_reason) {
      if (cfg.unsuccessful_codes.count(*conv.outcome_reason))
        sel.unsuccessful.push_back(conv.conversation_id);
    } else if (conv.outcome != Outcome::unlabeled && conv.outcome != Outcome::unsuccessful) {
      pool.push_back(conv.conversation_id);
    }
  }
  std::sort(sel.unsuccessful.begin(), sel.unsuccessful.end());
  std::sort(pool.begin(), pool.end());
  if (pool.size() < sel.unsuccessful.size()) {
    sel.warnings.push_back("control pool (" + std::to_string(pool.size()) +
                           ") smaller than unsuccessful set (" +
                           std::to_string(sel.unsuccessful.size()) + "); using full pool");
    sel.control = pool;
  } else {
    Rng rng(derive_seed(cfg.seed, "control-sample"));
    shuffle_in_place(std::span<std::string>(pool), rng);
    sel.control.assign(pool.begin(),
                       pool.begin() + static_cast<std::ptrdiff_t>(sel.unsuccessful.size()));
    std::sort(sel.control.begin(), sel.control.end());
  }
  return sel;
}

double early_role_mean(const ConversationSummaries& conversation, Role role, std::size_t first_k) {
  RunningMean m;
  const std::size_t n = std::min(first_k, conversation.sessions.size());
  for (std::size_t i = 0; i < n; ++i)
    m.add(role == Role::A ? conversation.sessions[i].t_avg : conversation.sessions[i].c_avg);
  return m.value();
}

}  // namespace redirect

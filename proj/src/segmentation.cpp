#include "redirect/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "redirect/error.hpp"
#include "redirect/parallel.hpp"
#include "redirect/text.hpp"

namespace redirect {
namespace {

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  if (n % 2 == 1) return values[n / 2];
  return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

bool has_video(const std::vector<Utterance>& burst) {
  return std::any_of(burst.begin(), burst.end(), [](const Utterance& u) {
    auto it = u.meta.find("video");
    return it != u.meta.end() && (it->second == "true" || it->second == "1");
  });
}

SessionCovariates covariates_of(const std::vector<Utterance>& utterances) {
  SessionCovariates cov;
  cov.turn_count = utterances.size();
  std::vector<double> per_turn;
  per_turn.reserve(utterances.size());
  for (const auto& u : utterances) {
    const std::size_t n = tokenize(u.text, Punctuation::drop).size();
    cov.token_count_total += n;
    per_turn.push_back(static_cast<double>(n));
  }
  if (!per_turn.empty()) cov.median_token_count = median_of(std::move(per_turn));
  return cov;
}

// Boundaries go before every utterance whose gap to its predecessor is
// strictly above the threshold.
std::vector<std::vector<Utterance>> bursts_of(const std::vector<Utterance>& utterances,
                                              double threshold) {
  std::vector<std::vector<Utterance>> bursts;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const bool boundary =
        i == 0 || static_cast<double>(utterances[i].timestamp - utterances[i - 1].timestamp) >
                      threshold;
    if (boundary) bursts.emplace_back();
    bursts.back().push_back(utterances[i]);
  }
  return bursts;
}

}  // namespace

void SegmentationConfig::validate() const {
  if (!(n_multiplier > 0.0)) throw ConfigError("n_multiplier must be positive");
  if (min_turns < 2) throw ConfigError("min_turns must be at least 2");
}

std::size_t SegmentedCorpus::total_sessions() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.sessions.size();
  return n;
}

double median_reply_time(std::span<const Utterance> utterances) {
  if (utterances.size() < 2)
    throw DegenerateInputError("median reply time needs at least 2 utterances");
  std::vector<double> deltas;
  deltas.reserve(utterances.size() - 1);
  for (std::size_t i = 1; i < utterances.size(); ++i)
    deltas.push_back(static_cast<double>(utterances[i].timestamp - utterances[i - 1].timestamp));
  return median_of(std::move(deltas));
}

double median_reply_time(const Conversation& conv) {
  return median_reply_time(std::span<const Utterance>(conv.utterances));
}

bool is_valid_session(std::span<const Utterance> utterances, std::size_t min_turns) {
  if (utterances.size() < min_turns) return false;
  std::size_t per_role[2] = {0, 0};
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (i > 0 && utterances[i].role == utterances[i - 1].role) return false;
    ++per_role[static_cast<int>(utterances[i].role)];
  }
  return per_role[0] >= 2 && per_role[1] >= 2;
}

std::vector<Session> split_sessions(const Conversation& conv, const SegmentationConfig& cfg) {
  cfg.validate();
  // The median always comes from the raw conversation, before automated
  // messages are removed or turns merged.
  const double threshold = cfg.n_multiplier * median_reply_time(conv);

  std::vector<Utterance> stream = conv.utterances;
  if (cfg.merge == MergeMode::before_split)
    stream = merge_turns(std::span<const Utterance>(filter_automated(
        std::span<const Utterance>(stream), cfg.automated)));

  std::vector<Session> sessions;
  for (auto& burst : bursts_of(stream, threshold)) {
    if (cfg.drop_video_bursts && has_video(burst)) continue;
    std::vector<Utterance> turns = filter_automated(std::span<const Utterance>(burst), cfg.automated);
    turns = merge_turns(std::span<const Utterance>(turns));
    if (!is_valid_session(turns, cfg.min_turns)) continue;
    Session s;
    s.conversation_id = conv.id;
    s.index = sessions.size();
    s.covariates = covariates_of(turns);
    s.utterances = std::move(turns);
    sessions.push_back(std::move(s));
  }
  return sessions;
}

SegmentedCorpus segment_corpus(const Corpus& corpus, const SegmentationConfig& cfg,
                               unsigned workers) {
  cfg.validate();
  SegmentedCorpus out;
  out.conversations.resize(corpus.conversations.size());
  std::vector<char> skipped(corpus.conversations.size(), 0);
  parallel_for(corpus.conversations.size(), workers, [&](std::size_t i) {
    const Conversation& conv = corpus.conversations[i];
    auto& seg = out.conversations[i];
    seg.conversation_id = conv.id;
    seg.outcome = conv.outcome;
    seg.outcome_reason = conv.outcome_reason;
    if (conv.utterances.size() < 2) {
      skipped[i] = 1;
      return;
    }
    seg.sessions = split_sessions(conv, cfg);
  });
  out.skipped_conversations =
      static_cast<std::size_t>(std::count(skipped.begin(), skipped.end(), 1));
  return out;
}

std::vector<SweepRow> n_sweep(const Corpus& corpus, std::span<const double> n_values,
                              const SegmentationConfig& base) {
  if (n_values.empty()) throw ConfigError("n_sweep needs at least one N");
  std::vector<SweepRow> rows;
  for (double n : n_values) {
    SegmentationConfig cfg = base;
    cfg.n_multiplier = n;
    cfg.validate();
    std::vector<double> counts;
    for (const auto& conv : corpus.conversations) {
      if (conv.utterances.size() < 2) continue;
      counts.push_back(static_cast<double>(split_sessions(conv, cfg).size()));
    }
    SweepRow row;
    row.n = n;
    if (!counts.empty()) {
      double sum = 0.0;
      for (double c : counts) sum += c;
      row.mean_sessions = sum / static_cast<double>(counts.size());
      row.median_sessions = median_of(counts);
      if (counts.size() > 1) {
        double ss = 0.0;
        for (double c : counts) ss += (c - row.mean_sessions) * (c - row.mean_sessions);
        row.stdev_sessions = std::sqrt(ss / static_cast<double>(counts.size() - 1));
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace redirect

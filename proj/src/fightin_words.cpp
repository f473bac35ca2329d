#include "redirect/fightin_words.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "redirect/error.hpp"
#include "redirect/text.hpp"

namespace redirect {
namespace {

std::size_t total(const TermCounts& c) {
  return std::accumulate(c.begin(), c.end(), std::size_t{0},
                         [](std::size_t s, const auto& kv) { return s + kv.second; });
}

std::size_t count_of(const TermCounts& c, const std::string& term) {
  auto it = c.find(term);
  return it == c.end() ? 0 : it->second;
}

template <typename PriorFn>
std::vector<TermContrast> contrast(const TermCounts& c1, const TermCounts& c2, double alpha_0,
                                   PriorFn prior) {
  const double n1 = static_cast<double>(total(c1));
  const double n2 = static_cast<double>(total(c2));
  if (n1 == 0.0 || n2 == 0.0) throw DegenerateInputError("log-odds contrast needs two non-empty corpora");

  std::set<std::string> vocab;
  for (const auto& kv : c1) vocab.insert(kv.first);
  for (const auto& kv : c2) vocab.insert(kv.first);

  std::vector<TermContrast> out;
  out.reserve(vocab.size());
  for (const auto& term : vocab) {
    TermContrast t;
    t.term = term;
    t.count_1 = count_of(c1, term);
    t.count_2 = count_of(c2, term);
    // With a single term the odds are undefined on both sides.
    if (vocab.size() > 1) {
      const double a = prior(t.count_1 + t.count_2);
      const double y1 = static_cast<double>(t.count_1);
      const double y2 = static_cast<double>(t.count_2);
      const double l1 = std::log(y1 + a) - std::log(n1 + alpha_0 - y1 - a);
      const double l2 = std::log(y2 + a) - std::log(n2 + alpha_0 - y2 - a);
      t.delta = l1 - l2;
      t.z = t.delta / std::sqrt(1.0 / (y1 + a) + 1.0 / (y2 + a));
    }
    out.push_back(std::move(t));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TermContrast& a, const TermContrast& b) { return a.z > b.z; });
  return out;
}

}  // namespace

TermCounts term_counts(std::span<const std::string> texts, int ngram_max) {
  if (ngram_max != 1 && ngram_max != 2) throw ConfigError("ngram_max must be 1 or 2");
  TermCounts counts;
  for (const auto& text : texts) {
    const auto tokens = tokenize(text, Punctuation::drop);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      ++counts[tokens[i]];
      if (ngram_max == 2 && i + 1 < tokens.size()) ++counts[tokens[i] + " " + tokens[i + 1]];
    }
  }
  return counts;
}

std::vector<TermContrast> log_odds_z(const TermCounts& counts_1, const TermCounts& counts_2,
                                     double alpha_0) {
  if (!(alpha_0 > 0.0)) throw ConfigError("alpha_0 must be positive");
  const double pooled = static_cast<double>(total(counts_1) + total(counts_2));
  return contrast(counts_1, counts_2, alpha_0, [&](std::size_t y) {
    return alpha_0 * static_cast<double>(y) / pooled;
  });
}

std::vector<TermContrast> log_odds_z_uniform(const TermCounts& counts_1, const TermCounts& counts_2,
                                             double alpha_w) {
  if (!(alpha_w > 0.0)) throw ConfigError("alpha_w must be positive");
  std::set<std::string> vocab;
  for (const auto& kv : counts_1) vocab.insert(kv.first);
  for (const auto& kv : counts_2) vocab.insert(kv.first);
  const double alpha_0 = alpha_w * static_cast<double>(vocab.size());
  return contrast(counts_1, counts_2, alpha_0, [&](std::size_t) { return alpha_w; });
}

BoundaryTables boundary_validation(std::span<const Session> sessions, int ngram_max,
                                   double alpha_0) {
  if (sessions.size() < 2) throw DegenerateInputError("boundary validation needs at least 2 sessions");
  std::vector<std::string> firsts, lasts, not_first, not_last;
  for (const auto& s : sessions) {
    const auto& u = s.utterances;
    for (std::size_t i = 0; i < u.size(); ++i) {
      (i == 0 ? firsts : not_first).push_back(u[i].text);
      (i + 1 == u.size() ? lasts : not_last).push_back(u[i].text);
    }
  }
  BoundaryTables tables;
  tables.first = log_odds_z(term_counts(firsts, ngram_max), term_counts(not_first, ngram_max),
                            alpha_0);
  tables.last = log_odds_z(term_counts(lasts, ngram_max), term_counts(not_last, ngram_max),
                           alpha_0);
  return tables;
}

std::size_t rank_of(const std::vector<TermContrast>& table, const std::string& term) {
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table[i].term == term) return i;
  return table.size();
}

}  // namespace redirect

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "redirect/segmentation.hpp"

namespace redirect {

using TermCounts = std::map<std::string, std::size_t>;

struct TermContrast {
  std::string term;
  double delta = 0.0;  // log-odds difference, corpus 1 minus corpus 2
  double z = 0.0;
  std::size_t count_1 = 0;
  std::size_t count_2 = 0;
};

/// Lowercased word unigrams, plus within-text bigrams ("a b") when
/// ngram_max is 2. Throws ConfigError for other ngram_max values.
TermCounts term_counts(std::span<const std::string> texts, int ngram_max = 1);

/// Log-odds with an informative Dirichlet prior whose per-term mass is
/// alpha_0 times the term's share of the pooled counts. Sorted by z
/// descending, then term. Throws DegenerateInputError when either corpus is
/// empty and ConfigError when alpha_0 <= 0.
std::vector<TermContrast> log_odds_z(const TermCounts& counts_1, const TermCounts& counts_2,
                                     double alpha_0 = 500.0);

/// Same estimator with a flat prior of alpha_w on every term of the joint
/// vocabulary (so alpha_0 = alpha_w * |V|).
std::vector<TermContrast> log_odds_z_uniform(const TermCounts& counts_1, const TermCounts& counts_2,
                                             double alpha_w);

struct BoundaryTables {
  std::vector<TermContrast> first;  // first utterances vs all others
  std::vector<TermContrast> last;   // last utterances vs all others
};

/// Throws DegenerateInputError with fewer than 2 sessions.
BoundaryTables boundary_validation(std::span<const Session> sessions, int ngram_max = 1,
                                   double alpha_0 = 500.0);

/// Rank of `term` (0-based) in a contrast table, or the table size when absent.
std::size_t rank_of(const std::vector<TermContrast>& table, const std::string& term);

}  // namespace redirect

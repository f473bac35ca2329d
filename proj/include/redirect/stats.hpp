#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "redirect/segmentation.hpp"

namespace redirect {

enum class Alternative { two_sided, greater, less };
enum class TestMethod { exact, normal_approx };

std::string_view alternative_name(Alternative a);
std::string_view method_name(TestMethod m);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  TestMethod method = TestMethod::exact;
  std::size_t n = 0;    // nonzero differences, or the size of x
  std::size_t n_y = 0;  // size of y for two-sample tests
  Alternative alternative = Alternative::two_sided;
};

enum class ZeroHandling { wilcox, pratt };

inline constexpr std::size_t kWilcoxonExactMax = 20;
inline constexpr std::size_t kMannWhitneyExactMax = 10;
inline constexpr std::size_t kMannWhitneyExactPooledMax = 1000;

/// Signed-rank test on differences. The statistic is W+, the sum of
/// mid-ranks of positive differences. `greater` tests for differences
/// shifted above zero. Zeros are dropped (wilcox) or ranked and then
/// excluded from W+ (pratt). Exact up to kWilcoxonExactMax nonzero
/// differences, normal approximation with continuity and tie correction
/// above. Throws DegenerateInputError when every difference is zero.
TestResult wilcoxon_signed_rank(std::span<const double> differences,
                                Alternative alternative = Alternative::two_sided,
                                ZeroHandling zeros = ZeroHandling::wilcox);
TestResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs,
                                Alternative alternative = Alternative::two_sided,
                                ZeroHandling zeros = ZeroHandling::wilcox);

/// Rank-sum test. The statistic is U for x (pairs with x above y, ties
/// counting one half). `greater` tests for x shifted above y. Exact
/// permutation distribution over the pooled mid-ranks when the smaller
/// sample has at most kMannWhitneyExactMax values and no value occurs in
/// both samples; normal approximation with tie correction otherwise.
/// Throws DegenerateInputError on an empty sample.
TestResult mann_whitney_u(std::span<const double> x, std::span<const double> y,
                          Alternative alternative = Alternative::two_sided);

/// Mid-ranks (1-based) of the values.
std::vector<double> midranks(std::span<const double> values);

/// Percentile interval of the mean over `resamples` bootstrap resamples.
/// Resample i draws from Rng(seed + i), so results do not depend on
/// `workers`. Throws DegenerateInputError on an empty sample and
/// ConfigError on resamples == 0 or level outside (0, 1).
std::pair<double, double> bootstrap_ci(std::span<const double> values, std::size_t resamples = 1000,
                                       double level = 0.95, std::uint64_t seed = 0,
                                       unsigned workers = 1);

/// Linear-interpolation quantile of sorted data (the common "type 7").
double quantile_sorted(std::span<const double> sorted, double q);

double mean(std::span<const double> values);

enum class ShuffleMode { within_role, cross_role };

/// Permutes utterance contents (text, id, meta) among positions of a
/// session. within_role keeps every text with its speaker's role;
/// cross_role permutes across all positions. Role and timestamp stay with
/// the position, so alternation is preserved either way.
Session shuffle_session(const Session& session, std::uint64_t seed,
                        ShuffleMode mode = ShuffleMode::within_role);

/// Shuffles every session with a seed derived from the top-level seed and
/// "<conversation_id>#<session index>".
SegmentedCorpus shuffle_corpus(const SegmentedCorpus& corpus, std::uint64_t seed,
                               ShuffleMode mode = ShuffleMode::within_role);

}  // namespace redirect

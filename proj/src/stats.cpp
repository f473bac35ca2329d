#include "redirect/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "redirect/error.hpp"
#include "redirect/parallel.hpp"
#include "redirect/random.hpp"

namespace redirect {
namespace {

using Count = unsigned __int128;

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double clamp_p(double p) { return std::clamp(p, 0.0, 1.0); }

// Mid-ranks doubled, so ties stay integral.
std::vector<std::int64_t> doubled_ranks(std::span<const double> values) {
  const auto r = midranks(values);
  std::vector<std::int64_t> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = std::llround(2.0 * r[i]);
  return out;
}

// p-value from an exact distribution of a doubled statistic: counts[s] is
// the number of arrangements with doubled statistic s.
double exact_p(const std::vector<Count>& counts, std::int64_t observed, std::int64_t doubled_mean2,
               Alternative alt) {
  // doubled_mean2 is 2 * (2 * mean), so comparisons stay in integers.
  Count total = 0;
  Count hit = 0;
  const std::int64_t obs_dev = std::llabs(2 * observed - doubled_mean2);
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (counts[s] == 0) continue;
    total += counts[s];
    const auto si = static_cast<std::int64_t>(s);
    bool in_tail = false;
    switch (alt) {
      case Alternative::greater: in_tail = si >= observed; break;
      case Alternative::less: in_tail = si <= observed; break;
      case Alternative::two_sided: in_tail = std::llabs(2 * si - doubled_mean2) >= obs_dev; break;
    }
    if (in_tail) hit += counts[s];
  }
  return clamp_p(static_cast<double>(static_cast<long double>(hit) / static_cast<long double>(total)));
}

double normal_p(double statistic, double mu, double sigma, Alternative alt) {
  if (sigma <= 0.0) return 1.0;
  switch (alt) {
    case Alternative::greater: return clamp_p(normal_sf((statistic - mu - 0.5) / sigma));
    case Alternative::less: return clamp_p(1.0 - normal_sf((statistic - mu + 0.5) / sigma));
    case Alternative::two_sided: {
      const double dev = std::max(std::fabs(statistic - mu) - 0.5, 0.0);
      return clamp_p(2.0 * normal_sf(dev / sigma));
    }
  }
  return 1.0;
}

}  // namespace

std::string_view alternative_name(Alternative a) {
  switch (a) {
    case Alternative::two_sided: return "two_sided";
    case Alternative::greater: return "greater";
    case Alternative::less: return "less";
  }
  return "two_sided";
}

std::string_view method_name(TestMethod m) {
  return m == TestMethod::exact ? "exact" : "normal_approx";
}

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

TestResult wilcoxon_signed_rank(std::span<const double> differences, Alternative alternative,
                                ZeroHandling zeros) {
  std::vector<double> ranked;  // differences entering the ranking
  for (double d : differences) {
    if (std::isnan(d)) throw DegenerateInputError("difference is NaN");
    if (d != 0.0 || zeros == ZeroHandling::pratt) ranked.push_back(d);
  }
  std::vector<double> magnitudes(ranked.size());
  std::transform(ranked.begin(), ranked.end(), magnitudes.begin(),
                 [](double d) { return std::fabs(d); });
  const auto ranks2 = doubled_ranks(magnitudes);

  std::vector<std::int64_t> signed_ranks;  // doubled ranks of nonzero differences
  std::int64_t w2 = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i] == 0.0) continue;
    signed_ranks.push_back(ranks2[i]);
    if (ranked[i] > 0.0) w2 += ranks2[i];
  }
  if (signed_ranks.empty()) throw DegenerateInputError("all differences are zero");

  TestResult result;
  result.alternative = alternative;
  result.n = signed_ranks.size();
  result.statistic = static_cast<double>(w2) / 2.0;
  const std::int64_t total2 = std::accumulate(signed_ranks.begin(), signed_ranks.end(),
                                              std::int64_t{0});

  if (signed_ranks.size() <= kWilcoxonExactMax) {
    std::vector<Count> counts(static_cast<std::size_t>(total2) + 1, 0);
    counts[0] = 1;
    std::int64_t reach = 0;
    for (std::int64_t r : signed_ranks) {
      reach += r;
      for (std::int64_t s = reach; s >= r; --s) counts[s] += counts[s - r];
    }
    result.method = TestMethod::exact;
    result.p_value = exact_p(counts, w2, total2, alternative);
    return result;
  }

  double var = 0.0;
  for (std::int64_t r : signed_ranks) var += static_cast<double>(r * r) / 16.0;
  result.method = TestMethod::normal_approx;
  result.p_value = normal_p(result.statistic, static_cast<double>(total2) / 4.0, std::sqrt(var),
                            alternative);
  return result;
}

TestResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs,
                                Alternative alternative, ZeroHandling zeros) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& [x, y] : pairs) d.push_back(x - y);
  return wilcoxon_signed_rank(std::span<const double>(d), alternative, zeros);
}

TestResult mann_whitney_u(std::span<const double> x, std::span<const double> y,
                          Alternative alternative) {
  if (x.empty() || y.empty()) throw DegenerateInputError("Mann-Whitney needs two non-empty samples");
  for (double v : x)
    if (std::isnan(v)) throw DegenerateInputError("sample contains NaN");
  for (double v : y)
    if (std::isnan(v)) throw DegenerateInputError("sample contains NaN");

  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const auto ranks2 = doubled_ranks(pooled);
  const std::int64_t nx = static_cast<std::int64_t>(x.size());
  const std::int64_t ny = static_cast<std::int64_t>(y.size());
  const std::int64_t n_total = nx + ny;

  std::int64_t rx2 = 0;
  for (std::int64_t i = 0; i < nx; ++i) rx2 += ranks2[i];
  const std::int64_t u2 = rx2 - nx * (nx + 1);  // doubled U(x)

  TestResult result;
  result.alternative = alternative;
  result.n = x.size();
  result.n_y = y.size();
  result.statistic = static_cast<double>(u2) / 2.0;

  std::vector<double> sx(x.begin(), x.end());
  std::vector<double> sy(y.begin(), y.end());
  std::sort(sx.begin(), sx.end());
  std::sort(sy.begin(), sy.end());
  bool spanning_tie = false;
  for (double v : sx)
    if (std::binary_search(sy.begin(), sy.end(), v)) {
      spanning_tie = true;
      break;
    }

  const std::int64_t k = std::min(nx, ny);
  if (!spanning_tie && k <= static_cast<std::int64_t>(kMannWhitneyExactMax) &&
      n_total <= static_cast<std::int64_t>(kMannWhitneyExactPooledMax)) {
    // Distribution of the doubled rank sum of a uniformly chosen k-subset
    // of the pooled ranks; the smaller sample plays the subset.
    std::vector<std::int64_t> sorted2 = ranks2;
    std::sort(sorted2.begin(), sorted2.end());
    const std::int64_t base = std::accumulate(sorted2.begin(), sorted2.begin() + k, std::int64_t{0});
    const std::int64_t top = std::accumulate(sorted2.end() - k, sorted2.end(), std::int64_t{0});
    // dp[j][s]: number of j-subsets with doubled rank sum s.
    std::vector<std::vector<Count>> dp(static_cast<std::size_t>(k) + 1,
                                       std::vector<Count>(static_cast<std::size_t>(top) + 1, 0));
    dp[0][0] = 1;
    for (std::int64_t r : ranks2)
      for (std::int64_t j = k; j >= 1; --j) {
        auto& cur = dp[static_cast<std::size_t>(j)];
        const auto& prev = dp[static_cast<std::size_t>(j - 1)];
        for (std::int64_t s = top; s >= r; --s) cur[s] += prev[s - r];
      }
    // Convert rank sums of the chosen group to doubled U of x.
    const bool x_is_small = nx <= ny;
    std::vector<Count> u_counts(static_cast<std::size_t>(2 * nx * ny) + 1, 0);
    for (std::size_t s = static_cast<std::size_t>(base); s <= static_cast<std::size_t>(top); ++s) {
      const Count c = dp[static_cast<std::size_t>(k)][s];
      if (c == 0) continue;
      const std::int64_t rsum2 = static_cast<std::int64_t>(s);
      const std::int64_t rx = x_is_small ? rsum2 : n_total * (n_total + 1) - rsum2;
      const std::int64_t ux2 = rx - nx * (nx + 1);
      u_counts[static_cast<std::size_t>(ux2)] += c;
    }
    result.method = TestMethod::exact;
    result.p_value = exact_p(u_counts, u2, 2 * nx * ny, alternative);
    return result;
  }

  double tie_term = 0.0;
  std::vector<double> sorted(pooled);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double n = static_cast<double>(n_total);
  const double prod = static_cast<double>(nx) * static_cast<double>(ny);
  const double var = prod / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  result.method = TestMethod::normal_approx;
  result.p_value = normal_p(result.statistic, prod / 2.0, std::sqrt(std::max(var, 0.0)), alternative);
  return result;
}

double mean(std::span<const double> values) {
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    m += (values[i] - m) / static_cast<double>(i + 1);
  return m;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DegenerateInputError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::pair<double, double> bootstrap_ci(std::span<const double> values, std::size_t resamples,
                                       double level, std::uint64_t seed, unsigned workers) {
  if (values.empty()) throw DegenerateInputError("bootstrap of an empty sample");
  if (resamples == 0) throw ConfigError("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must be in (0, 1)");
  std::vector<double> means(resamples);
  parallel_for(resamples, workers, [&](std::size_t i) {
    Rng rng(seed + i);
    double m = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j)
      m += (values[uniform_index(rng, values.size())] - m) / static_cast<double>(j + 1);
    means[i] = m;
  });
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  return {quantile_sorted(means, tail), quantile_sorted(means, 1.0 - tail)};
}

Session shuffle_session(const Session& session, std::uint64_t seed, ShuffleMode mode) {
  Session out = session;
  Rng rng(seed);
  auto permute = [&](const std::vector<std::size_t>& positions) {
    std::vector<std::size_t> order = positions;
    shuffle_in_place(std::span<std::size_t>(order), rng);
    for (std::size_t i = 0; i < positions.size(); ++i) {
      auto& dst = out.utterances[positions[i]];
      const auto& src = session.utterances[order[i]];
      dst.id = src.id;
      dst.text = src.text;
      dst.meta = src.meta;
    }
  };
  if (mode == ShuffleMode::within_role) {
    for (Role role : {Role::A, Role::B}) {
      std::vector<std::size_t> positions;
      for (std::size_t i = 0; i < session.utterances.size(); ++i)
        if (session.utterances[i].role == role) positions.push_back(i);
      permute(positions);
    }
  } else {
    std::vector<std::size_t> positions(session.utterances.size());
    std::iota(positions.begin(), positions.end(), 0);
    permute(positions);
  }
  return out;
}

SegmentedCorpus shuffle_corpus(const SegmentedCorpus& corpus, std::uint64_t seed,
                               ShuffleMode mode) {
  SegmentedCorpus out = corpus;
  for (auto& conv : out.conversations)
    for (auto& s : conv.sessions)
      s = shuffle_session(
          s, derive_seed(seed, conv.conversation_id + "#" + std::to_string(s.index)), mode);
  return out;
}

}  // namespace redirect

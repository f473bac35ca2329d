// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "redirect/aggregate.hpp"
#include "redirect/fightin_words.hpp"
#include "redirect/measures.hpp"
#include "redirect/ngram.hpp"
#include "redirect/pipeline.hpp"
#include "redirect/random.hpp"
#include "redirect/stats.hpp"
#include "redirect/synthetic.hpp"
#include "support.hpp"

using namespace redirect;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kNullRuntimeBudgetSeconds = 1.0;
constexpr std::size_t kAlgebraPairs = 10000;
constexpr double kRelSumTolerance = 1e-12;
constexpr double kRelShiftTolerance = 1e-12;  // random reals; dyadic grid must be exact
constexpr double kRelReference = 0.731059;
constexpr double kRelReferenceTolerance = 1e-6;
constexpr std::size_t kOracleCases = 200;
constexpr std::size_t kOracleMaxN = 10;
constexpr std::size_t kShuffleSessions = 200;
constexpr double kShuffleAlpha = 0.01;
constexpr double kShuffleRuntimeBudgetSeconds = 120.0;
constexpr std::size_t kBoundaryTopK = 3;
constexpr std::size_t kNormalizationContexts = 1000;
constexpr double kNormalizationTolerance = 1e-9;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Verdict null_identities() {
  const auto t0 = Clock::now();
  const Corpus corpus = load_corpus(testing::fixture("tiny.jsonl"), FieldMapping::identity());
  SegmentationConfig seg_cfg;
  seg_cfg.automated = AutomatedFilter::from_file(testing::fixture("automated.txt"));
  const SegmentedCorpus seg = segment_corpus(corpus, seg_cfg);

  std::size_t windows = 0, nonzero = 0;
  const testing::ContextBlindScorer blind;
  for (const auto& conv : score_corpus(seg, blind, nullptr, {false, true}))
    for (const auto& session : conv.sessions)
      for (const auto& s : session) {
        ++windows;
        if (!s.scored || s.redirection != 0.0 || !s.dependence || *s.dependence != 0.0) ++nonzero;
      }

  // focal := prev_other under a real trigram model.
  const NGramModel model = train_ngram(seg, {});
  std::size_t echo_windows = 0;
  for (const auto& conv : seg.conversations)
    for (const auto& session : conv.sessions)
      for (const auto& pw : adjacency_windows(session)) {
        Utterance focal = *pw.window.focal;
        focal.text = pw.window.prev_other->text;
        AdjacencyWindow w = pw.window;
        w.focal = &focal;
        const auto s = redirection_score(w, model);
        ++echo_windows;
        if (!s.scored || s.redirection != 0.0) ++nonzero;
      }
  const double elapsed = seconds_since(t0);
  Verdict o;
  o.pass = windows > 0 && echo_windows > 0 && nonzero == 0 && elapsed < kNullRuntimeBudgetSeconds;
  o.detail = std::to_string(windows + echo_windows) + " windows, " + std::to_string(nonzero) +
             " nonzero, " + fmt("%.3fs", elapsed);
  return o;
}

Verdict relative_algebra() {
  Rng rng(2718);
  double worst_sum = 0.0, worst_shift = 0.0;
  std::size_t dyadic_mismatch = 0;
  for (std::size_t i = 0; i < kAlgebraPairs; ++i) {
    const double t = 10.0 * standard_normal(rng), c = 10.0 * standard_normal(rng);
    const auto [tr, cr] = relative_redirection(t, c);
    worst_sum = std::max(worst_sum, std::fabs(tr + cr - 1.0));
    const double k = 50.0 * standard_normal(rng);
    const auto shifted = relative_redirection(t + k, c + k);
    worst_shift = std::max(worst_shift, std::fabs(shifted.first - tr));
    // On a dyadic grid the shifted difference is exact, so the result must be too.
    const double td = std::ldexp(std::round(std::ldexp(t, 10)), -10);
    const double cd = std::ldexp(std::round(std::ldexp(c, 10)), -10);
    const double kd = std::ldexp(std::round(std::ldexp(k, 4)), -4);
    if (relative_redirection(td + kd, cd + kd) != relative_redirection(td, cd)) ++dyadic_mismatch;
  }
  const double ref = relative_redirection(1.0, 0.0).first;
  Verdict o;
  o.pass = worst_sum <= kRelSumTolerance && worst_shift <= kRelShiftTolerance && dyadic_mismatch == 0 &&
           std::fabs(ref - kRelReference) <= kRelReferenceTolerance;
  o.detail = fmt("max|t+c-1|=%.2e, max shift drift=%.2e, t_rel(1,0)=%.7f", worst_sum, worst_shift, ref) +
             ", dyadic mismatches " + std::to_string(dyadic_mismatch);
  return o;
}

std::int64_t rank2(const std::vector<double>& v, std::size_t i) {
  std::int64_t less = 0, eq = 0;
  for (double x : v) less += x < v[i], eq += x == v[i];
  return 2 * less + eq + 1;
}

bool tail(std::int64_t s, std::int64_t obs, std::int64_t center2, Alternative alt) {
  if (alt == Alternative::greater) return s >= obs;
  if (alt == Alternative::less) return s <= obs;
  return std::llabs(2 * s - center2) >= std::llabs(2 * obs - center2);
}

double as_p(std::uint64_t hit, std::uint64_t total) {
  return static_cast<double>(static_cast<long double>(hit) / static_cast<long double>(total));
}

double wilcoxon_brute(const std::vector<double>& d, Alternative alt) {
  std::vector<double> nz, mag;
  for (double v : d)
    if (v != 0) nz.push_back(v), mag.push_back(std::fabs(v));
  std::vector<std::int64_t> r;
  std::int64_t obs = 0, total = 0;
  for (std::size_t i = 0; i < nz.size(); ++i) {
    r.push_back(rank2(mag, i));
    total += r.back();
    if (nz[i] > 0) obs += r.back();
  }
  std::uint64_t hit = 0;
  for (std::uint64_t m = 0; m < (1ULL << r.size()); ++m) {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < r.size(); ++i)
      if (m >> i & 1) s += r[i];
    hit += tail(s, obs, total, alt);
  }
  return as_p(hit, 1ULL << r.size());
}

double mann_whitney_brute(const std::vector<double>& x, const std::vector<double>& y, Alternative alt) {
  std::vector<double> pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::vector<std::int64_t> r(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) r[i] = rank2(pooled, i);
  const auto off = static_cast<std::int64_t>(x.size() * (x.size() + 1));
  std::int64_t obs = -off;
  for (std::size_t i = 0; i < x.size(); ++i) obs += r[i];
  std::vector<bool> pick(pooled.size(), false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(x.size()), true);
  std::uint64_t hit = 0, total = 0;
  do {
    std::int64_t s = -off;
    for (std::size_t i = 0; i < pick.size(); ++i)
      if (pick[i]) s += r[i];
    ++total;
    hit += tail(s, obs, static_cast<std::int64_t>(2 * x.size() * y.size()), alt);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return as_p(hit, total);
}

Verdict stats_oracle() {
  Rng rng(1234);
  std::size_t w_cases = 0, m_cases = 0, mismatches = 0;
  const Alternative alts[] = {Alternative::two_sided, Alternative::greater, Alternative::less};
  for (std::size_t c = 0; c < kOracleCases; ++c) {
    const std::size_t n = 1 + uniform_index(rng, kOracleMaxN);
    std::vector<double> d(n);
    for (auto& v : d) v = static_cast<double>(uniform_index(rng, 11)) - 4.0;
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0; })) d[0] = 2.0;
    for (Alternative a : alts) {
      const auto r = wilcoxon_signed_rank(d, a);
      if (r.method != TestMethod::exact || r.p_value != wilcoxon_brute(d, a)) ++mismatches;
    }
    ++w_cases;

    std::vector<double> x(1 + uniform_index(rng, kOracleMaxN)), y(1 + uniform_index(rng, kOracleMaxN));
    for (auto& v : x) v = 2.0 * static_cast<double>(uniform_index(rng, 9));
    for (auto& v : y) v = 2.0 * static_cast<double>(uniform_index(rng, 9)) + 1.0;
    for (Alternative a : alts) {
      const auto r = mann_whitney_u(x, y, a);
      if (r.method != TestMethod::exact || r.p_value != mann_whitney_brute(x, y, a)) ++mismatches;
    }
    ++m_cases;
  }
  const std::vector<double> w_ex = {1, 2, 3}, x_ex = {1, 2}, y_ex = {3, 4};
  const double p_w = wilcoxon_signed_rank(w_ex, Alternative::greater).p_value;
  const double p_m = mann_whitney_u(x_ex, y_ex).p_value;
  const bool examples = p_w == 0.125 && p_m == as_p(2, 6);
  Verdict o;
  o.pass = mismatches == 0 && examples;
  o.detail = std::to_string(w_cases) + " Wilcoxon + " + std::to_string(m_cases) +
             " Mann-Whitney cases x 3 alternatives, " + std::to_string(mismatches) + " mismatches; " +
             fmt("worked examples p=%.6f, p=%.6f", p_w, p_m);
  return o;
}

std::vector<double> session_means(const std::vector<ScoredConversation>& scores) {
  std::vector<double> out;
  for (const auto& conv : scores)
    for (const auto& session : conv.sessions) {
      std::vector<double> r;
      for (const auto& s : session)
        if (s.scored) r.push_back(s.redirection);
      out.push_back(r.empty() ? NAN : mean(r));
    }
  return out;
}

Verdict shuffle_check() {
  const auto t0 = Clock::now();
  synthetic::PlantedConfig pc;
  pc.conversations = kShuffleSessions / pc.sessions_per_conversation;
  pc.seed = 101;
  const SegmentedCorpus analysis = segment_corpus(synthetic::planted_redirection(pc), {});
  synthetic::PlantedConfig tc = pc;
  tc.seed = 202;
  tc.id_prefix = "train";
  const NGramModel model = train_ngram(segment_corpus(synthetic::planted_redirection(tc), {}), {});

  const auto actual = session_means(score_corpus(analysis, model, nullptr, {}));
  const auto shuffled =
      session_means(score_corpus(shuffle_corpus(analysis, 7), model, nullptr, {}));
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < actual.size(); ++i)
    if (!std::isnan(actual[i]) && !std::isnan(shuffled[i])) pairs.emplace_back(actual[i], shuffled[i]);
  std::vector<double> sh;
  for (const auto& p : pairs) sh.push_back(p.second);
  std::vector<double> ac;
  for (const auto& p : pairs) ac.push_back(p.first);
  const auto test = wilcoxon_signed_rank(std::span<const std::pair<double, double>>(pairs));
  const auto ci = bootstrap_ci(sh, 1000, 0.95, 99);
  const double elapsed = seconds_since(t0);
  Verdict o;
  o.pass = pairs.size() == kShuffleSessions && mean(ac) > mean(sh) && test.p_value < kShuffleAlpha &&
           ci.first <= 0.0 && 0.0 <= ci.second && elapsed < kShuffleRuntimeBudgetSeconds;
  o.detail = std::to_string(pairs.size()) + " sessions, " +
             fmt("mean R actual %.4f vs shuffled %.4f", mean(ac), mean(sh)) +
             fmt(", Wilcoxon p=%.3g, shuffled CI [%.4f, %.4f]", test.p_value, ci.first, ci.second) +
             fmt(", %.2fs", elapsed);
  return o;
}

Verdict boundary() {
  synthetic::GreetingConfig gc;
  const auto seg = segment_corpus(synthetic::greeting_farewell(gc), {});
  std::vector<Session> sessions;
  for (const auto& c : seg.conversations) sessions.insert(sessions.end(), c.sessions.begin(), c.sessions.end());
  const auto t = boundary_validation(sessions);
  const std::size_t rf = rank_of(t.first, gc.greeting), rl = rank_of(t.last, gc.farewell);
  Verdict o;
  o.pass = rf < kBoundaryTopK && rl < kBoundaryTopK;
  o.detail = "'" + gc.greeting + "' rank " + std::to_string(rf + 1) + " in first table, '" + gc.farewell +
             "' rank " + std::to_string(rl + 1) + " in last table (" + std::to_string(sessions.size()) +
             " sessions)";
  return o;
}

Verdict normalization_and_sweep() {
  synthetic::PlantedConfig pc;
  pc.conversations = 10;
  const NGramModel model = train_ngram(segment_corpus(synthetic::planted_redirection(pc), {}), {});
  const auto ids = model.predictable_tokens();
  Rng rng(55);
  double worst = 0.0;
  for (std::size_t i = 0; i < kNormalizationContexts; ++i) {
    std::vector<TokenId> history;
    const std::size_t len = uniform_index(rng, 5);
    for (std::size_t j = 0; j < len; ++j)
      history.push_back(static_cast<TokenId>(uniform_index(rng, model.vocabulary().size())));
    std::vector<std::vector<TokenId>> ctx(uniform_index(rng, 3));
    for (auto& u : ctx)
      for (std::size_t j = 0, n = uniform_index(rng, 6); j < n; ++j) u.push_back(ids[uniform_index(rng, ids.size())]);
    const ContextCache cache(ctx, model.context_decay());
    double sum = 0.0;
    for (TokenId t : ids) sum += model.probability(history, t, cache);
    worst = std::max(worst, std::fabs(sum - 1.0));
  }
  const std::vector<double> ns = {25, 50, 100, 200, 400, 800, 1600, 3200, 6400, 12800};
  const auto rows = n_sweep(synthetic::sweep_corpus({}), ns, {});
  bool monotone = true;
  for (std::size_t i = 1; i < rows.size(); ++i) monotone &= rows[i].mean_sessions <= rows[i - 1].mean_sessions;
  Verdict o;
  o.pass = worst <= kNormalizationTolerance && monotone;
  o.detail = fmt("max|sum-1|=%.2e over ", worst) + std::to_string(kNormalizationContexts) +
             " contexts; mean sessions " + fmt("%.2f", rows.front().mean_sessions) + " at N=25 -> " +
             fmt("%.2f", rows.back().mean_sessions) + " at N=12800, " +
             (monotone ? "non-increasing" : "NOT monotone");
  return o;
}

Verdict determinism() {
  const auto dir = testing::scratch_dir("acceptance");
  synthetic::PlantedConfig pc;
  pc.conversations = 12;
  pc.label_outcomes = true;
  const Corpus corpus = synthetic::planted_redirection(pc);
  {
    std::ofstream out(dir / "corpus.jsonl", std::ios::binary);
    for (const auto& c : corpus.conversations)
      for (const auto& u : c.utterances) out << serialize_utterance(u) << '\n';
  }
  std::ostringstream log;
  int codes = 0;
  for (const char* name : {"a", "b"}) {
    RunConfig cfg;
    cfg.input.corpus = dir / "corpus.jsonl";
    cfg.out_dir = dir / name;
    cfg.seed = 42;
    codes += run(cfg, log);
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++compared;
    if (testing::read_text(e.path()) != testing::read_text(dir / "b" / e.path().filename())) ++differing;
  }
  std::filesystem::remove_all(dir);
  Verdict o;
  o.pass = codes == 0 && compared >= 10 && differing == 0;
  o.detail = std::to_string(compared) + " CSVs compared, " + std::to_string(differing) + " differ";
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"null_identities", null_identities},
      {"relative_redirection_algebra", relative_algebra},
      {"statistics_oracle_equivalence", stats_oracle},
      {"shuffle_check_planted", shuffle_check},
      {"boundary_validation_greeting", boundary},
      {"ngram_normalization_and_nsweep", normalization_and_sweep},
      {"end_to_end_determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}

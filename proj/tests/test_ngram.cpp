#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "redirect/error.hpp"
#include "redirect/ngram.hpp"
#include "redirect/random.hpp"
#include "redirect/synthetic.hpp"
#include "redirect/text.hpp"
#include "support.hpp"

using namespace redirect;

namespace {

using Gram = std::vector<std::string>;

// Kneser-Ney reference built on string n-gram maps. Lower-order counts are
// derived from the set of distinct left extensions of each gram, which is
// a different route to the same quantities the model computes.
class KnOracle {
 public:
  KnOracle(const std::vector<Gram>& streams, int order, double discount) : n_(order), d_(discount) {
    std::set<std::string> words;
    for (const auto& s : streams) words.insert(s.begin(), s.end());
    predictable_ = words.size() + 4;  // plus <unk>, </s>, <A>, <B>
    for (const auto& s : streams) {
      Gram padded(static_cast<std::size_t>(n_ - 1), "<s>");
      padded.insert(padded.end(), s.begin(), s.end());
      padded.push_back("</s>");
      for (std::size_t i = static_cast<std::size_t>(n_ - 1); i < padded.size(); ++i)
        ++count_[Gram(padded.begin() + static_cast<long>(i) - (n_ - 1),
                      padded.begin() + static_cast<long>(i) + 1)];
    }
    // Every suffix of an observed top-order gram, grouped by length.
    std::set<Gram> seen;
    for (const auto& [g, c] : count_) seen.insert(g);
    for (int m = n_ - 1; m >= 1; --m) {
      std::set<Gram> shorter;
      for (const auto& g : seen) {
        Gram tail(g.begin() + 1, g.end());
        ++count_[tail];  // one per distinct left extension
        shorter.insert(tail);
      }
      seen = std::move(shorter);
    }
    for (const auto& [g, c] : count_) {
      Gram h(g.begin(), g.end() - 1);
      total_[h] += static_cast<double>(c);
      ++distinct_[h];
    }
  }

  double prob(const Gram& history, const std::string& w) const {
    double p = 1.0 / static_cast<double>(predictable_);
    for (int m = 1; m <= n_; ++m) {
      const std::size_t hl = static_cast<std::size_t>(m - 1);
      if (history.size() < hl) break;
      Gram h(history.end() - static_cast<long>(hl), history.end());
      auto t = total_.find(h);
      if (t == total_.end()) break;
      Gram g = h;
      g.push_back(w);
      auto c = count_.find(g);
      const double cw = c == count_.end() ? 0.0 : static_cast<double>(c->second);
      p = (std::max(cw - d_, 0.0) + d_ * static_cast<double>(distinct_.at(h)) * p) / t->second;
    }
    return p;
  }

  double stream_logprob(const Gram& tokens) const {
    Gram hist(static_cast<std::size_t>(n_ - 1), "<s>");
    double lp = 0.0;
    Gram all = tokens;
    all.push_back("</s>");
    for (const auto& w : all) {
      lp += std::log(prob(hist, w));
      hist.push_back(w);
    }
    return lp;
  }

 private:
  int n_;
  double d_;
  std::size_t predictable_ = 0;
  std::map<Gram, std::uint64_t> count_;
  std::map<Gram, double> total_;
  std::map<Gram, std::size_t> distinct_;
};

std::vector<Gram> random_streams(std::uint64_t seed, std::size_t count, std::size_t vocab) {
  Rng rng(seed);
  std::vector<Gram> out;
  for (std::size_t i = 0; i < count; ++i) {
    Gram s;
    const std::size_t len = 1 + uniform_index(rng, 12);
    for (std::size_t j = 0; j < len; ++j) s.push_back("w" + std::to_string(uniform_index(rng, vocab)));
    out.push_back(std::move(s));
  }
  return out;
}

NGramModel small_dialogue_model() {
  synthetic::PlantedConfig pc;
  pc.conversations = 6;
  pc.sessions_per_conversation = 4;
  pc.vocabulary_size = 40;
  const Corpus corpus = synthetic::planted_redirection(pc);
  return train_ngram(segment_corpus(corpus, {}), {});
}

}  // namespace

TEST_CASE("unigram probabilities by hand") {
  // Stream "a a b": counts a=2, b=1, </s>=1 over total 4 with 3 distinct;
  // 6 predictable tokens, so the base is 1/6 and the interpolation mass
  // 0.75 * 3 / 4.
  NGramConfig cfg;
  cfg.order = 1;
  const std::vector<Gram> streams = {{"a", "a", "b"}};
  const NGramModel m = train_ngram_streams(streams, cfg);
  const std::vector<TokenId> none;
  const auto& v = m.vocabulary();
  CHECK(m.kn_probability(none, v.lookup("a")) == doctest::Approx(0.40625).epsilon(1e-15));
  CHECK(m.kn_probability(none, v.lookup("b")) == doctest::Approx(0.15625).epsilon(1e-15));
  CHECK(m.kn_probability(none, Vocabulary::kEos) == doctest::Approx(0.15625).epsilon(1e-15));
  CHECK(m.kn_probability(none, Vocabulary::kUnk) == doctest::Approx(0.09375).epsilon(1e-15));
}

TEST_CASE("trained model matches the string-map oracle token by token") {
  for (int order : {1, 2, 3, 4}) {
    CAPTURE(order);
    const auto streams = random_streams(100 + static_cast<std::uint64_t>(order), 60, 15);
    NGramConfig cfg;
    cfg.order = order;
    const NGramModel model = train_ngram_streams(streams, cfg);
    const KnOracle oracle(streams, order, cfg.discount);
    for (const auto& probe : random_streams(900 + static_cast<std::uint64_t>(order), 40, 18)) {
      // w15..w17 are unseen and map to <unk> in the model.
      Gram mapped;
      for (const auto& w : probe) mapped.push_back(model.vocabulary().lookup(w) == Vocabulary::kUnk ? "<unk>" : w);
      CHECK(model.stream_logprob(probe).total_logprob ==
            doctest::Approx(oracle.stream_logprob(mapped)).epsilon(1e-12));
      CHECK(model.stream_logprob(probe).token_count == probe.size() + 1);
    }
  }
}

TEST_CASE("probabilities sum to one over the predictable vocabulary") {
  const NGramModel m = small_dialogue_model();
  const auto ids = m.predictable_tokens();
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TokenId> history;
    const std::size_t len = uniform_index(rng, 4);
    for (std::size_t i = 0; i < len; ++i)
      history.push_back(static_cast<TokenId>(uniform_index(rng, m.vocabulary().size())));
    std::vector<std::vector<TokenId>> ctx = {{ids[uniform_index(rng, ids.size())]},
                                             {ids[uniform_index(rng, ids.size())], Vocabulary::kUnk}};
    const ContextCache cache(ctx, m.context_decay());
    double kn = 0.0, mix = 0.0;
    for (TokenId t : ids) {
      kn += m.kn_probability(history, t);
      mix += m.probability(history, t, cache);
    }
    CHECK(std::abs(kn - 1.0) < 1e-9);
    CHECK(std::abs(mix - 1.0) < 1e-9);
  }
}

TEST_CASE("context cache weights recent utterances more") {
  const std::vector<std::vector<TokenId>> ctx = {{10, 11}, {}, {12}};
  const ContextCache cache(ctx, 0.5);
  // weights: {12} -> 1, {} skipped (but ages the decay), {10, 11} -> 0.25.
  CHECK(cache.probability(12) == doctest::Approx(1.0 / 1.25));
  CHECK(cache.probability(10) == doctest::Approx(0.125 / 1.25));
  CHECK(cache.probability(99) == 0.0);
  CHECK(ContextCache().empty());
}

TEST_CASE("dialogue scoring matches a hand-assembled mixture") {
  const NGramModel m = small_dialogue_model();
  CHECK(m.context_weight() > 0.0);
  CHECK(m.context_weight() < 1.0);
  ScoreRequest req;
  req.context = {{Role::A, "w001 w002 w003"}, {Role::B, "w002 w004"}};
  req.reply = {Role::A, "w004 w002 zzz"};
  const auto r = m.score(req);
  CHECK(r.token_count == 4);

  const auto& v = m.vocabulary();
  std::vector<TokenId> stream(static_cast<std::size_t>(m.order() - 1), Vocabulary::kBos);
  stream.insert(stream.end(), {Vocabulary::kRoleA, v.lookup("w001"), v.lookup("w002"), v.lookup("w003"),
                               Vocabulary::kEos, Vocabulary::kRoleB, v.lookup("w002"), v.lookup("w004"),
                               Vocabulary::kEos, Vocabulary::kRoleA});
  const double lambda = m.context_weight();
  auto cache_p = [&](const std::string& w) {
    // Most recent utterance weight 1, earlier 0.5; normalized by 1.5.
    double p = 0.0;
    if (w == "w002") p += (1.0 / 1.5) / 2 + (0.5 / 1.5) / 3;
    if (w == "w004") p += (1.0 / 1.5) / 2;
    if (w == "w001" || w == "w003") p += (0.5 / 1.5) / 3;
    return p;
  };
  double expected = 0.0;
  for (const std::string w : {"w004", "w002", "zzz", "</s>"}) {
    const TokenId id = w == "</s>" ? Vocabulary::kEos : v.lookup(w);
    expected += std::log((1 - lambda) * m.kn_probability(stream, id) + lambda * cache_p(w));
    stream.push_back(id);
  }
  CHECK(r.total_logprob == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("reply likelihood depends on the preceding turn") {
  const NGramModel m = small_dialogue_model();
  ScoreRequest echo, other;
  echo.context = {{Role::A, "w005 w006 w007 w008"}};
  other.context = {{Role::A, "w020 w021 w022 w023"}};
  echo.reply = other.reply = {Role::B, "w005 w006 w007"};
  CHECK(m.score(echo).total_logprob > m.score(other).total_logprob);
}

TEST_CASE("save and load round trip") {
  const NGramModel m = small_dialogue_model();
  const auto dir = redirect::testing::scratch_dir("ngram");
  const auto path = dir / "model.bin";
  m.save(path);
  const NGramModel back = NGramModel::load(path);
  CHECK(back.model_id() == m.model_id());
  CHECK(back.order() == m.order());
  CHECK(back.context_weight() == m.context_weight());
  CHECK(back.vocabulary().size() == m.vocabulary().size());
  ScoreRequest req;
  req.context = {{Role::A, "w001 w009"}, {Role::B, "w003"}};
  req.reply = {Role::A, "w009 w003 unknownword"};
  CHECK(back.score(req) == m.score(req));

  const std::string bytes = redirect::testing::read_text(path);
  CHECK(bytes.substr(0, 8) == "RDRNGRAM");
  CHECK(bytes[8] == 1);
  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "NOTMODEL";
  }
  CHECK_THROWS_AS(NGramModel::load(dir / "bad.bin"), TrainingError);
  {
    std::ofstream cut(dir / "cut.bin", std::ios::binary);
    cut << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(NGramModel::load(dir / "cut.bin"), TrainingError);
  CHECK_THROWS_AS(NGramModel::load(dir / "missing.bin"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("model id tracks content") {
  NGramConfig cfg;
  cfg.order = 2;
  const std::vector<Gram> a = {{"x", "y"}}, b = {{"x", "z"}};
  CHECK(train_ngram_streams(a, cfg).model_id() == train_ngram_streams(a, cfg).model_id());
  CHECK(train_ngram_streams(a, cfg).model_id() != train_ngram_streams(b, cfg).model_id());
}

TEST_CASE("configuration and training errors") {
  NGramConfig cfg;
  cfg.order = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.order = 3;
  cfg.discount = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.discount = 0.75;
  cfg.context_weight = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(train_ngram_dialogues({}, NGramConfig{}), TrainingError);
  const NGramModel m = small_dialogue_model();
  ScoreRequest req;
  req.reply = {Role::B, "   "};
  CHECK_THROWS_AS(m.score(req), ScoringError);
}

TEST_CASE("min_count maps rare words to <unk>") {
  NGramConfig cfg;
  cfg.order = 2;
  cfg.min_count = 2;
  const std::vector<Gram> s = {{"a", "a", "b"}};
  const NGramModel m = train_ngram_streams(s, cfg);
  CHECK(m.vocabulary().lookup("a") != Vocabulary::kUnk);
  CHECK(m.vocabulary().lookup("b") == Vocabulary::kUnk);
}

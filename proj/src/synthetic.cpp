#include "redirect/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include "redirect/random.hpp"

namespace redirect::synthetic {
namespace {

constexpr std::int64_t kPace = 60;
constexpr std::int64_t kSessionGap = 10'000'000;

struct Builder {
  Corpus corpus;
  Conversation* conv = nullptr;
  std::int64_t clock = 0;

  void start(std::string id) {
    corpus.conversations.push_back(Conversation{});
    conv = &corpus.conversations.back();
    conv->id = std::move(id);
    clock = 0;
  }

  void add(Role role, std::string text, Rng& rng) {
    Utterance u;
    u.conversation_id = conv->id;
    u.id = conv->id + "-" + std::to_string(conv->utterances.size());
    u.role = role;
    u.timestamp = clock;
    u.text = std::move(text);
    conv->utterances.push_back(std::move(u));
    clock += kPace + static_cast<std::int64_t>(uniform_index(rng, kPace / 2));
  }

  Corpus finish() {
    std::sort(corpus.conversations.begin(), corpus.conversations.end(),
              [](const Conversation& a, const Conversation& b) { return a.id < b.id; });
    for (const auto& c : corpus.conversations) corpus.report.records += c.utterances.size();
    return std::move(corpus);
  }
};

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string padded_id(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return prefix + buf;
}

}  // namespace

std::string vocabulary_word(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%03zu", i);
  return buf;
}

Corpus planted_redirection(const PlantedConfig& cfg) {
  static const char* const kReasons[] = {"s2", "s3", "s4", "s6", "c3"};
  Rng rng(cfg.seed);
  Builder b;
  const std::size_t turns = cfg.turns_per_session + cfg.turns_per_session % 2;
  for (std::size_t c = 0; c < cfg.conversations; ++c) {
    b.start(padded_id(cfg.id_prefix, c));
    for (std::size_t s = 0; s < cfg.sessions_per_conversation; ++s) {
      std::vector<std::string> prev;
      for (std::size_t t = 0; t < turns; ++t) {
        std::vector<std::string> words;
        for (std::size_t k = 0; k < cfg.tokens_per_turn; ++k) {
          if (!prev.empty() && uniform01(rng) < cfg.copy_prob)
            words.push_back(prev[uniform_index(rng, prev.size())]);
          else
            words.push_back(vocabulary_word(uniform_index(rng, cfg.vocabulary_size)));
        }
        b.add(t % 2 == 0 ? Role::A : Role::B, join(words), rng);
        prev = std::move(words);
      }
      b.clock += kSessionGap;
    }
    if (cfg.label_outcomes) {
      auto& first = b.conv->utterances.front();
      if (c % 3 == 0) {
        first.meta["outcome"] = "unsuccessful";
        first.meta["outcome_reason"] = kReasons[(c / 3) % 5];
      } else {
        first.meta["outcome"] = "control";
      }
      b.conv->outcome = c % 3 == 0 ? Outcome::unsuccessful : Outcome::control;
      if (c % 3 == 0) b.conv->outcome_reason = kReasons[(c / 3) % 5];
    }
  }
  return b.finish();
}

Corpus greeting_farewell(const GreetingConfig& cfg) {
  Rng rng(cfg.seed);
  Builder b;
  auto filler = [&](std::size_t n) {
    std::vector<std::string> words;
    for (std::size_t k = 0; k < n; ++k)
      words.push_back(vocabulary_word(uniform_index(rng, cfg.vocabulary_size)));
    return words;
  };
  for (std::size_t c = 0; c < cfg.conversations; ++c) {
    b.start(padded_id("greet", c));
    for (std::size_t s = 0; s < cfg.sessions_per_conversation; ++s) {
      for (std::size_t t = 0; t < cfg.turns_per_session; ++t) {
        auto words = filler(cfg.tokens_per_turn - 1);
        if (t == 0)
          words.insert(words.begin(), cfg.greeting);
        else if (t + 1 == cfg.turns_per_session)
          words.push_back(cfg.farewell);
        else
          words.push_back(vocabulary_word(uniform_index(rng, cfg.vocabulary_size)));
        b.add(t % 2 == 0 ? Role::A : Role::B, join(words), rng);
      }
      b.clock += kSessionGap;
    }
  }
  return b.finish();
}

Corpus sweep_corpus(const SweepConfig& cfg) {
  static const std::int64_t kMultiples[] = {150, 400, 1200, 5000};
  Rng rng(cfg.seed);
  Builder b;
  for (std::size_t c = 0; c < cfg.conversations; ++c) {
    b.start(padded_id("sweep", c));
    const std::size_t bursts = 1 + uniform_index(rng, cfg.max_bursts);
    for (std::size_t k = 0; k < bursts; ++k) {
      const std::size_t turns = 4 + 2 * uniform_index(rng, 4);
      for (std::size_t t = 0; t < turns; ++t)
        b.add(t % 2 == 0 ? Role::A : Role::B, vocabulary_word(uniform_index(rng, 50)) + " ok", rng);
      b.clock += kPace * kMultiples[uniform_index(rng, 4)];
    }
  }
  return b.finish();
}

}  // namespace redirect::synthetic

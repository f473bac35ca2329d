#pragma once
// Helpers shared by the unit tests and the acceptance binaries.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <unistd.h>
#include <vector>

#include "redirect/corpus.hpp"
#include "redirect/random.hpp"
#include "redirect/scorer.hpp"
#include "redirect/segmentation.hpp"

namespace redirect::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(REDIRECT_FIXTURES) / name;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("redirect-" + tag + "-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Utterance utt(std::string id, Role role, std::int64_t ts, std::string text,
                     std::string conv = "c") {
  Utterance u;
  u.id = std::move(id);
  u.conversation_id = std::move(conv);
  u.role = role;
  u.timestamp = ts;
  u.text = std::move(text);
  return u;
}

// Alternating session A, B, A, ... with one utterance per text.
inline Session session_of(std::initializer_list<std::string> texts, std::string conv = "c",
                          std::size_t index = 0) {
  Session s;
  s.conversation_id = conv;
  s.index = index;
  std::size_t i = 0;
  for (const auto& t : texts) {
    s.utterances.push_back(utt(conv + "-" + std::to_string(index) + "-" + std::to_string(i),
                               i % 2 == 0 ? Role::A : Role::B,
                               static_cast<std::int64_t>(60 * i), t, conv));
    ++i;
  }
  s.covariates.turn_count = s.utterances.size();
  return s;
}

// Ignores the context entirely: every reply gets the same likelihood
// whatever precedes it.
class ContextBlindScorer final : public Scorer {
 public:
  LogProbResult score(const ScoreRequest& request) const override {
    const std::size_t n = request.reply.text.size() + 1;
    return {-0.37 * static_cast<double>(n), n};
  }
  std::string model_id() const override { return "context-blind"; }
};

// Reward for reply words found in the last context turn, so replies that
// echo the focal utterance score higher after it.
class EchoScorer final : public Scorer {
 public:
  LogProbResult score(const ScoreRequest& request) const override;
  std::string model_id() const override { return "echo"; }
};

}  // namespace redirect::testing

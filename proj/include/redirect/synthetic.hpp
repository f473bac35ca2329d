#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "redirect/corpus.hpp"

namespace redirect::synthetic {

/// Dialogues whose turns are bags of pseudo-words. Each token of a turn is
/// copied from the immediately preceding turn with probability copy_prob
/// and otherwise drawn uniformly from the vocabulary, so replies depend on
/// the utterance they answer. The first turn of every session is fresh.
/// Sessions are separated by gaps far above the within-session pace.
struct PlantedConfig {
  std::size_t conversations = 20;
  std::size_t sessions_per_conversation = 10;
  std::size_t turns_per_session = 10;  // rounded up to even
  std::size_t tokens_per_turn = 8;
  std::size_t vocabulary_size = 300;
  double copy_prob = 0.7;
  std::uint64_t seed = 1;
  std::string id_prefix = "conv";
  /// Attach outcome metadata: every third conversation gets an unsuccessful
  /// reason code, the rest are controls.
  bool label_outcomes = false;
};

Corpus planted_redirection(const PlantedConfig& cfg);

/// Sessions whose first turn opens with `greeting` and whose last turn ends
/// with `farewell`; every other token is vocabulary filler.
struct GreetingConfig {
  std::size_t conversations = 10;
  std::size_t sessions_per_conversation = 6;
  std::size_t turns_per_session = 8;
  std::size_t tokens_per_turn = 6;
  std::size_t vocabulary_size = 80;
  std::string greeting = "hi";
  std::string farewell = "thanks";
  std::uint64_t seed = 7;
};

Corpus greeting_farewell(const GreetingConfig& cfg);

/// Conversations of even-length bursts separated by gaps of varying size
/// (multiples of the base pace between 150 and 5000), for sweeping N.
struct SweepConfig {
  std::size_t conversations = 30;
  std::size_t max_bursts = 12;
  std::uint64_t seed = 11;
};

Corpus sweep_corpus(const SweepConfig& cfg);

/// "w000" .. pseudo-words.
std::string vocabulary_word(std::size_t i);

}  // namespace redirect::synthetic

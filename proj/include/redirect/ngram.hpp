#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "redirect/scorer.hpp"
#include "redirect/segmentation.hpp"

namespace redirect {

using TokenId = std::uint32_t;
inline constexpr int kMaxNGramOrder = 6;

class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;  // end of utterance
  static constexpr TokenId kRoleA = 3;
  static constexpr TokenId kRoleB = 4;
  static constexpr TokenId kFirstWord = 5;

  Vocabulary();

  TokenId add(std::string_view token);
  /// kUnk for unknown tokens.
  TokenId lookup(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }

  static constexpr TokenId role_marker(Role r) { return r == Role::A ? kRoleA : kRoleB; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct NGramConfig {
  int order = 3;
  double discount = 0.75;
  std::size_t min_count = 1;
  /// Mixture weight of the context cache component (0 disables it).
  double context_weight = 0.1;
  /// Recency decay across context utterances, most recent weighted 1.
  double context_decay = 0.5;
  /// Fit context_weight by EM on every heldout_stride-th training dialogue.
  bool tune_context_weight = true;
  std::size_t heldout_stride = 10;

  void validate() const;
};

/// One utterance of a training dialogue, already tokenized.
struct TrainingTurn {
  Role role = Role::A;
  std::vector<std::string> tokens;
};
using TrainingDialogue = std::vector<TrainingTurn>;

/// Word-frequency distribution over the context utterances of a request,
/// weighted by recency.
class ContextCache {
 public:
  ContextCache() = default;
  ContextCache(std::span<const std::vector<TokenId>> utterances, double decay);

  double probability(TokenId id) const;
  bool empty() const { return mass_.empty(); }

 private:
  std::vector<std::pair<TokenId, double>> mass_;  // sorted by id
};

/// Interpolated absolute-discounting n-gram model with Kneser-Ney
/// continuation counts for the lower orders, mixed with a context cache:
///
///     P(w | h, ctx) = (1 - lambda) * P_kn(w | h) + lambda * P_cache(w | ctx)
///
/// The n-gram history alone never reaches past the reply's role marker, so
/// the cache is what makes the reply likelihood depend on earlier
/// utterances. Both components are normalized over every token except BOS.
///
/// Dialogues are rendered as  <s>^(n-1) <R> w.. </s> <R> w.. </s> ...  with
/// <R> the speaker's role marker. Immutable after training.
class NGramModel final : public Scorer {
 public:
  int order() const { return order_; }
  double discount() const { return discount_; }
  double context_weight() const { return context_weight_; }
  double context_decay() const { return context_decay_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  /// Every token that can be predicted (the whole vocabulary but BOS).
  std::vector<TokenId> predictable_tokens() const;

  /// Kneser-Ney component only. `history` is most-recent-last; only its
  /// last order-1 entries are used.
  double kn_probability(std::span<const TokenId> history, TokenId token) const;

  /// Full mixture. An empty cache leaves the n-gram component alone.
  double probability(std::span<const TokenId> history, TokenId token,
                     const ContextCache& cache) const;

  std::vector<TokenId> encode(std::string_view text) const;

  LogProbResult score(const ScoreRequest& request) const override;
  std::string model_id() const override { return model_id_; }

  /// Log-likelihood of a raw token stream framed as in training
  /// (BOS padding, trailing EOS). token_count includes the EOS.
  LogProbResult stream_logprob(std::span<const std::string> tokens) const;

  void save(const std::filesystem::path& path) const;
  static NGramModel load(const std::filesystem::path& path);

  friend NGramModel train_ngram_dialogues(std::span<const TrainingDialogue>, const NGramConfig&);
  friend NGramModel train_ngram_streams(std::span<const std::vector<std::string>>,
                                        const NGramConfig&);

 private:
  struct Key {
    std::array<TokenId, kMaxNGramOrder> ids{};
    std::uint8_t len = 0;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  struct ContextStats {
    double total = 0.0;
    std::uint64_t distinct = 0;
  };
  using CountTable = std::unordered_map<Key, std::uint64_t, KeyHash>;

  NGramModel() = default;
  void count_sequences(std::span<const std::vector<TokenId>> sequences);
  void build_lower_orders();
  std::vector<std::pair<Key, std::uint64_t>> sorted_top_counts() const;
  void compute_model_id();

  int order_ = 3;
  double discount_ = 0.75;
  double context_weight_ = 0.0;
  double context_decay_ = 0.5;
  Vocabulary vocab_;
  std::vector<CountTable> counts_;  // [k-1]: order k; raw at top order, continuation below
  std::vector<std::unordered_map<Key, ContextStats, KeyHash>> contexts_;  // [k-1]: histories of length k-1
  std::string model_id_;
};

NGramModel train_ngram_dialogues(std::span<const TrainingDialogue> dialogues,
                                 const NGramConfig& cfg);

/// Trains on raw token streams (no role structure, no cache tuning).
NGramModel train_ngram_streams(std::span<const std::vector<std::string>> streams,
                               const NGramConfig& cfg);

/// Tokenizes every session's utterances and trains on them.
NGramModel train_ngram(const SegmentedCorpus& corpus, const NGramConfig& cfg);

TrainingDialogue to_training_dialogue(const Session& session);

}  // namespace redirect

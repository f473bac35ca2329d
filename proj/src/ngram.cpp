#include "redirect/ngram.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "redirect/error.hpp"
#include "redirect/random.hpp"
#include "redirect/text.hpp"

namespace redirect {
namespace {

constexpr char kMagic[8] = {'R', 'D', 'R', 'N', 'G', 'R', 'A', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

const char* const kReserved[] = {"<unk>", "<s>", "</s>", "<A>", "<B>"};

bool is_reserved(std::string_view token) {
  return std::any_of(std::begin(kReserved), std::end(kReserved),
                     [&](const char* r) { return token == r; });
}

// Little-endian primitives for the model file.
template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.put(static_cast<char>((static_cast<std::make_unsigned_t<T>>(value) >> (8 * i)) & 0xff));
}

void put_double(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

template <typename T>
T get(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  std::make_unsigned_t<T> v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw TrainingError("truncated model file");
    v |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

double get_double(std::istream& in) { return std::bit_cast<double>(get<std::uint64_t>(in)); }

std::vector<TokenId> render_dialogue(const TrainingDialogue& dialogue, const Vocabulary& vocab,
                                     int order) {
  std::vector<TokenId> seq(static_cast<std::size_t>(order - 1), Vocabulary::kBos);
  for (const auto& turn : dialogue) {
    seq.push_back(Vocabulary::role_marker(turn.role));
    for (const auto& tok : turn.tokens) seq.push_back(vocab.lookup(tok));
    seq.push_back(Vocabulary::kEos);
  }
  return seq;
}

Vocabulary build_vocabulary(const std::map<std::string, std::size_t>& counts,
                            std::size_t min_count) {
  Vocabulary vocab;
  for (const auto& [tok, n] : counts)
    if (n >= min_count) vocab.add(tok);
  return vocab;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* r : kReserved) {
    index_.emplace(r, static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(r);
  }
}

TokenId Vocabulary::add(std::string_view token) {
  auto [it, inserted] = index_.emplace(std::string(token), static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.emplace_back(token);
  return it->second;
}

TokenId Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

void NGramConfig::validate() const {
  if (order < 1 || order > kMaxNGramOrder)
    throw ConfigError("n-gram order must be in [1, " + std::to_string(kMaxNGramOrder) + "]");
  if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("discount must be in (0, 1)");
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  if (!(context_weight >= 0.0 && context_weight < 1.0))
    throw ConfigError("context_weight must be in [0, 1)");
  if (!(context_decay > 0.0 && context_decay <= 1.0))
    throw ConfigError("context_decay must be in (0, 1]");
  if (heldout_stride < 2) throw ConfigError("heldout_stride must be at least 2");
}

ContextCache::ContextCache(std::span<const std::vector<TokenId>> utterances, double decay) {
  std::vector<double> weights(utterances.size(), 0.0);
  double norm = 0.0;
  double w = 1.0;
  for (std::size_t i = utterances.size(); i-- > 0;) {
    if (!utterances[i].empty()) {
      weights[i] = w;
      norm += w;
    }
    w *= decay;
  }
  if (norm == 0.0) return;
  std::map<TokenId, double> mass;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].empty()) continue;
    const double share = weights[i] / norm / static_cast<double>(utterances[i].size());
    for (TokenId id : utterances[i]) mass[id] += share;
  }
  mass_.assign(mass.begin(), mass.end());
}

double ContextCache::probability(TokenId id) const {
  auto it = std::lower_bound(mass_.begin(), mass_.end(), id,
                             [](const auto& e, TokenId v) { return e.first < v; });
  return (it != mass_.end() && it->first == id) ? it->second : 0.0;
}

std::size_t NGramModel::KeyHash::operator()(const Key& k) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ k.len;
  for (std::uint8_t i = 0; i < k.len; ++i) h = splitmix64(h ^ k.ids[i]);
  return static_cast<std::size_t>(h);
}

void NGramModel::count_sequences(std::span<const std::vector<TokenId>> sequences) {
  counts_.assign(static_cast<std::size_t>(order_), {});
  contexts_.assign(static_cast<std::size_t>(order_), {});
  auto& top = counts_.back();
  const std::size_t n = static_cast<std::size_t>(order_);
  for (const auto& seq : sequences) {
    for (std::size_t i = n - 1; i < seq.size(); ++i) {
      if (seq[i] == Vocabulary::kBos) continue;
      Key key;
      key.len = static_cast<std::uint8_t>(n);
      for (std::size_t j = 0; j < n; ++j) key.ids[j] = seq[i + 1 - n + j];
      ++top[key];
    }
  }
  if (top.empty()) throw TrainingError("training data contains no tokens");
  build_lower_orders();
}

void NGramModel::build_lower_orders() {
  // Continuation count of a k-gram = number of distinct (k+1)-grams it ends.
  for (int k = order_ - 1; k >= 1; --k) {
    auto& lower = counts_[static_cast<std::size_t>(k - 1)];
    lower.clear();
    for (const auto& [key, count] : counts_[static_cast<std::size_t>(k)]) {
      Key suffix;
      suffix.len = static_cast<std::uint8_t>(k);
      for (int j = 0; j < k; ++j) suffix.ids[static_cast<std::size_t>(j)] = key.ids[static_cast<std::size_t>(j + 1)];
      ++lower[suffix];
    }
  }
  for (int k = 1; k <= order_; ++k) {
    auto& ctx = contexts_[static_cast<std::size_t>(k - 1)];
    ctx.clear();
    for (const auto& [key, count] : counts_[static_cast<std::size_t>(k - 1)]) {
      Key history;
      history.len = static_cast<std::uint8_t>(k - 1);
      for (int j = 0; j < k - 1; ++j) history.ids[static_cast<std::size_t>(j)] = key.ids[static_cast<std::size_t>(j)];
      auto& stats = ctx[history];
      stats.total += static_cast<double>(count);
      ++stats.distinct;
    }
  }
}

std::vector<TokenId> NGramModel::predictable_tokens() const {
  std::vector<TokenId> ids;
  ids.reserve(vocab_.size() - 1);
  for (TokenId id = 0; id < vocab_.size(); ++id)
    if (id != Vocabulary::kBos) ids.push_back(id);
  return ids;
}

double NGramModel::kn_probability(std::span<const TokenId> history, TokenId token) const {
  double p = 1.0 / static_cast<double>(vocab_.size() - 1);
  for (int k = 1; k <= order_; ++k) {
    const std::size_t hlen = static_cast<std::size_t>(k - 1);
    if (history.size() < hlen) break;
    Key h;
    h.len = static_cast<std::uint8_t>(hlen);
    for (std::size_t j = 0; j < hlen; ++j) h.ids[j] = history[history.size() - hlen + j];
    const auto& ctx = contexts_[hlen];
    auto cs = ctx.find(h);
    // An unseen history has no seen extension either.
    if (cs == ctx.end()) break;
    Key gram = h;
    gram.ids[hlen] = token;
    gram.len = static_cast<std::uint8_t>(k);
    const auto& table = counts_[hlen];
    auto it = table.find(gram);
    const double c = it == table.end() ? 0.0 : static_cast<double>(it->second);
    p = (std::max(c - discount_, 0.0) +
         discount_ * static_cast<double>(cs->second.distinct) * p) /
        cs->second.total;
  }
  return p;
}

double NGramModel::probability(std::span<const TokenId> history, TokenId token,
                               const ContextCache& cache) const {
  const double kn = kn_probability(history, token);
  if (cache.empty() || context_weight_ == 0.0) return kn;
  return (1.0 - context_weight_) * kn + context_weight_ * cache.probability(token);
}

std::vector<TokenId> NGramModel::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text, Punctuation::keep)) ids.push_back(vocab_.lookup(tok));
  return ids;
}

LogProbResult NGramModel::score(const ScoreRequest& request) const {
  const std::vector<TokenId> reply = encode(request.reply.text);
  if (reply.empty()) throw ScoringError("reply has no tokens");

  std::vector<std::vector<TokenId>> context;
  context.reserve(request.context.size());
  std::vector<TokenId> stream(static_cast<std::size_t>(order_ - 1), Vocabulary::kBos);
  for (const auto& turn : request.context) {
    context.push_back(encode(turn.text));
    stream.push_back(Vocabulary::role_marker(turn.role));
    stream.insert(stream.end(), context.back().begin(), context.back().end());
    stream.push_back(Vocabulary::kEos);
  }
  stream.push_back(Vocabulary::role_marker(request.reply.role));
  const ContextCache cache(context, context_decay_);

  LogProbResult result;
  result.total_logprob = 0.0;
  result.token_count = reply.size() + 1;
  auto step = [&](TokenId t) {
    result.total_logprob += std::log(probability(stream, t, cache));
    stream.push_back(t);
  };
  for (TokenId t : reply) step(t);
  step(Vocabulary::kEos);
  return result;
}

LogProbResult NGramModel::stream_logprob(std::span<const std::string> tokens) const {
  std::vector<TokenId> stream(static_cast<std::size_t>(order_ - 1), Vocabulary::kBos);
  LogProbResult result;
  result.total_logprob = 0.0;
  result.token_count = tokens.size() + 1;
  const ContextCache none;
  auto step = [&](TokenId t) {
    result.total_logprob += std::log(probability(stream, t, none));
    stream.push_back(t);
  };
  for (const auto& tok : tokens) step(vocab_.lookup(tok));
  step(Vocabulary::kEos);
  return result;
}

std::vector<std::pair<NGramModel::Key, std::uint64_t>> NGramModel::sorted_top_counts() const {
  std::vector<std::pair<Key, std::uint64_t>> entries(counts_.back().begin(), counts_.back().end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.first.ids.begin(), a.first.ids.begin() + a.first.len,
                                        b.first.ids.begin(), b.first.ids.begin() + b.first.len);
  });
  return entries;
}

void NGramModel::compute_model_id() {
  std::ostringstream bytes;
  put<std::uint32_t>(bytes, static_cast<std::uint32_t>(order_));
  put_double(bytes, discount_);
  put_double(bytes, context_weight_);
  put_double(bytes, context_decay_);
  for (TokenId id = 0; id < vocab_.size(); ++id) bytes << vocab_.token(id) << '\0';
  for (const auto& [key, count] : sorted_top_counts()) {
    for (std::uint8_t j = 0; j < key.len; ++j) put<std::uint32_t>(bytes, key.ids[j]);
    put<std::uint64_t>(bytes, count);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.str())));
  model_id_ = "ngram-o" + std::to_string(order_) + "-" + hex;
}

void NGramModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model file " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(order_));
  put_double(out, discount_);
  put_double(out, context_weight_);
  put_double(out, context_decay_);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_.size()));
  for (TokenId id = 0; id < vocab_.size(); ++id) {
    const std::string& tok = vocab_.token(id);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tok.size()));
    out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
  }
  const auto entries = sorted_top_counts();
  put<std::uint64_t>(out, entries.size());
  for (const auto& [key, count] : entries) {
    for (std::uint8_t j = 0; j < key.len; ++j) put<std::uint32_t>(out, key.ids[j]);
    put<std::uint64_t>(out, count);
  }
  if (!out) throw ConfigError("failed writing model file " + path.string());
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model file " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw TrainingError(path.string() + " is not an n-gram model file");
  const auto version = get<std::uint32_t>(in);
  if (version != kFormatVersion)
    throw TrainingError("unsupported model file version " + std::to_string(version));
  NGramModel model;
  model.order_ = static_cast<int>(get<std::uint32_t>(in));
  if (model.order_ < 1 || model.order_ > kMaxNGramOrder) throw TrainingError("bad model order");
  model.discount_ = get_double(in);
  model.context_weight_ = get_double(in);
  model.context_decay_ = get_double(in);
  const auto vocab_size = get<std::uint32_t>(in);
  for (std::uint32_t id = 0; id < vocab_size; ++id) {
    const auto len = get<std::uint32_t>(in);
    std::string tok(len, '\0');
    in.read(tok.data(), len);
    if (!in) throw TrainingError("truncated model file");
    if (id < Vocabulary::kFirstWord) {
      if (model.vocab_.token(id) != tok) throw TrainingError("reserved vocabulary mismatch");
    } else if (model.vocab_.add(tok) != id) {
      throw TrainingError("duplicate vocabulary entry '" + tok + "'");
    }
  }
  const auto entries = get<std::uint64_t>(in);
  model.counts_.assign(static_cast<std::size_t>(model.order_), {});
  model.contexts_.assign(static_cast<std::size_t>(model.order_), {});
  auto& top = model.counts_.back();
  top.reserve(entries);
  for (std::uint64_t e = 0; e < entries; ++e) {
    Key key;
    key.len = static_cast<std::uint8_t>(model.order_);
    for (int j = 0; j < model.order_; ++j) {
      key.ids[static_cast<std::size_t>(j)] = get<std::uint32_t>(in);
      if (key.ids[static_cast<std::size_t>(j)] >= vocab_size) throw TrainingError("token id out of range");
    }
    top[key] = get<std::uint64_t>(in);
  }
  if (top.empty()) throw TrainingError("model file has no counts");
  model.build_lower_orders();
  model.compute_model_id();
  return model;
}

NGramModel train_ngram_streams(std::span<const std::vector<std::string>> streams,
                               const NGramConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::size_t> word_counts;
  for (const auto& s : streams)
    for (const auto& tok : s)
      if (!is_reserved(tok)) ++word_counts[tok];

  NGramModel model;
  model.order_ = cfg.order;
  model.discount_ = cfg.discount;
  model.context_weight_ = 0.0;
  model.context_decay_ = cfg.context_decay;
  model.vocab_ = build_vocabulary(word_counts, cfg.min_count);
  std::vector<std::vector<TokenId>> sequences;
  for (const auto& s : streams) {
    std::vector<TokenId> seq(static_cast<std::size_t>(cfg.order - 1), Vocabulary::kBos);
    for (const auto& tok : s) seq.push_back(model.vocab_.lookup(tok));
    seq.push_back(Vocabulary::kEos);
    sequences.push_back(std::move(seq));
  }
  model.count_sequences(sequences);
  model.compute_model_id();
  return model;
}

namespace {

// Fits the cache weight of a two-component mixture by EM over heldout
// reply tokens whose context cache is non-empty.
double fit_context_weight(const NGramModel& model, std::span<const TrainingDialogue> heldout,
                          double initial) {
  std::vector<std::pair<double, double>> pairs;  // (kn, cache)
  for (const auto& dialogue : heldout) {
    for (std::size_t j = 1; j < dialogue.size(); ++j) {
      const std::size_t first = j >= 2 ? j - 2 : 0;
      std::vector<std::vector<TokenId>> ctx;
      std::vector<TokenId> stream(static_cast<std::size_t>(model.order() - 1), Vocabulary::kBos);
      for (std::size_t c = first; c < j; ++c) {
        std::vector<TokenId> ids;
        for (const auto& tok : dialogue[c].tokens) ids.push_back(model.vocabulary().lookup(tok));
        stream.push_back(Vocabulary::role_marker(dialogue[c].role));
        stream.insert(stream.end(), ids.begin(), ids.end());
        stream.push_back(Vocabulary::kEos);
        ctx.push_back(std::move(ids));
      }
      const ContextCache cache(ctx, model.context_decay());
      if (cache.empty()) continue;
      stream.push_back(Vocabulary::role_marker(dialogue[j].role));
      std::vector<TokenId> reply;
      for (const auto& tok : dialogue[j].tokens) reply.push_back(model.vocabulary().lookup(tok));
      reply.push_back(Vocabulary::kEos);
      for (TokenId t : reply) {
        pairs.emplace_back(model.kn_probability(stream, t), cache.probability(t));
        stream.push_back(t);
      }
    }
  }
  if (pairs.empty()) return initial;
  double lambda = std::clamp(initial, 0.05, 0.95);
  for (int iter = 0; iter < 200; ++iter) {
    double posterior = 0.0;
    for (const auto& [kn, cache] : pairs) {
      const double num = lambda * cache;
      posterior += num / (num + (1.0 - lambda) * kn);
    }
    const double next = posterior / static_cast<double>(pairs.size());
    const bool done = std::abs(next - lambda) < 1e-9;
    lambda = next;
    if (done) break;
  }
  return std::clamp(lambda, 0.001, 0.999);
}

}  // namespace

NGramModel train_ngram_dialogues(std::span<const TrainingDialogue> dialogues,
                                 const NGramConfig& cfg) {
  cfg.validate();
  if (dialogues.empty()) throw TrainingError("empty training corpus");
  std::map<std::string, std::size_t> word_counts;
  for (const auto& d : dialogues)
    for (const auto& turn : d)
      for (const auto& tok : turn.tokens)
        if (!is_reserved(tok)) ++word_counts[tok];

  auto fit = [&](std::span<const TrainingDialogue> data, const Vocabulary& vocab) {
    NGramModel model;
    model.order_ = cfg.order;
    model.discount_ = cfg.discount;
    model.context_weight_ = cfg.context_weight;
    model.context_decay_ = cfg.context_decay;
    model.vocab_ = vocab;
    std::vector<std::vector<TokenId>> sequences;
    sequences.reserve(data.size());
    for (const auto& d : data) sequences.push_back(render_dialogue(d, model.vocab_, cfg.order));
    model.count_sequences(sequences);
    return model;
  };

  const Vocabulary vocab = build_vocabulary(word_counts, cfg.min_count);
  double lambda = cfg.context_weight;
  if (cfg.tune_context_weight && cfg.context_weight > 0.0 && dialogues.size() >= cfg.heldout_stride) {
    std::vector<TrainingDialogue> train;
    std::vector<TrainingDialogue> heldout;
    for (std::size_t i = 0; i < dialogues.size(); ++i)
      (i % cfg.heldout_stride == cfg.heldout_stride - 1 ? heldout : train).push_back(dialogues[i]);
    const NGramModel partial = fit(train, vocab);
    lambda = fit_context_weight(partial, heldout, cfg.context_weight);
  }
  NGramModel model = fit(dialogues, vocab);
  model.context_weight_ = lambda;
  model.compute_model_id();
  return model;
}

TrainingDialogue to_training_dialogue(const Session& session) {
  TrainingDialogue dialogue;
  dialogue.reserve(session.utterances.size());
  for (const auto& u : session.utterances)
    dialogue.push_back(TrainingTurn{u.role, tokenize(u.text, Punctuation::keep)});
  return dialogue;
}

NGramModel train_ngram(const SegmentedCorpus& corpus, const NGramConfig& cfg) {
  std::vector<TrainingDialogue> dialogues;
  for (const auto& conv : corpus.conversations)
    for (const auto& s : conv.sessions) dialogues.push_back(to_training_dialogue(s));
  return train_ngram_dialogues(dialogues, cfg);
}

}  // namespace redirect

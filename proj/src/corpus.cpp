#include "redirect/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "json.hpp"
#include "redirect/error.hpp"
#include "redirect/text.hpp"

namespace redirect {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

const json* lookup(const json& record, const std::string& source) {
  constexpr std::string_view kMetaPrefix = "meta.";
  if (source.rfind(kMetaPrefix, 0) == 0) {
    auto meta = record.find("meta");
    if (meta == record.end() || !meta->is_object()) return nullptr;
    auto it = meta->find(source.substr(kMetaPrefix.size()));
    return it == meta->end() ? nullptr : &*it;
  }
  auto it = record.find(source);
  return it == record.end() ? nullptr : &*it;
}

std::string scalar_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::int64_t parse_timestamp(const json& v, std::size_t line) {
  if (v.is_number_integer()) {
    const auto ts = v.get<std::int64_t>();
    if (ts < 0) throw ParseError(line, "negative timestamp");
    return ts;
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (!std::isfinite(d) || d < 0 || d != std::floor(d))
      throw ParseError(line, "timestamp must be a non-negative integer");
    return static_cast<std::int64_t>(d);
  }
  throw ParseError(line, "timestamp must be a non-negative integer");
}

struct Pending {
  std::size_t order;
  Utterance utterance;
};

}  // namespace

std::optional<Role> parse_role(std::string_view s) {
  if (s == "A" || s == "a") return Role::A;
  if (s == "B" || s == "b") return Role::B;
  return std::nullopt;
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::unsuccessful: return "unsuccessful";
    case Outcome::control: return "control";
    case Outcome::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

std::optional<Outcome> parse_outcome(std::string_view s) {
  if (s == "unsuccessful") return Outcome::unsuccessful;
  if (s == "control") return Outcome::control;
  if (s == "unlabeled") return Outcome::unlabeled;
  return std::nullopt;
}

const Conversation* Corpus::find(std::string_view conversation_id) const {
  auto it = std::lower_bound(
      conversations.begin(), conversations.end(), conversation_id,
      [](const Conversation& c, std::string_view id) { return c.id < id; });
  if (it == conversations.end() || it->id != conversation_id) return nullptr;
  return &*it;
}

std::size_t Corpus::utterance_count() const {
  std::size_t n = 0;
  for (const auto& c : conversations) n += c.utterances.size();
  return n;
}

FieldMapping FieldMapping::parse(std::istream& in) {
  static const std::vector<std::string> kCanonical = {
      "id", "conversation_id", "speaker", "timestamp", "text", "meta"};
  FieldMapping mapping;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos)
      throw ConfigError("mapping line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    if (key.rfind("speaker.", 0) == 0) {
      auto role = parse_role(value);
      if (!role)
        throw ConfigError("mapping line " + std::to_string(line_no) + ": role must be A or B");
      mapping.speakers[key.substr(8)] = *role;
    } else if (key.rfind("field.", 0) == 0) {
      const std::string canonical = key.substr(6);
      if (std::find(kCanonical.begin(), kCanonical.end(), canonical) == kCanonical.end())
        throw ConfigError("mapping line " + std::to_string(line_no) +
                          ": unknown field '" + canonical + "'");
      mapping.fields[canonical] = value;
    } else if (key == "timestamp.missing") {
      if (value != "order" && value != "error")
        throw ConfigError("mapping line " + std::to_string(line_no) +
                          ": timestamp.missing must be 'order' or 'error'");
      mapping.timestamp_from_order = value == "order";
    } else {
      throw ConfigError("mapping line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return mapping;
}

FieldMapping FieldMapping::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mapping file " + path.string());
  return parse(in);
}

std::string FieldMapping::source_of(std::string_view canonical) const {
  auto it = fields.find(std::string(canonical));
  return it == fields.end() ? std::string(canonical) : it->second;
}

std::optional<Role> FieldMapping::role_of(std::string_view speaker) const {
  if (speakers.empty()) return parse_role(speaker);
  auto it = speakers.find(std::string(speaker));
  if (it == speakers.end()) return std::nullopt;
  return it->second;
}

Corpus parse_corpus(std::istream& in, const FieldMapping& mapping) {
  const std::string id_src = mapping.source_of("id");
  const std::string conv_src = mapping.source_of("conversation_id");
  const std::string speaker_src = mapping.source_of("speaker");
  const std::string ts_src = mapping.source_of("timestamp");
  const std::string text_src = mapping.source_of("text");
  const std::string meta_src = mapping.source_of("meta");

  Corpus corpus;
  std::map<std::string, std::vector<Pending>> grouped;
  std::string line;
  std::size_t line_no = 0;
  std::size_t order = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw ParseError(line_no, "record is not an object");
    ++corpus.report.records;
    const std::size_t record_index = order++;

    auto require = [&](const std::string& src, const char* name) -> const json& {
      const json* v = lookup(record, src);
      if (v == nullptr || v->is_null())
        throw ParseError(line_no, std::string("missing field '") + name + "'");
      return *v;
    };

    Utterance u;
    u.id = scalar_string(require(id_src, "id"));
    u.conversation_id = scalar_string(require(conv_src, "conversation_id"));
    const std::string speaker = scalar_string(require(speaker_src, "speaker"));
    const json& text = require(text_src, "text");
    if (!text.is_string()) throw ParseError(line_no, "text must be a string");

    const json* ts = lookup(record, ts_src);
    if (ts == nullptr || ts->is_null()) {
      if (!mapping.timestamp_from_order) throw ParseError(line_no, "missing field 'timestamp'");
      u.timestamp = static_cast<std::int64_t>(record_index);
    } else {
      u.timestamp = parse_timestamp(*ts, line_no);
    }

    if (const json* meta = lookup(record, meta_src); meta != nullptr && !meta->is_null()) {
      if (!meta->is_object()) throw ParseError(line_no, "meta must be an object");
      for (const auto& [k, v] : meta->items()) u.meta[k] = scalar_string(v);
    }

    const auto role = mapping.role_of(speaker);
    if (!role) {
      ++corpus.report.dropped_unmapped_speaker;
      continue;
    }
    u.role = *role;
    u.text = normalize_text(text.get<std::string>());
    if (u.text.empty()) {
      ++corpus.report.dropped_empty_text;
      continue;
    }
    const std::string conv_id = u.conversation_id;
    grouped[conv_id].push_back(Pending{record_index, std::move(u)});
  }

  for (auto& [conv_id, pending] : grouped) {
    if (pending.size() < 2) {
      ++corpus.report.skipped_short_conversations;
      corpus.report.warnings.push_back("conversation " + conv_id +
                                       " skipped: fewer than 2 utterances");
      continue;
    }
    std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
      return a.utterance.timestamp < b.utterance.timestamp;
    });
    Conversation conv;
    conv.id = conv_id;
    conv.utterances.reserve(pending.size());
    for (auto& p : pending) conv.utterances.push_back(std::move(p.utterance));
    for (const auto& u : conv.utterances) {
      if (!conv.outcome) {
        if (auto it = u.meta.find(std::string(kOutcomeKey)); it != u.meta.end() && !it->second.empty())
          conv.outcome = parse_outcome(it->second);
      }
      if (!conv.outcome_reason) {
        if (auto it = u.meta.find(std::string(kOutcomeReasonKey));
            it != u.meta.end() && !it->second.empty())
          conv.outcome_reason = it->second;
      }
    }
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const FieldMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open corpus file " + path.string());
  return parse_corpus(in, mapping);
}

std::string serialize_utterance(const Utterance& u) {
  json j;
  j["id"] = u.id;
  j["conversation_id"] = u.conversation_id;
  j["speaker"] = std::string(1, role_char(u.role));
  j["timestamp"] = u.timestamp;
  j["text"] = u.text;
  if (!u.meta.empty()) j["meta"] = u.meta;
  return j.dump();
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "utterances.jsonl", std::ios::binary);
    for (const auto& conv : corpus.conversations)
      for (const auto& u : conv.utterances) out << serialize_utterance(u) << '\n';
  }
  json manifest;
  manifest["conversations"] = corpus.conversations.size();
  manifest["utterances"] = corpus.utterance_count();
  manifest["records"] = corpus.report.records;
  manifest["dropped_unmapped_speaker"] = corpus.report.dropped_unmapped_speaker;
  manifest["dropped_empty_text"] = corpus.report.dropped_empty_text;
  manifest["skipped_short_conversations"] = corpus.report.skipped_short_conversations;
  manifest["warnings"] = corpus.report.warnings;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
}

std::vector<Utterance> merge_turns(std::span<const Utterance> utterances) {
  std::vector<Utterance> merged;
  for (const auto& u : utterances) {
    if (!merged.empty() && merged.back().role == u.role) {
      merged.back().text += '\n';
      merged.back().text += u.text;
    } else {
      merged.push_back(u);
    }
  }
  return merged;
}

Conversation merge_turns(const Conversation& conv) {
  Conversation out = conv;
  out.utterances = merge_turns(std::span<const Utterance>(conv.utterances));
  return out;
}

AutomatedFilter::AutomatedFilter(std::vector<std::string> patterns)
    : patterns_(std::move(patterns)) {
  regexes_.reserve(patterns_.size());
  for (const auto& p : patterns_) {
    try {
      regexes_.emplace_back(p, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw ConfigError("invalid automated-message pattern '" + p + "': " + e.what());
    }
  }
}

AutomatedFilter AutomatedFilter::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open pattern file " + path.string());
  std::vector<std::string> patterns;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    patterns.push_back(line);
  }
  return AutomatedFilter(std::move(patterns));
}

bool AutomatedFilter::matches(std::string_view text) const {
  for (const auto& re : regexes_)
    if (std::regex_match(text.begin(), text.end(), re)) return true;
  return false;
}

std::vector<Utterance> filter_automated(std::span<const Utterance> utterances,
                                        const AutomatedFilter& filter) {
  std::vector<Utterance> kept;
  kept.reserve(utterances.size());
  for (const auto& u : utterances)
    if (!filter.matches(u.text)) kept.push_back(u);
  return kept;
}

Conversation filter_automated(const Conversation& conv, const AutomatedFilter& filter) {
  Conversation out = conv;
  out.utterances = filter_automated(std::span<const Utterance>(conv.utterances), filter);
  return out;
}

std::map<std::string, std::size_t> vocabulary_counts(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& conv : corpus.conversations)
    for (const auto& u : conv.utterances)
      for (auto& tok : tokenize(u.text, Punctuation::drop)) ++counts[tok];
  return counts;
}

}  // namespace redirect

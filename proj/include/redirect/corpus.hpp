#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace redirect {

/// Dyad roles. A is the therapist / justice side, B the patient / lawyer.
enum class Role : std::uint8_t { A, B };

constexpr Role other(Role r) noexcept { return r == Role::A ? Role::B : Role::A; }
constexpr char role_char(Role r) noexcept { return r == Role::A ? 'A' : 'B'; }
std::optional<Role> parse_role(std::string_view s);

using Meta = std::map<std::string, std::string>;

struct Utterance {
  std::string id;
  std::string conversation_id;
  Role role = Role::A;
  std::int64_t timestamp = 0;
  std::string text;
  Meta meta;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

enum class Outcome { unsuccessful, control, unlabeled };

std::string_view outcome_name(Outcome o);
std::optional<Outcome> parse_outcome(std::string_view s);

/// Conversation-level labels live in utterance meta under these keys; the
/// first utterance carrying a non-empty value wins.
inline constexpr std::string_view kOutcomeKey = "outcome";
inline constexpr std::string_view kOutcomeReasonKey = "outcome_reason";

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;  // stable-sorted by timestamp
  std::optional<Outcome> outcome;
  std::optional<std::string> outcome_reason;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

struct LoadReport {
  std::size_t records = 0;
  std::size_t dropped_unmapped_speaker = 0;
  std::size_t dropped_empty_text = 0;
  std::size_t skipped_short_conversations = 0;
  std::vector<std::string> warnings;

  std::size_t warning_count() const { return warnings.size(); }
};

struct Corpus {
  std::vector<Conversation> conversations;  // ordered by conversation id
  LoadReport report;

  const Conversation* find(std::string_view conversation_id) const;
  std::size_t utterance_count() const;
};

/// Speaker-to-role assignment and field renames, read from a key-value text
/// file:
///
///     # comment
///     speaker.justice = A
///     speaker.lawyer  = B
///     field.conversation_id = meta.case_id
///     timestamp.missing = order
///
/// `field.<canonical> = <source>` renames one of id, conversation_id,
/// speaker, timestamp, text, meta. A source of the form `meta.<key>` reads a
/// key inside the record's meta object. With no `speaker.` entries the
/// labels "A" and "B" map to themselves. `timestamp.missing = order` uses
/// the record index when the timestamp is absent or null.
struct FieldMapping {
  std::map<std::string, std::string> fields;
  std::map<std::string, Role> speakers;
  bool timestamp_from_order = false;

  static FieldMapping identity() { return {}; }
  static FieldMapping parse(std::istream& in);
  static FieldMapping from_file(const std::filesystem::path& path);

  std::string source_of(std::string_view canonical) const;
  std::optional<Role> role_of(std::string_view speaker) const;
};

Corpus parse_corpus(std::istream& in, const FieldMapping& mapping);
Corpus load_corpus(const std::filesystem::path& path, const FieldMapping& mapping);

/// One normalized record in the canonical line format.
std::string serialize_utterance(const Utterance& u);

/// Writes `utterances.jsonl` and `manifest.json` into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Collapses maximal runs of same-role utterances into one turn: texts are
/// joined with '\n', id / timestamp / meta come from the first message.
std::vector<Utterance> merge_turns(std::span<const Utterance> utterances);
Conversation merge_turns(const Conversation& conv);

/// Compiled list of full-match regular expressions for platform messages
/// (scheduling notices, survey prompts, ...).
class AutomatedFilter {
 public:
  AutomatedFilter() = default;
  /// Throws ConfigError on an invalid pattern.
  explicit AutomatedFilter(std::vector<std::string> patterns);
  /// One pattern per line; blank lines and lines starting with '#' ignored.
  static AutomatedFilter from_file(const std::filesystem::path& path);

  bool matches(std::string_view text) const;
  bool empty() const { return regexes_.empty(); }
  const std::vector<std::string>& patterns() const { return patterns_; }

 private:
  std::vector<std::string> patterns_;
  std::vector<std::regex> regexes_;
};

std::vector<Utterance> filter_automated(std::span<const Utterance> utterances,
                                        const AutomatedFilter& filter);
Conversation filter_automated(const Conversation& conv, const AutomatedFilter& filter);

/// Token counts over every utterance (punctuation dropped).
std::map<std::string, std::size_t> vocabulary_counts(const Corpus& corpus);

}  // namespace redirect

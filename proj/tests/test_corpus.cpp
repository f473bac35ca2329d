#include <sstream>

#include "doctest.h"
#include "redirect/corpus.hpp"
#include "redirect/error.hpp"
#include "support.hpp"

using namespace redirect;
using redirect::testing::fixture;
using redirect::testing::utt;

TEST_CASE("fixture corpus loads with a drop report") {
  const Corpus c = load_corpus(fixture("tiny.jsonl"), FieldMapping::identity());
  CHECK(c.report.records == 23);
  CHECK(c.report.dropped_unmapped_speaker == 1);
  CHECK(c.report.dropped_empty_text == 1);
  CHECK(c.report.skipped_short_conversations == 1);
  CHECK(c.report.warning_count() == 1);
  REQUIRE(c.conversations.size() == 2);
  CHECK(c.conversations[0].id == "c1");
  CHECK(c.conversations[1].id == "c2");
  CHECK(c.utterance_count() == 20);

  const Conversation& c2 = *c.find("c2");
  CHECK(c2.utterances.front().text == "good morning");
  for (std::size_t i = 1; i < c2.utterances.size(); ++i)
    CHECK(c2.utterances[i - 1].timestamp <= c2.utterances[i].timestamp);
  CHECK(c2.outcome == Outcome::unsuccessful);
  CHECK(c2.outcome_reason == "s3");
  CHECK(c.find("c1")->outcome == Outcome::control);
  CHECK_FALSE(c.find("c1")->outcome_reason.has_value());
  CHECK(c.find("c3") == nullptr);
}

TEST_CASE("mapping renames fields, maps speakers and fills order timestamps") {
  const auto mapping = FieldMapping::from_file(fixture("renamed.map"));
  const Corpus c = load_corpus(fixture("renamed.jsonl"), mapping);
  REQUIRE(c.conversations.size() == 1);
  const auto& conv = c.conversations[0];
  CHECK(conv.id == "case-1");
  REQUIRE(conv.utterances.size() == 6);
  CHECK(conv.utterances[0].role == Role::A);
  CHECK(conv.utterances[1].role == Role::B);
  CHECK(conv.utterances[3].timestamp == 3);
  CHECK(conv.utterances[2].id == "u2");
}

TEST_CASE("parse errors carry the line number") {
  std::istringstream in(
      "{\"id\":\"1\",\"conversation_id\":\"c\",\"speaker\":\"A\",\"timestamp\":0,\"text\":\"x\"}\n"
      "\n"
      "{\"id\":\"2\",\"conversation_id\":\"c\",\"speaker\":\"B\",\"text\":\"y\"}\n");
  try {
    parse_corpus(in, FieldMapping::identity());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("malformed records are rejected") {
  auto parse = [](const std::string& line) {
    std::istringstream in(line);
    return parse_corpus(in, FieldMapping::identity());
  };
  CHECK_THROWS_AS(parse("not json"), ParseError);
  CHECK_THROWS_AS(parse("[1,2]"), ParseError);
  CHECK_THROWS_AS(
      parse(R"({"id":"1","conversation_id":"c","speaker":"A","timestamp":-4,"text":"x"})"),
      ParseError);
  CHECK_THROWS_AS(
      parse(R"({"id":"1","conversation_id":"c","speaker":"A","timestamp":1.5,"text":"x"})"),
      ParseError);
  CHECK_THROWS_AS(parse(R"({"id":"1","conversation_id":"c","speaker":"A","timestamp":1,"text":3})"),
                  ParseError);
}

TEST_CASE("bad mapping files are configuration errors") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return FieldMapping::parse(in);
  };
  CHECK_THROWS_AS(parse("speaker.x = C"), ConfigError);
  CHECK_THROWS_AS(parse("field.nope = y"), ConfigError);
  CHECK_THROWS_AS(parse("no equals sign"), ConfigError);
  CHECK_THROWS_AS(parse("timestamp.missing = guess"), ConfigError);
  CHECK(parse("# only a comment\n\n").speakers.empty());
}

TEST_CASE("merge_turns joins same-role runs") {
  const std::vector<Utterance> in = {utt("1", Role::A, 0, "x"), utt("2", Role::A, 5, "y"),
                                     utt("3", Role::B, 9, "z")};
  const auto out = merge_turns(std::span<const Utterance>(in));
  REQUIRE(out.size() == 2);
  CHECK(out[0].text == "x\ny");
  CHECK(out[0].id == "1");
  CHECK(out[0].timestamp == 0);
  CHECK(out[1].text == "z");
}

TEST_CASE("automated filter matches whole texts") {
  const auto f = AutomatedFilter::from_file(fixture("automated.txt"));
  CHECK(f.patterns().size() == 1);
  CHECK(f.matches("Reminder: your session is scheduled"));
  CHECK_FALSE(f.matches("a Reminder: inside"));
  CHECK_THROWS_AS(AutomatedFilter({"(unclosed"}), ConfigError);
  const std::vector<Utterance> in = {utt("1", Role::A, 0, "Reminder: x"), utt("2", Role::B, 1, "ok")};
  CHECK(filter_automated(std::span<const Utterance>(in), f).size() == 1);
}

TEST_CASE("serialize and re-parse round trip") {
  Corpus c = load_corpus(fixture("tiny.jsonl"), FieldMapping::identity());
  std::ostringstream out;
  for (const auto& conv : c.conversations)
    for (const auto& u : conv.utterances) out << serialize_utterance(u) << '\n';
  std::istringstream in(out.str());
  const Corpus back = parse_corpus(in, FieldMapping::identity());
  CHECK(back.conversations == c.conversations);
}

TEST_CASE("write_corpus produces utterances and manifest") {
  const Corpus c = load_corpus(fixture("tiny.jsonl"), FieldMapping::identity());
  const auto dir = redirect::testing::scratch_dir("ingest");
  write_corpus(c, dir);
  CHECK(std::filesystem::exists(dir / "utterances.jsonl"));
  const auto manifest = redirect::testing::read_text(dir / "manifest.json");
  CHECK(manifest.find("\"dropped_empty_text\": 1") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("vocabulary counts drop punctuation") {
  std::istringstream in(
      R"({"id":"1","conversation_id":"c","speaker":"A","timestamp":0,"text":"Hi, hi!"})" "\n"
      R"({"id":"2","conversation_id":"c","speaker":"B","timestamp":1,"text":"hi there"})" "\n");
  const auto counts = vocabulary_counts(parse_corpus(in, FieldMapping::identity()));
  CHECK(counts.at("hi") == 3);
  CHECK(counts.at("there") == 1);
  CHECK(counts.size() == 2);
}

#include <doctest.h>

#include <algorithm>
#include <memory>

#include "mcqforge/errors.hpp"
#include "mcqforge/mcq_factory.hpp"
#include "mcqforge/text.hpp"

using namespace mcqforge;

namespace {

Chunk sample_chunk() {
  Chunk c;
  c.doc_id = sha256_hex("doc");
  c.ordinal = 0;
  c.text = "Hypoxic tumor cells are about three times more radioresistant than oxygenated cells.";
  c.token_count = estimate_tokens(c.text);
  c.sentence_span = {0, 1};
  c.chunk_id = digest_parts({c.doc_id, "0", c.text});
  return c;
}

std::string generation_reply(std::size_t n_options, const std::string& answer, const std::string& question =
                                                                                    "How does hypoxia change tumor radiosensitivity?") {
  json options = json::array();
  for (std::size_t i = 0; i < n_options; ++i) options.push_back("Option text number " + std::to_string(i));
  return "Summary: oxygen matters.\n```json\n" +
         json{{"question", question}, {"options", options}, {"answer", answer}}.dump() + "\n```";
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

MCQRecord scored(int score, int i = 0) {
  MCQRecord m;
  m.question_id = sha256_hex(std::to_string(i));
  m.question = "q" + std::to_string(i);
  m.options = {"a", "b", "c", "d", "e", "f", "g"};
  m.quality = Quality{score, ""};
  return m;
}

}  // namespace

TEST_CASE("a valid 7-option reply becomes a candidate with provenance") {
  const auto chunk = sample_chunk();
  const auto m = parse_generated_mcq(generation_reply(7, "C"), chunk, "papers/oxygen.json");
  CHECK(m.options.size() == 7);
  CHECK(m.provenance == Provenance{chunk.chunk_id, "papers/oxygen.json"});
  CHECK(m.source_text == chunk.text);
  CHECK(m.qtype == "multiple-choice");
  CHECK(m.question_id == digest_parts({chunk.chunk_id, m.question}));
  // The answer follows its option through the shuffle.
  CHECK(m.correct_option() == "Option text number 2");
  CHECK_FALSE(m.quality);
  CHECK(mcq_from_json(to_json(m)) == m);
}

TEST_CASE("structural rejections") {
  const auto chunk = sample_chunk();
  CHECK(code_of([&] { parse_generated_mcq(generation_reply(4, "A"), chunk, "f"); }) == ErrorCode::OptionCountMismatch);
  CHECK(code_of([&] { parse_generated_mcq(generation_reply(7, "H"), chunk, "f"); }) == ErrorCode::AnswerNotInOptions);
  CHECK(code_of([&] { parse_generated_mcq(generation_reply(7, "AB"), chunk, "f"); }) == ErrorCode::AnswerNotInOptions);
  CHECK(code_of([&] { parse_generated_mcq("I cannot do that.", chunk, "f"); }) == ErrorCode::ParseFailure);
  CHECK(code_of([&] { parse_generated_mcq("{\"question\": \"q?\", \"answer\": \"A\"}", chunk, "f"); }) == ErrorCode::ParseFailure);
  CHECK(code_of([&] {
          parse_generated_mcq(generation_reply(7, "A", "According to the passage, which pathway is used?"), chunk, "f");
        }) == ErrorCode::SelfContainmentViolation);
  const std::string dup = R"({"question": "q?", "options": ["x","x","a","b","c","d","e"], "answer": "A"})";
  CHECK(code_of([&] { parse_generated_mcq(dup, chunk, "f"); }) == ErrorCode::ParseFailure);
}

TEST_CASE("lettered options and answer spellings are accepted") {
  const auto chunk = sample_chunk();
  const std::string reply =
      R"j({"question": "Which?", "options": {"A": "A) one", "B": "B. two", "C": "three", "D": "four", "E": "five", "F": "six", "G": "seven"}, "answer": "(b)"})j";
  const auto m = parse_generated_mcq(reply, chunk, "f");
  CHECK(m.correct_option() == "two");
  CHECK(std::find(m.options.begin(), m.options.end(), "one") != m.options.end());
}

TEST_CASE("option shuffle is a deterministic permutation seeded by the question id") {
  MCQRecord m = scored(8);
  m.answer = 'D';
  MCQRecord a = m, b = m;
  shuffle_options(a);
  shuffle_options(b);
  CHECK(a == b);
  CHECK(a.correct_option() == "d");
  auto sorted = a.options;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == m.options);

  // Across many ids the correct answer lands in every position.
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 200; ++i) {
    MCQRecord x = scored(8, i);
    x.answer = 'A';
    shuffle_options(x);
    ++seen[static_cast<std::size_t>(x.answer - 'A')];
  }
  for (int s : seen) CHECK(s > 0);
}

TEST_CASE("score parsing") {
  CHECK(parse_score(R"({"score": 9, "reasoning": "clear"})").quality.score == 9);
  CHECK(parse_score("```json\n{\"score\": 7.0}\n```").quality.score == 7);
  CHECK(code_of([] { parse_score(R"({"score": 11})"); }) == ErrorCode::ScoreParseFailure);
  CHECK(code_of([] { parse_score(R"({"score": 0})"); }) == ErrorCode::ScoreParseFailure);
  CHECK(code_of([] { parse_score(R"({"score": 7.5})"); }) == ErrorCode::ScoreParseFailure);
  CHECK(code_of([] { parse_score(R"({"score": "8"})"); }) == ErrorCode::ScoreParseFailure);
  CHECK(code_of([] { parse_score("A solid question, 8 out of 10.") ; }) == ErrorCode::ScoreParseFailure);

  const auto with_rel = parse_score(R"({"score": 8, "relevance": {"passed": true, "reasoning": "on topic"}})");
  CHECK(with_rel.relevance == RelevanceCheck{true, "on topic"});
  const auto flat_rel = parse_score(R"({"score": 8, "relevant": false})");
  CHECK_FALSE(flat_rel.relevance.passed);
  const auto no_rel = parse_score(R"({"score": 8})");
  CHECK_FALSE(no_rel.relevance.passed);
  CHECK(no_rel.relevance.reasoning == "relevance not reported");
}

TEST_CASE("self-containment scan") {
  CHECK_FALSE(validate_self_containment("According to the passage, which pathway...").empty());
  CHECK(validate_self_containment("Which pathway mediates radiation-induced apoptosis?").empty());
  CHECK_FALSE(validate_self_containment("The authors report that...").empty());
  CHECK_FALSE(validate_self_containment("As  MENTIONED\nabove, what?").empty());
  CHECK_FALSE(validate_self_containment("In this study, what was measured?").empty());
}

TEST_CASE("filter keeps scores at or above the threshold in order") {
  std::vector<MCQRecord> c;
  int i = 0;
  for (int s : {8, 6, 7, 10, 3}) c.push_back(scored(s, i++));
  const auto r = filter_mcqs(c, 7);
  REQUIRE(r.accepted.size() == 3);
  CHECK(r.accepted[0].quality->score == 8);
  CHECK(r.accepted[1].quality->score == 7);
  CHECK(r.accepted[2].quality->score == 10);
  CHECK(r.rejected.size() == 2);
  CHECK(filter_mcqs(c, 1).accepted.size() == 5);
  CHECK(filter_mcqs(c).accepted.size() == 3);

  c.push_back(scored(5, 99));
  c.back().quality.reset();
  CHECK_THROWS_AS(filter_mcqs(c), Error);
}

TEST_CASE("filter agrees with a linear-scan oracle on random scores") {
  SplitMix64 rng(314);
  std::vector<MCQRecord> c;
  for (int i = 0; i < 1000; ++i) c.push_back(scored(1 + static_cast<int>(rng.below(10)), i));
  for (int threshold = 1; threshold <= 10; ++threshold) {
    const auto r = filter_mcqs(c, threshold);
    std::vector<std::string> oracle;
    for (const auto& m : c)
      if (m.quality->score >= threshold) oracle.push_back(m.question_id);
    std::vector<std::string> got;
    for (const auto& m : r.accepted) got.push_back(m.question_id);
    CHECK(got == oracle);
    CHECK(r.accepted.size() + r.rejected.size() == c.size());
  }
}

TEST_CASE("generation and scoring round-trip through the gateway") {
  const auto chunk = sample_chunk();
  GenerationConfig gcfg;
  ScoringConfig scfg;
  auto mock = std::make_shared<ScriptedMockBackend>();
  const auto greq = build_generation_request(chunk, gcfg);
  CHECK(greq.temperature == doctest::Approx(0.7));
  CHECK(greq.messages.back().content.find(chunk.text) != std::string::npos);
  mock->add(greq.model, greq.messages, generation_reply(7, "E"));
  LlmGateway gw(mock);
  const auto m = generate_mcq(chunk, "f.json", gw, gcfg);
  CHECK(m.correct_option() == "Option text number 4");

  const auto sreq = build_score_request(m, scfg);
  mock->add(sreq.model, sreq.messages, R"({"score": 9, "reasoning": "ok", "relevance": {"passed": true, "reasoning": "r"}})");
  const auto s = score_mcq(m, gw, scfg);
  CHECK(s.quality.score == 9);
  CHECK(s.relevance.passed);
}

TEST_CASE("benchmark funnel arithmetic at corpus scale") {
  // 173,318 chunks in, 16,680 accepted out: under one in ten survives.
  CHECK(16680.0 / 173318.0 == doctest::Approx(0.0962).epsilon(0.001));
}

#include <doctest.h>

#include <memory>
#include <set>

#include "mcqforge/errors.hpp"
#include "mcqforge/text.hpp"
#include "mcqforge/trace_factory.hpp"

using namespace mcqforge;

namespace {

MCQRecord sample_mcq(const std::string& id = "q1") {
  MCQRecord m;
  m.question_id = sha256_hex(id);
  m.question = "Which effect makes hypoxic tumors harder to control with radiation?";
  m.options = {"increases",
               "Cells repair more DNA damage",
               "Fewer cells are in mitosis",
               "Oxygen fixes radiation-induced DNA radicals",
               "Dose rate is lower in the core",
               "Apoptosis is always suppressed",
               "Vessels absorb the beam"};
  m.answer = 'D';
  return m;
}

std::string trace_reply(const std::string& detailed, const std::string& focused, const std::string& efficient) {
  return "```json\n" + json{{"detailed", detailed}, {"focused", focused}, {"efficient", efficient}}.dump() + "\n```";
}

}  // namespace

TEST_CASE("answer declarations are recognized for the correct letter only") {
  CHECK(declares_answer("The answer is D.", 'D'));
  CHECK(declares_answer("so the correct option is (D)", 'D'));
  CHECK(declares_answer("I would choose D here.", 'D'));
  CHECK(declares_answer("Answer: D", 'D'));
  CHECK(declares_answer("Option D is correct.", 'D'));
  CHECK(declares_answer("the answer is d.", 'D'));
  CHECK(declares_answer("THE ANSWER IS D", 'D'));
  CHECK_FALSE(declares_answer("The answer is C.", 'D'));
  CHECK_FALSE(declares_answer("Option D describes oxygen fixation.", 'D'));
  CHECK_FALSE(declares_answer("The answer is a matter of oxygen.", 'A'));
  CHECK_FALSE(declares_answer("Choose a dose carefully.", 'A'));
}

TEST_CASE("a declaring sentence is removed and the rest kept") {
  const auto m = sample_mcq();
  const auto r = scrub_answer_leakage("Radiosensitivity rises with oxygen. The answer is D.", m);
  CHECK(r.status == ScrubStatus::scrubbed);
  CHECK(r.text == "Radiosensitivity rises with oxygen.");
  CHECK(r.removed_sentences == std::vector<std::string>{"The answer is D."});
}

TEST_CASE("verbatim long correct option is unremovable; short options are fine") {
  const auto m = sample_mcq();
  const auto r = scrub_answer_leakage("Recall that oxygen fixes radiation-induced DNA radicals in cells.", m);
  CHECK(r.status == ScrubStatus::unremovable);
  CHECK(r.text.empty());

  auto short_answer = m;
  short_answer.answer = 'A';  // "increases" is one word
  const auto ok = scrub_answer_leakage("Sensitivity increases with oxygen tension.", short_answer);
  CHECK(ok.status == ScrubStatus::clean);
}

TEST_CASE("clean traces pass through unchanged; all-declaration traces are unremovable") {
  const auto m = sample_mcq();
  const std::string clean = "Weigh the chemistry of radicals.  Consider repair timing.";
  const auto r = scrub_answer_leakage(clean, m);
  CHECK(r.status == ScrubStatus::clean);
  CHECK(r.text == clean);
  CHECK(scrub_answer_leakage("The answer is D.", m).status == ScrubStatus::unremovable);
}

TEST_CASE("property: scrubbed output is a detector fixpoint") {
  const auto m = sample_mcq();
  const std::vector<std::string> pieces = {"Oxygen matters.", "The answer is D.", "Repair is slower.", "Choose D.",
                                           "Option C is wrong.", "Mitosis is rare.", "Answer: D"};
  SplitMix64 rng(8);
  for (int t = 0; t < 200; ++t) {
    std::string text;
    const auto n = 1 + rng.below(6);
    for (std::uint64_t i = 0; i < n; ++i) text += (i ? " " : "") + pieces[rng.below(pieces.size())];
    const auto r = scrub_answer_leakage(text, m);
    if (r.status == ScrubStatus::unremovable) continue;
    CHECK(detect_leakage(r.text, m.options, m.answer).clean());
    CHECK(scrub_answer_leakage(r.text, m).status == ScrubStatus::clean);
  }
}

TEST_CASE("trace reply parsing needs all three modes") {
  const auto modes = parse_trace_reply(trace_reply("d", "f", "e"));
  CHECK(modes.size() == 3);
  CHECK(modes.at(TraceMode::focused) == "f");
  CHECK_THROWS_AS(parse_trace_reply(R"({"detailed": "d", "focused": "f"})"), Error);
  CHECK_THROWS_AS(parse_trace_reply(R"({"detailed": "d", "focused": "f", "efficient": "  "})"), Error);
  CHECK_THROWS_AS(parse_trace_reply("prose only"), Error);
}

TEST_CASE("the teacher sees only the question and options") {
  auto m = sample_mcq();
  m.source_text = "SECRET SOURCE CHUNK";
  const auto req = build_trace_request(m, {});
  for (const auto& msg : req.messages) {
    CHECK(msg.content.find("SECRET SOURCE CHUNK") == std::string::npos);
  }
  CHECK(req.messages.back().content.find(m.question) != std::string::npos);
  CHECK(req.messages.back().content.find("D) Oxygen fixes radiation-induced DNA radicals") != std::string::npos);
}

TEST_CASE("generation stores three clean traces, scrubbing and rejecting leaks") {
  const auto m = sample_mcq();
  auto mock = std::make_shared<ScriptedMockBackend>();
  const auto req = build_trace_request(m, {});
  mock->add(req.model, req.messages,
            trace_reply("Each option is weighed in turn. Therefore the answer is D.", "Radical fixation is the key principle.",
                        "Oxygen fixes radiation-induced DNA radicals."));
  LlmGateway gw(mock);
  const auto out = generate_traces(m, gw, {});
  REQUIRE(out.traces.size() == 2);
  CHECK(out.traces[0].mode == TraceMode::detailed);
  CHECK(out.traces[0].text == "Each option is weighed in turn.");
  CHECK(out.traces[0].trace_id == digest_parts({m.question_id, "detailed"}));
  CHECK(out.traces[0].leak_checked);
  REQUIRE(out.rejections.size() == 1);
  CHECK(out.rejections[0].mode == std::optional<TraceMode>(TraceMode::efficient));
  CHECK(out.rejections[0].code == ErrorCode::LeakUnremovable);
  CHECK(trace_from_json(to_json(out.traces[1])) == out.traces[1]);
  CHECK_FALSE(to_json(out.traces[0]).contains("answer"));
}

TEST_CASE("a malformed reply is re-prompted once, then quarantined") {
  const auto m1 = sample_mcq("q1");
  auto m2 = sample_mcq("q2");
  m2.question = "Why are hypoxic tumor cores harder to control with radiation?";
  auto mock = std::make_shared<ScriptedMockBackend>();
  const auto r1 = build_trace_request(m1, {});
  const auto r2 = build_trace_request(m2, {});
  mock->add(r1.model, r1.messages, "two modes only");
  const auto fix1 = build_trace_repair_request(r1, "two modes only");
  mock->add(fix1.model, fix1.messages, trace_reply("a", "b", "c"));
  mock->add(r2.model, r2.messages, R"({"detailed": "a", "focused": "b"})");
  const auto fix2 = build_trace_repair_request(r2, R"({"detailed": "a", "focused": "b"})");
  mock->add(fix2.model, fix2.messages, "still broken");

  LlmGateway gw(mock);
  const auto out = generate_traces_batch({m1, m2}, gw, {}, 2);
  REQUIRE(out.size() == 2);
  CHECK(out[0].traces.size() == 3);
  CHECK(out[0].rejections.empty());
  CHECK(out[1].traces.empty());
  REQUIRE(out[1].rejections.size() == 1);
  CHECK(out[1].rejections[0].code == ErrorCode::ParseFailure);
  CHECK_FALSE(out[1].rejections[0].mode);
}

TEST_CASE("trace indexes partition by mode") {
  std::vector<ReasoningTrace> traces;
  for (int q = 0; q < 3; ++q) {
    const auto qid = sha256_hex("q" + std::to_string(q));
    for (auto mode : kTraceModes) {
      traces.push_back({digest_parts({qid, to_string(mode)}), qid, mode,
                        "reasoning " + std::to_string(q) + " " + std::string(to_string(mode)), true});
    }
  }
  DeterministicEmbedder emb(32, 4);
  const auto stores = build_trace_indexes(traces, emb);
  std::set<std::string> all;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(stores[i].size() == 3);
    CHECK(stores[i].kind() == std::optional<EntryKind>(entry_kind_for(kTraceModes[i])));
    for (const auto& e : stores[i].entries()) all.insert(e.ref_id);
  }
  CHECK(all.size() == 9);

  const auto empty = build_trace_indexes({}, emb);
  for (const auto& s : empty) CHECK(s.size() == 0);

  traces[0].leak_checked = false;
  CHECK_THROWS_AS(build_trace_indexes(traces, emb), Error);

  VectorStore detailed(32, DType::fp16, EntryKind::trace_detailed);
  CHECK_THROWS_AS(detailed.add(emb.embed("x"), "t", EntryKind::trace_focused), Error);
  CHECK(trace_index_path("/r", TraceMode::focused) == std::filesystem::path("/r/traces_focused.mcqv"));
}

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sys/wait.h>

#include "mcqforge/errors.hpp"
#include "mcqforge/json_io.hpp"
#include "mcqforge/pipeline.hpp"
#include "testkit.hpp"

using namespace mcqforge;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

struct Recorded {
  fs::path dir;
  fs::path config;
  fs::path run;
};

// One full run driven by the fixture teacher, shared by the tests below.
const Recorded& recorded_run() {
  static const Recorded rec = [] {
    Recorded r;
    r.dir = testkit::scratch_dir("pipeline_record");
    r.run = r.dir / "run";
    r.config = testkit::write_e2e_config(r.dir, r.run);
    PipelineHooks hooks;
    hooks.chat_backend = std::make_shared<testkit::FixtureTeacher>();
    Pipeline p(load_pipeline_config(r.config), hooks);
    p.run_from(Stage::ingest);
    return r;
  }();
  return rec;
}

Pipeline replay_pipeline(const fs::path& dir, const fs::path& run_dir, const fs::path& script) {
  return Pipeline(load_pipeline_config(testkit::write_e2e_config(dir, run_dir, script)));
}

int run_cli(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string(MCQFORGE_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class BrokenEmbedder final : public Embedder {
 public:
  std::size_t dim() const override { return 64; }
  std::size_t max_batch() const override { return 8; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string>) override {
    throw Error(ErrorCode::EmbeddingBackendUnavailable, "backend offline");
  }
};

}  // namespace

TEST_CASE("stage names round-trip") {
  for (auto s : kStages) CHECK(stage_from_string(to_string(s)) == s);
  CHECK(to_string(Stage::trace_index) == "trace-index");
  CHECK_THROWS_AS(stage_from_string("compile"), Error);
}

TEST_CASE("config validation names the offending field") {
  const auto dir = testkit::scratch_dir("pipeline_cfg");
  const auto path = testkit::write_e2e_config(dir, dir / "run");
  const json good = json::parse(read_file(path));
  CHECK_NOTHROW(parse_pipeline_config(good, dir));

  auto bad = good;
  bad["surprise"] = 1;
  CHECK(code_of([&] { parse_pipeline_config(bad, dir); }) == ErrorCode::ConfigInvalid);
  bad = good;
  bad["llm"]["backend"] = "carrier_pigeon";
  CHECK(code_of([&] { parse_pipeline_config(bad, dir); }) == ErrorCode::ConfigInvalid);
  bad = good;
  bad["chunking"]["min_tokens"] = "many";
  CHECK(code_of([&] { parse_pipeline_config(bad, dir); }) == ErrorCode::ConfigInvalid);
  bad = good;
  bad["chunking"]["max_tokens"] = 10;
  CHECK(code_of([&] { parse_pipeline_config(bad, dir); }) == ErrorCode::ConfigInvalid);
  bad = good;
  bad["eval"]["conditions"] = json::array({"rag_everything"});
  CHECK(code_of([&] { parse_pipeline_config(bad, dir); }) == ErrorCode::ConfigInvalid);

  const auto cfg = parse_pipeline_config(good, dir);
  CHECK(cfg.eval.k == 3);
  CHECK(cfg.workers == 3);
  CHECK(cfg.eval.models.size() == 2);
  CHECK(cfg.eval.models[0].context_window == 2048);
  CHECK(cfg.eval.models[1].context_window == 4096);
  fs::remove_all(dir);
}

TEST_CASE("a stage without its upstream artifacts fails fast") {
  const auto dir = testkit::scratch_dir("pipeline_upstream");
  Pipeline p(load_pipeline_config(testkit::write_e2e_config(dir, dir / "run")));
  CHECK(code_of([&] { p.run_stage(Stage::eval); }) == ErrorCode::MissingUpstream);
  CHECK(code_of([&] { p.run_stage(Stage::chunk); }) == ErrorCode::MissingUpstream);
  fs::remove_all(dir);
}

TEST_CASE("a missing corpus root is reported as such") {
  const auto dir = testkit::scratch_dir("pipeline_root");
  auto j = json::parse(read_file(testkit::write_e2e_config(dir, dir / "run")));
  j["corpus"]["root"] = (dir / "nowhere").string();
  Pipeline p(parse_pipeline_config(j, dir));
  CHECK(code_of([&] { p.run_stage(Stage::ingest); }) == ErrorCode::MissingRoot);
  fs::remove_all(dir);
}

TEST_CASE("unchanged stages are cache hits and resume finds the next stage") {
  const auto dir = testkit::scratch_dir("pipeline_resume");
  Pipeline p(load_pipeline_config(testkit::write_e2e_config(dir, dir / "run")));
  CHECK(p.next_pending() == std::optional<Stage>(Stage::ingest));
  const auto first = p.run_stage(Stage::ingest);
  CHECK_FALSE(first.cache_hit);
  CHECK(first.counts["documents"] == 5);
  CHECK(p.run_stage(Stage::ingest).cache_hit);
  p.run_stage(Stage::chunk);
  CHECK(fs::exists(dir / "run" / "chunks.jsonl"));
  CHECK(p.next_pending() == std::optional<Stage>(Stage::embed));

  const auto m = p.manifest();
  REQUIRE(m.events.size() == 3);
  CHECK(m.events[1]["event"] == "cache_hit");
  CHECK(m.stages.at("chunk").inputs.size() == 1);
  CHECK(m.stages.at("chunk").outputs.contains("chunks.jsonl"));

  // Tampering with an output makes the stage stale again.
  write_file_atomic(dir / "run" / "chunks.jsonl", "{}\n");
  CHECK(p.next_pending() == std::optional<Stage>(Stage::chunk));
  fs::remove_all(dir);
}

TEST_CASE("a failing stage leaves no partial output") {
  const auto dir = testkit::scratch_dir("pipeline_fail");
  PipelineHooks hooks;
  hooks.embedder_factory = [] { return std::make_unique<BrokenEmbedder>(); };
  const auto cfg = load_pipeline_config(testkit::write_e2e_config(dir, dir / "run"));
  Pipeline good(cfg);
  good.run_stage(Stage::ingest);
  good.run_stage(Stage::chunk);
  Pipeline bad(cfg, hooks);
  CHECK(code_of([&] { bad.run_stage(Stage::embed); }) == ErrorCode::StageFailed);
  for (const auto& e : fs::directory_iterator(dir / "run")) {
    const auto name = e.path().filename().string();
    CHECK_MESSAGE(!name.starts_with(".staging"), name);
    CHECK_MESSAGE(!name.starts_with("chunk_embeddings"), name);
  }
  CHECK_FALSE(bad.manifest().stages.contains("embed"));
  fs::remove_all(dir);
}

TEST_CASE("full run produces every artifact and resume has nothing to do") {
  const auto& rec = recorded_run();
  for (const auto* name : {"documents.jsonl", "chunks.jsonl", "chunks.mcqv", "chunks.meta.jsonl", "benchmark.jsonl",
                           "traces.jsonl", "traces_detailed.mcqv", "traces_focused.mcqv", "traces_efficient.mcqv",
                           "graded.jsonl", "report.json", "report.csv", "calls.jsonl"}) {
    CHECK_MESSAGE(fs::exists(rec.run / name), name);
  }
  Pipeline p(load_pipeline_config(rec.config));
  CHECK_FALSE(p.next_pending());
  for (auto s : kStages) CHECK(p.is_fresh(s));

  // Editing the chunking config invalidates chunk and everything after it.
  auto j = json::parse(read_file(rec.config));
  j["chunking"]["min_tokens"] = 30;
  Pipeline edited(parse_pipeline_config(j, rec.dir));
  CHECK(edited.next_pending() == std::optional<Stage>(Stage::chunk));
  // Transport settings do not invalidate anything.
  j = json::parse(read_file(rec.config));
  j["llm"]["timeout_ms"] = 5;
  j["workers"] = 1;
  CHECK_FALSE(Pipeline(parse_pipeline_config(j, rec.dir)).next_pending());
}

TEST_CASE("benchmark provenance closes over chunks and documents") {
  const auto& rec = recorded_run();
  std::set<std::string> docs, chunk_ids;
  std::map<std::string, std::string> source_of;
  for (const auto& d : read_jsonl_strict(rec.run / "documents.jsonl")) {
    docs.insert(d["doc_id"].get<std::string>());
    source_of[d["doc_id"].get<std::string>()] = d["source_path"].get<std::string>();
  }
  std::map<std::string, std::string> doc_of_chunk;
  for (const auto& c : read_jsonl_strict(rec.run / "chunks.jsonl")) doc_of_chunk[c["chunk_id"]] = c["doc_id"];
  const auto bench = read_jsonl_strict(rec.run / "benchmark.jsonl");
  REQUIRE_FALSE(bench.empty());
  for (const auto& row : bench) {
    const auto m = mcq_from_json(row);
    CHECK(m.options.size() == 7);
    CHECK(m.quality->score >= 7);
    REQUIRE(doc_of_chunk.contains(m.provenance.chunk_id));
    const auto& doc = doc_of_chunk.at(m.provenance.chunk_id);
    CHECK(docs.contains(doc));
    CHECK(source_of.at(doc) == m.provenance.file_path);
    CHECK(validate_self_containment(m.question).empty());
  }
  const auto report = json::parse(read_file(rec.run / "report.json"));
  CHECK(report.is_array());
  CHECK_FALSE(report.empty());
}

TEST_CASE("stored traces are leak-free and indexes partition by mode") {
  const auto& rec = recorded_run();
  std::map<std::string, MCQRecord> bench;
  for (const auto& row : read_jsonl_strict(rec.run / "benchmark.jsonl")) {
    auto m = mcq_from_json(row);
    bench.emplace(m.question_id, m);
  }
  std::map<TraceMode, std::size_t> per_mode;
  for (const auto& row : read_jsonl_strict(rec.run / "traces.jsonl")) {
    const auto t = trace_from_json(row);
    CHECK(t.leak_checked);
    const auto& m = bench.at(t.question_id);
    CHECK(detect_leakage(t.text, m.options, m.answer).clean());
    ++per_mode[t.mode];
  }
  for (auto mode : kTraceModes) {
    const auto store = VectorStore::load(trace_index_path(rec.run, mode), entry_kind_for(mode));
    CHECK(store.size() == per_mode[mode]);
  }
}

TEST_CASE("journal replay reproduces every artifact byte for byte") {
  const auto& rec = recorded_run();
  const auto dir = testkit::scratch_dir("pipeline_replay");
  fs::copy_file(rec.run / "calls.jsonl", dir / "script.jsonl");
  replay_pipeline(dir, dir / "a", dir / "script.jsonl").run_from(Stage::ingest);
  replay_pipeline(dir, dir / "b", dir / "script.jsonl").run_from(Stage::ingest);
  CHECK(testkit::differing_artifacts(dir / "a", dir / "b").empty());
  CHECK(testkit::differing_artifacts(rec.run, dir / "a").empty());
  fs::remove_all(dir);
}

TEST_CASE("assembled prompts never mix retrieval sources") {
  const auto& rec = recorded_run();
  std::vector<std::string> chunk_texts;
  for (const auto& c : read_jsonl_strict(rec.run / "chunks.jsonl")) chunk_texts.push_back(c["text"].get<std::string>());
  std::vector<std::string> trace_texts;
  for (const auto& t : read_jsonl_strict(rec.run / "traces.jsonl")) trace_texts.push_back(t["text"].get<std::string>());

  std::size_t scanned = 0;
  for (const auto& p : read_jsonl_strict(rec.run / "eval_prompts.jsonl")) {
    const auto cond = p["condition"].get<std::string>();
    std::string text;
    for (const auto& m : p["messages"]) text += m["content"].get<std::string>();
    const bool has_context = text.find("Context:\n") != std::string::npos;
    CHECK(has_context == (cond != "baseline" && !p["included_refs"].empty()));
    if (cond != "rag_chunks") {
      for (const auto& c : chunk_texts) CHECK(text.find(c) == std::string::npos);
    }
    if (!cond.starts_with("rag_traces")) {
      for (const auto& t : trace_texts) CHECK(text.find(t) == std::string::npos);
    }
    ++scanned;
  }
  CHECK(scanned > 0);
}

TEST_CASE("CLI exit codes and resume") {
  const auto& rec = recorded_run();
  const auto out = rec.dir / "cli.txt";
  CHECK(run_cli("", out) == 2);
  CHECK(run_cli("chunk --config " + (rec.dir / "missing.json").string(), out) == 2);
  CHECK(run_cli("resume --config " + rec.config.string(), out) == 0);
  CHECK(read_file(out).find("nothing to do") != std::string::npos);
  CHECK(run_cli("ingest --config " + rec.config.string(), out) == 0);
  CHECK(read_file(out).find("cache hit") != std::string::npos);

  const auto fresh = rec.dir / "fresh";
  CHECK(run_cli("eval --config " + rec.config.string() + " --run-dir " + fresh.string(), out) == 2);
  CHECK(read_file(out).find("MissingUpstream") != std::string::npos);
  CHECK(run_cli("bogus --config " + rec.config.string(), out) == 2);
  CHECK(run_cli("all --dry-run --config " + rec.config.string() + " --run-dir " + fresh.string(), out) == 0);
  CHECK(read_file(out).find("ingest: would run") != std::string::npos);
}

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcqforge/corpus.hpp"
#include "mcqforge/eval_harness.hpp"

namespace mcqforge {

namespace fs = std::filesystem;

enum class Stage { ingest, chunk, embed, index, genq, score, filter, traces, trace_index, eval, report };

inline constexpr std::array<Stage, 11> kStages = {Stage::ingest, Stage::chunk,  Stage::embed,  Stage::index,
                                                  Stage::genq,   Stage::score,  Stage::filter, Stage::traces,
                                                  Stage::trace_index, Stage::eval, Stage::report};

std::string_view to_string(Stage s) noexcept;
/// CLI names ("trace-index"); throws Error(InvalidArgument).
Stage stage_from_string(std::string_view s);

// ---------------------------------------------------------------- config

struct DatasetConfig {
  std::string name;
  fs::path path;
  bool classify_math = false;
};

struct LlmSettings {
  std::string backend = "scripted_mock";  // scripted_mock | remote_http
  fs::path script;                        // scripted_mock only
  RemoteChatConfig remote;
  RetryPolicy retry;
  bool journal = true;  // <run_dir>/calls.jsonl
};

struct EvalSettings {
  std::size_t k = 5;
  std::vector<EvalModel> models;
  std::vector<std::string> conditions;  // labels; empty = all five
  std::int64_t answer_headroom = 64;
  AnswerConfig answer;
  std::optional<JudgeConfig> judge;
  std::optional<ClassifierConfig> classifier;
  bool include_benchmark = true;
  std::vector<DatasetConfig> datasets;
};

/// The whole run in one JSON document. Relative paths resolve against the
/// config file's directory.
struct PipelineConfig {
  fs::path run_dir;
  fs::path corpus_root;
  CorpusFormat corpus_format = CorpusFormat::jsonl;
  ChunkConfig chunking;
  EmbeddingConfig embedding;
  DType index_dtype = DType::fp16;
  LlmSettings llm;
  GenerationConfig generation;
  ScoringConfig scoring;
  int threshold = kDefaultScoreThreshold;
  TraceConfig traces;
  EvalSettings eval;
  std::size_t workers = 4;  // gateway in-flight bound for every stage

  json raw;  // as parsed; stage config digests are taken from its sections
};

/// Throws Error(ConfigInvalid) naming the offending field.
PipelineConfig parse_pipeline_config(const json& j, const fs::path& base_dir);
PipelineConfig load_pipeline_config(const fs::path& path);

// ---------------------------------------------------------------- manifest

struct StageEntry {
  std::map<std::string, std::string> inputs;   // artifact name -> sha256
  std::map<std::string, std::string> outputs;  // file name in run_dir -> sha256
  std::string config_digest;
  double wall_time_s = 0.0;
  json counts = json::object();
};

struct RunManifest {
  std::string run_id;
  std::map<std::string, StageEntry> stages;
  std::vector<json> events;  // {"stage", "event": "ran" | "cache_hit"}

  /// Throws Error(CorruptManifest); a missing file gives an empty manifest.
  static RunManifest load(const fs::path& path);
  void save(const fs::path& path) const;
};

json to_json(const RunManifest& m);

// ---------------------------------------------------------------- orchestration

/// Test seams: replace the configured chat backend, the retry sleeper or
/// the embedder.
struct PipelineHooks {
  std::shared_ptr<ChatBackend> chat_backend;
  Sleeper sleeper;
  std::function<std::unique_ptr<Embedder>()> embedder_factory;
};

struct StageResult {
  Stage stage = Stage::ingest;
  bool cache_hit = false;
  std::vector<std::string> outputs;
  json counts = json::object();
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, PipelineHooks hooks = {});

  /// Runs one stage, or records a cache hit when its config, inputs and
  /// outputs all still match the manifest. Throws Error(MissingUpstream |
  /// StageFailed); a failed stage leaves no partial output behind.
  StageResult run_stage(Stage stage);

  /// Runs `first` and every later stage in order.
  std::vector<StageResult> run_from(Stage first = Stage::ingest);

  /// First stage whose outputs are missing or stale; nullopt when the run is
  /// complete. Throws Error(CorruptManifest).
  std::optional<Stage> next_pending() const;

  /// True when `stage` would be a cache hit.
  bool is_fresh(Stage stage) const;

  /// Absolute paths of the inputs a stage reads (named by artifact).
  std::map<std::string, fs::path> stage_inputs(Stage stage) const;

  std::string config_digest(Stage stage) const;
  const PipelineConfig& config() const noexcept { return cfg_; }
  fs::path manifest_path() const { return cfg_.run_dir / "manifest.json"; }
  RunManifest manifest() const { return RunManifest::load(manifest_path()); }

 private:
  struct StageContext;

  void execute(Stage stage, StageContext& ctx);
  void stage_ingest(StageContext& ctx);
  void stage_chunk(StageContext& ctx);
  void stage_embed(StageContext& ctx);
  void stage_index(StageContext& ctx);
  void stage_genq(StageContext& ctx);
  void stage_score(StageContext& ctx);
  void stage_filter(StageContext& ctx);
  void stage_traces(StageContext& ctx);
  void stage_trace_index(StageContext& ctx);
  void stage_eval(StageContext& ctx);
  void stage_report(StageContext& ctx);

  std::unique_ptr<Embedder> embedder() const;
  std::unique_ptr<LlmGateway> gateway();

  PipelineConfig cfg_;
  PipelineHooks hooks_;
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<Journal> journal_;
};

/// sha256 over a file, or over (relative path, file digest) pairs of every
/// regular file below a directory in sorted order.
std::string path_digest(const fs::path& p);

}  // namespace mcqforge

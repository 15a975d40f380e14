#include "mcqforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <set>

#include "mcqforge/chunker.hpp"
#include "mcqforge/prompts.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

namespace {

constexpr std::array<std::string_view, 11> kStageNames = {"ingest", "chunk",  "embed",  "index",       "genq", "score",
                                                          "filter", "traces", "trace-index", "eval", "report"};

}  // namespace

std::string_view to_string(Stage s) noexcept { return kStageNames[static_cast<std::size_t>(s)]; }

Stage stage_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == s) return kStages[i];
  }
  throw Error(ErrorCode::InvalidArgument, "unknown stage: " + std::string(s));
}

// ---------------------------------------------------------------- config

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ConfigInvalid, field + ": " + why);
}

const json& section(const json& root, const char* name) {
  static const json kEmpty = json::object();
  if (!root.contains(name)) return kEmpty;
  if (!root[name].is_object()) invalid(name, "expected an object");
  return root[name];
}

template <typename T>
T field(const json& obj, const std::string& prefix, const char* key, T fallback) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  try {
    return obj[key].get<T>();
  } catch (const json::exception&) {
    invalid(prefix + "." + key, "wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

RetryPolicy parse_retry(const json& r, const std::string& prefix) {
  RetryPolicy p;
  p.max_attempts = field(r, prefix, "max_attempts", p.max_attempts);
  p.initial_delay = std::chrono::milliseconds(field<long long>(r, prefix, "initial_delay_ms", p.initial_delay.count()));
  p.multiplier = field(r, prefix, "multiplier", p.multiplier);
  p.max_delay = std::chrono::milliseconds(field<long long>(r, prefix, "max_delay_ms", p.max_delay.count()));
  p.jitter = field(r, prefix, "jitter", p.jitter);
  if (p.max_attempts < 1) invalid(prefix + ".max_attempts", "must be >= 1");
  if (p.multiplier < 1.0) invalid(prefix + ".multiplier", "must be >= 1");
  if (p.jitter < 0.0 || p.jitter >= 1.0) invalid(prefix + ".jitter", "must be in [0, 1)");
  return p;
}

template <typename Enum, typename Fn>
Enum parse_enum(const json& obj, const std::string& prefix, const char* key, Enum fallback, Fn from_string) {
  if (!obj.contains(key)) return fallback;
  const auto s = field<std::string>(obj, prefix, key, "");
  try {
    return from_string(s);
  } catch (const Error&) {
    invalid(prefix + "." + key, "unknown value '" + s + "'");
  }
}

}  // namespace

PipelineConfig parse_pipeline_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) invalid("config", "expected a JSON object");
  static const std::set<std::string> kKnown = {"run_dir",    "workers", "corpus",  "chunking", "embedding", "index",
                                               "llm",        "generation", "scoring", "filter", "traces", "eval"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnown.contains(it.key())) invalid(it.key(), "unknown section");
  }

  PipelineConfig c;
  c.raw = j;
  c.run_dir = resolve(base_dir, field<std::string>(j, "config", "run_dir", "run"));
  const auto workers = field<long long>(j, "config", "workers", 4);
  if (workers < 1) invalid("workers", "must be >= 1");
  c.workers = static_cast<std::size_t>(workers);

  const auto& corpus = section(j, "corpus");
  const auto root = field<std::string>(corpus, "corpus", "root", "");
  if (root.empty()) invalid("corpus.root", "required");
  c.corpus_root = resolve(base_dir, root);
  c.corpus_format = parse_enum(corpus, "corpus", "format", CorpusFormat::jsonl, corpus_format_from_string);

  const auto& ch = section(j, "chunking");
  c.chunking.min_tokens = field(ch, "chunking", "min_tokens", c.chunking.min_tokens);
  c.chunking.max_tokens = field(ch, "chunking", "max_tokens", c.chunking.max_tokens);
  c.chunking.window = field(ch, "chunking", "window", c.chunking.window);
  c.chunking.breakpoint_percentile = field(ch, "chunking", "breakpoint_percentile", c.chunking.breakpoint_percentile);
  try {
    c.chunking.validate();
  } catch (const Error& e) {
    invalid("chunking", e.what());
  }

  const auto& em = section(j, "embedding");
  c.embedding.backend = parse_enum(em, "embedding", "backend", c.embedding.backend, embedding_backend_from_string);
  c.embedding.dim = field(em, "embedding", "dim", c.embedding.dim);
  c.embedding.seed = field(em, "embedding", "seed", c.embedding.seed);
  c.embedding.max_batch = field(em, "embedding", "max_batch", c.embedding.max_batch);
  c.embedding.url = field<std::string>(em, "embedding", "url", "");
  c.embedding.model = field<std::string>(em, "embedding", "model", "");
  c.embedding.timeout = std::chrono::milliseconds(field<long long>(em, "embedding", "timeout_ms", 60000));
  if (em.contains("retry")) c.embedding.retry = parse_retry(em["retry"], "embedding.retry");
  if (c.embedding.dim == 0) invalid("embedding.dim", "must be > 0");
  if (c.embedding.max_batch == 0) invalid("embedding.max_batch", "must be > 0");

  c.index_dtype = parse_enum(section(j, "index"), "index", "dtype", DType::fp16, dtype_from_string);

  const auto& llm = section(j, "llm");
  c.llm.backend = field<std::string>(llm, "llm", "backend", c.llm.backend);
  if (c.llm.backend != "scripted_mock" && c.llm.backend != "remote_http") {
    invalid("llm.backend", "expected scripted_mock or remote_http");
  }
  c.llm.script = resolve(base_dir, field<std::string>(llm, "llm", "script", ""));
  c.llm.remote.url = field<std::string>(llm, "llm", "url", "");
  if (const auto env = field<std::string>(llm, "llm", "api_key_env", ""); !env.empty()) {
    if (const char* key = std::getenv(env.c_str())) c.llm.remote.api_key = key;
  }
  c.llm.remote.timeout = std::chrono::milliseconds(field<long long>(llm, "llm", "timeout_ms", 120000));
  if (llm.contains("retry")) c.llm.retry = parse_retry(llm["retry"], "llm.retry");
  c.llm.journal = field(llm, "llm", "journal", true);

  const auto& gen = section(j, "generation");
  c.generation.model = field(gen, "generation", "model", c.generation.model);
  c.generation.temperature = field(gen, "generation", "temperature", c.generation.temperature);
  c.generation.max_tokens = field(gen, "generation", "max_tokens", c.generation.max_tokens);

  const auto& sc = section(j, "scoring");
  c.scoring.model = field(sc, "scoring", "model", c.scoring.model);
  c.scoring.temperature = field(sc, "scoring", "temperature", c.scoring.temperature);
  c.scoring.max_tokens = field(sc, "scoring", "max_tokens", c.scoring.max_tokens);

  c.threshold = field(section(j, "filter"), "filter", "threshold", c.threshold);
  if (c.threshold < 1 || c.threshold > 10) invalid("filter.threshold", "must be in [1, 10]");

  const auto& tr = section(j, "traces");
  c.traces.model = field(tr, "traces", "model", c.traces.model);
  c.traces.temperature = field(tr, "traces", "temperature", c.traces.temperature);
  c.traces.max_tokens = field(tr, "traces", "max_tokens", c.traces.max_tokens);

  const auto& ev = section(j, "eval");
  c.eval.k = field(ev, "eval", "k", c.eval.k);
  if (c.eval.k == 0) invalid("eval.k", "must be > 0");
  c.eval.answer_headroom = field(ev, "eval", "answer_headroom", c.eval.answer_headroom);
  c.eval.answer.max_tokens = field(ev, "eval", "answer_max_tokens", c.eval.answer.max_tokens);
  c.eval.include_benchmark = field(ev, "eval", "include_benchmark", true);

  if (ev.contains("models")) {
    if (!ev["models"].is_array()) invalid("eval.models", "expected a list");
    for (std::size_t i = 0; i < ev["models"].size(); ++i) {
      const auto& m = ev["models"][i];
      const std::string prefix = "eval.models[" + std::to_string(i) + "]";
      EvalModel model;
      if (m.is_string()) model.id = m.get<std::string>();
      else if (m.is_object()) model.id = field<std::string>(m, prefix, "id", "");
      else invalid(prefix, "expected a string or an object");
      if (model.id.empty()) invalid(prefix + ".id", "required");
      const auto known = known_context_window(model.id);
      model.context_window = m.is_object() ? field<std::int64_t>(m, prefix, "context_window", known.value_or(0))
                                           : known.value_or(0);
      if (model.context_window <= 0) invalid(prefix + ".context_window", "required for unknown model " + model.id);
      c.eval.models.push_back(std::move(model));
    }
  }

  c.eval.conditions = field<std::vector<std::string>>(ev, "eval", "conditions", {});
  if (c.eval.conditions.empty()) {
    c.eval.conditions = {"baseline", "rag_chunks"};
    for (auto mode : kTraceModes) c.eval.conditions.push_back("rag_traces_" + std::string(to_string(mode)));
  }
  for (const auto& label : c.eval.conditions) {
    try {
      condition_from_label(label, c.eval.k);
    } catch (const Error&) {
      invalid("eval.conditions", "unknown condition '" + label + "'");
    }
  }

  if (ev.contains("judge") && !ev["judge"].is_null()) {
    JudgeConfig jc;
    jc.model = field<std::string>(ev["judge"], "eval.judge", "model", "");
    jc.sees_gold = field(ev["judge"], "eval.judge", "sees_gold", true);
    if (jc.model.empty()) invalid("eval.judge.model", "required");
    c.eval.judge = jc;
  }
  if (ev.contains("classifier") && !ev["classifier"].is_null()) {
    ClassifierConfig cc;
    cc.model = field<std::string>(ev["classifier"], "eval.classifier", "model", "");
    if (cc.model.empty()) invalid("eval.classifier.model", "required");
    c.eval.classifier = cc;
  }
  if (ev.contains("datasets")) {
    if (!ev["datasets"].is_array()) invalid("eval.datasets", "expected a list");
    std::set<std::string> names = {"benchmark"};
    for (std::size_t i = 0; i < ev["datasets"].size(); ++i) {
      const auto& d = ev["datasets"][i];
      const std::string prefix = "eval.datasets[" + std::to_string(i) + "]";
      DatasetConfig dc;
      dc.name = field<std::string>(d, prefix, "name", "");
      dc.path = resolve(base_dir, field<std::string>(d, prefix, "path", ""));
      dc.classify_math = field(d, prefix, "classify_math", false);
      if (dc.name.empty()) invalid(prefix + ".name", "required");
      if (!names.insert(dc.name).second) invalid(prefix + ".name", "duplicate dataset '" + dc.name + "'");
      if (dc.path.empty()) invalid(prefix + ".path", "required");
      if (dc.classify_math && !c.eval.classifier) invalid("eval.classifier", "required by " + prefix + ".classify_math");
      c.eval.datasets.push_back(std::move(dc));
    }
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::exists(path)) invalid("config", "no such file " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    invalid("config", std::string("not valid JSON: ") + e.what());
  }
  return parse_pipeline_config(j, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------- manifest

json to_json(const RunManifest& m) {
  json stages = json::object();
  for (const auto& [name, e] : m.stages) {
    stages[name] = {{"inputs", e.inputs},
                    {"outputs", e.outputs},
                    {"config_digest", e.config_digest},
                    {"wall_time_s", e.wall_time_s},
                    {"counts", e.counts}};
  }
  return {{"run_id", m.run_id}, {"stages", stages}, {"events", m.events}};
}

RunManifest RunManifest::load(const fs::path& path) {
  RunManifest m;
  if (!fs::exists(path)) return m;
  try {
    const auto j = json::parse(read_file(path));
    m.run_id = j.at("run_id").get<std::string>();
    for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it) {
      StageEntry e;
      e.inputs = it->at("inputs").get<std::map<std::string, std::string>>();
      e.outputs = it->at("outputs").get<std::map<std::string, std::string>>();
      e.config_digest = it->at("config_digest").get<std::string>();
      e.wall_time_s = it->value("wall_time_s", 0.0);
      e.counts = it->value("counts", json::object());
      m.stages[it.key()] = std::move(e);
    }
    for (const auto& ev : j.at("events")) m.events.push_back(ev);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, path.string() + ": " + e.what());
  }
  return m;
}

void RunManifest::save(const fs::path& path) const { write_file_atomic(path, to_json(*this).dump(2) + "\n"); }

std::string path_digest(const fs::path& p) {
  if (fs::is_regular_file(p)) return sha256_hex(read_file(p));
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& entry : fs::recursive_directory_iterator(p)) {
    if (entry.is_regular_file()) files.emplace_back(fs::relative(entry.path(), p).generic_string(), entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& [rel, path] : files) listing += rel + '\x1f' + sha256_hex(read_file(path)) + '\n';
  return sha256_hex(listing);
}

// ---------------------------------------------------------------- orchestration

struct Pipeline::StageContext {
  fs::path staging;
  std::map<std::string, fs::path> inputs;
  json counts = json::object();

  const fs::path& in(const std::string& name) const { return inputs.at(name); }
  fs::path out(const std::string& name) const { return staging / name; }
};

namespace {

// Which stage writes each run-dir artifact, for MissingUpstream messages.
std::string_view producer(std::string_view artifact) {
  if (artifact == "documents.jsonl") return "ingest";
  if (artifact == "chunks.jsonl") return "chunk";
  if (artifact.starts_with("chunk_embeddings")) return "embed";
  if (artifact.starts_with("chunks.")) return "index";
  if (artifact == "candidates.jsonl") return "genq";
  if (artifact == "scored.jsonl") return "score";
  if (artifact == "benchmark.jsonl") return "filter";
  if (artifact == "traces.jsonl") return "traces";
  if (artifact.starts_with("traces_")) return "trace-index";
  if (artifact == "graded.jsonl" || artifact == "math_labels.jsonl") return "eval";
  return "external";
}

std::vector<EvalCondition> conditions_of(const PipelineConfig& cfg) {
  std::vector<EvalCondition> out;
  for (const auto& label : cfg.eval.conditions) out.push_back(condition_from_label(label, cfg.eval.k));
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) { write_file_atomic(path, to_jsonl(rows)); }

json prompt_digests(std::initializer_list<std::string_view> names) {
  json out = json::object();
  for (auto name : names) {
    const auto& t = prompt_template(name);
    out[std::string(name)] = digest_parts({t.version, t.system, t.user});
  }
  return out;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg, PipelineHooks hooks) : cfg_(std::move(cfg)), hooks_(std::move(hooks)) {}

std::map<std::string, fs::path> Pipeline::stage_inputs(Stage stage) const {
  std::map<std::string, fs::path> in;
  auto add = [&](const std::string& name) { in[name] = cfg_.run_dir / name; };
  auto add_index = [&](const std::string& stem) {
    add(stem + ".mcqv");
    add(stem + ".meta.jsonl");
  };
  switch (stage) {
    case Stage::ingest: in["corpus"] = cfg_.corpus_root; break;
    case Stage::chunk: add("documents.jsonl"); break;
    case Stage::embed: add("chunks.jsonl"); break;
    case Stage::index: add_index("chunk_embeddings"); break;
    case Stage::genq: add("chunks.jsonl"); add("documents.jsonl"); break;
    case Stage::score: add("candidates.jsonl"); break;
    case Stage::filter: add("scored.jsonl"); break;
    case Stage::traces: add("benchmark.jsonl"); break;
    case Stage::trace_index: add("traces.jsonl"); break;
    case Stage::eval: {
      if (cfg_.eval.include_benchmark) add("benchmark.jsonl");
      for (const auto& c : conditions_of(cfg_)) {
        if (c.tag == ConditionTag::rag_chunks) {
          add("chunks.jsonl");
          add_index("chunks");
        } else if (c.tag == ConditionTag::rag_traces) {
          add("traces.jsonl");
          add_index(trace_index_path({}, *c.trace_mode).stem().string());
        }
      }
      for (const auto& d : cfg_.eval.datasets) in["dataset:" + d.name] = d.path;
      break;
    }
    case Stage::report: add("graded.jsonl"); add("math_labels.jsonl"); break;
  }
  return in;
}

std::string Pipeline::config_digest(Stage stage) const {
  auto sec = [&](const char* name) { return cfg_.raw.contains(name) ? cfg_.raw[name] : json::object(); };
  json d = json::object();
  switch (stage) {
    case Stage::ingest: d["corpus"] = sec("corpus"); break;
    case Stage::chunk: d["chunking"] = sec("chunking"); d["embedding"] = sec("embedding"); break;
    case Stage::embed: d["embedding"] = sec("embedding"); break;
    case Stage::index: d["index"] = sec("index"); break;
    case Stage::genq: d["generation"] = sec("generation"); d["prompts"] = prompt_digests({"mcq_generate"}); break;
    case Stage::score: d["scoring"] = sec("scoring"); d["prompts"] = prompt_digests({"mcq_score"}); break;
    case Stage::filter: d["filter"] = sec("filter"); break;
    case Stage::traces:
      d["traces"] = sec("traces");
      d["prompts"] = prompt_digests({"trace_generate", "trace_repair"});
      break;
    case Stage::trace_index: d["embedding"] = sec("embedding"); d["index"] = sec("index"); break;
    case Stage::eval:
      d["eval"] = sec("eval");
      d["embedding"] = sec("embedding");
      d["prompts"] = prompt_digests({"eval_answer", "judge", "classify_math"});
      break;
    case Stage::report: d["eval"] = sec("eval"); break;
  }
  return digest_parts({to_string(stage), d.dump()});
}

bool Pipeline::is_fresh(Stage stage) const {
  const auto manifest = RunManifest::load(manifest_path());
  auto it = manifest.stages.find(std::string(to_string(stage)));
  if (it == manifest.stages.end() || it->second.config_digest != config_digest(stage)) return false;
  const auto inputs = stage_inputs(stage);
  if (inputs.size() != it->second.inputs.size()) return false;
  for (const auto& [name, path] : inputs) {
    auto recorded = it->second.inputs.find(name);
    if (recorded == it->second.inputs.end() || !fs::exists(path) || path_digest(path) != recorded->second) return false;
  }
  for (const auto& [name, digest] : it->second.outputs) {
    const auto path = cfg_.run_dir / name;
    if (!fs::exists(path) || path_digest(path) != digest) return false;
  }
  return true;
}

std::optional<Stage> Pipeline::next_pending() const {
  for (auto stage : kStages) {
    if (!is_fresh(stage)) return stage;
  }
  return std::nullopt;
}

StageResult Pipeline::run_stage(Stage stage) {
  const std::string name(to_string(stage));
  fs::create_directories(cfg_.run_dir);
  auto manifest = RunManifest::load(manifest_path());

  StageContext ctx;
  ctx.inputs = stage_inputs(stage);
  for (const auto& [artifact, path] : ctx.inputs) {
    if (fs::exists(path)) continue;
    if (stage == Stage::ingest) throw Error(ErrorCode::MissingRoot, "corpus root " + path.string() + " does not exist");
    if (artifact.starts_with("dataset:")) {
      throw Error(ErrorCode::ConfigInvalid, "eval.datasets: " + path.string() + " does not exist");
    }
    throw Error(ErrorCode::MissingUpstream, name + " needs " + artifact + " (run stage '" +
                                                std::string(producer(artifact)) + "' first)");
  }

  StageResult result;
  result.stage = stage;
  if (is_fresh(stage)) {
    const auto& entry = manifest.stages.at(name);
    for (const auto& [out, _] : entry.outputs) result.outputs.push_back(out);
    result.cache_hit = true;
    result.counts = entry.counts;
    manifest.events.push_back({{"stage", name}, {"event", "cache_hit"}});
    manifest.save(manifest_path());
    return result;
  }

  StageEntry entry;
  for (const auto& [artifact, path] : ctx.inputs) entry.inputs[artifact] = path_digest(path);
  entry.config_digest = config_digest(stage);

  ctx.staging = cfg_.run_dir / (".staging-" + name);
  fs::remove_all(ctx.staging);
  fs::create_directories(ctx.staging);
  const auto start = std::chrono::steady_clock::now();
  try {
    execute(stage, ctx);
  } catch (const std::exception& e) {
    fs::remove_all(ctx.staging);
    if (const auto* err = dynamic_cast<const Error*>(&e); err && err->code() == ErrorCode::ConfigInvalid) throw;
    throw Error(ErrorCode::StageFailed, name + ": " + e.what());
  }
  entry.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  entry.counts = ctx.counts;

  // Outputs from an earlier run of this stage that the new run did not produce.
  if (auto old = manifest.stages.find(name); old != manifest.stages.end()) {
    for (const auto& [out, _] : old->second.outputs) {
      if (!fs::exists(ctx.staging / out)) fs::remove(cfg_.run_dir / out);
    }
  }
  std::vector<fs::path> produced;
  for (const auto& f : fs::directory_iterator(ctx.staging)) {
    if (f.is_regular_file()) produced.push_back(f.path());
  }
  std::sort(produced.begin(), produced.end());
  for (const auto& p : produced) {
    const auto out = p.filename().string();
    entry.outputs[out] = path_digest(p);
    fs::rename(p, cfg_.run_dir / out);
    result.outputs.push_back(out);
  }
  fs::remove_all(ctx.staging);

  result.counts = entry.counts;
  manifest.run_id = digest_parts({"run", cfg_.raw.dump()}).substr(0, 16);
  manifest.stages[name] = std::move(entry);
  manifest.events.push_back({{"stage", name}, {"event", "ran"}});
  manifest.save(manifest_path());
  return result;
}

std::vector<StageResult> Pipeline::run_from(Stage first) {
  std::vector<StageResult> results;
  for (auto stage : kStages) {
    if (static_cast<int>(stage) >= static_cast<int>(first)) results.push_back(run_stage(stage));
  }
  return results;
}

std::unique_ptr<Embedder> Pipeline::embedder() const {
  return hooks_.embedder_factory ? hooks_.embedder_factory() : make_embedder(cfg_.embedding);
}

std::unique_ptr<LlmGateway> Pipeline::gateway() {
  if (!backend_) {
    if (hooks_.chat_backend) {
      backend_ = hooks_.chat_backend;
    } else if (cfg_.llm.backend == "scripted_mock") {
      if (cfg_.llm.script.empty()) invalid("llm.script", "required for the scripted_mock backend");
      if (!fs::exists(cfg_.llm.script)) invalid("llm.script", "no such file " + cfg_.llm.script.string());
      backend_ = ScriptedMockBackend::from_file(cfg_.llm.script);
    } else {
      backend_ = std::make_shared<RemoteChatBackend>(cfg_.llm.remote);
    }
  }
  if (cfg_.llm.journal && !journal_) journal_ = std::make_shared<Journal>(cfg_.run_dir / "calls.jsonl");
  return std::make_unique<LlmGateway>(backend_, GatewayOptions{cfg_.llm.retry, hooks_.sleeper, journal_});
}

void Pipeline::execute(Stage stage, StageContext& ctx) {
  switch (stage) {
    case Stage::ingest: return stage_ingest(ctx);
    case Stage::chunk: return stage_chunk(ctx);
    case Stage::embed: return stage_embed(ctx);
    case Stage::index: return stage_index(ctx);
    case Stage::genq: return stage_genq(ctx);
    case Stage::score: return stage_score(ctx);
    case Stage::filter: return stage_filter(ctx);
    case Stage::traces: return stage_traces(ctx);
    case Stage::trace_index: return stage_trace_index(ctx);
    case Stage::eval: return stage_eval(ctx);
    case Stage::report: return stage_report(ctx);
  }
}

// ---------------------------------------------------------------- stages

void Pipeline::stage_ingest(StageContext& ctx) {
  const auto loaded = load_corpus(ctx.in("corpus"), cfg_.corpus_format);
  std::vector<json> docs;
  for (const auto& d : loaded.documents) docs.push_back(to_json(d));
  std::vector<json> issues;
  for (const auto& i : loaded.issues) {
    issues.push_back({{"code", std::string(to_string(i.code))}, {"path", i.path}, {"line", i.line}, {"detail", i.detail}});
  }
  write_jsonl(ctx.out("documents.jsonl"), docs);
  write_jsonl(ctx.out("ingest_report.jsonl"), issues);
  ctx.counts = {{"records", loaded.records_encountered},
                {"documents", loaded.documents.size()},
                {"full_paper", loaded.count(DocumentKind::full_paper)},
                {"abstract", loaded.count(DocumentKind::abstract)},
                {"malformed_skipped", loaded.malformed_skipped},
                {"empty_skipped", loaded.empty_skipped}};
}

void Pipeline::stage_chunk(StageContext& ctx) {
  auto emb = embedder();
  std::set<std::string> seen;
  std::size_t duplicates = 0;
  std::vector<json> rows;
  for (const auto& j : read_jsonl_strict(ctx.in("documents.jsonl"))) {
    const auto doc = document_from_json(j);
    if (!seen.insert(doc.doc_id).second) {
      ++duplicates;
      continue;
    }
    for (const auto& c : semantic_chunk(doc, *emb, cfg_.chunking)) rows.push_back(to_json(c));
  }
  write_jsonl(ctx.out("chunks.jsonl"), rows);
  ctx.counts = {{"documents", seen.size()}, {"duplicate_documents", duplicates}, {"chunks", rows.size()}};
}

void Pipeline::stage_embed(StageContext& ctx) {
  auto emb = embedder();
  std::vector<Chunk> chunks;
  for (const auto& j : read_jsonl_strict(ctx.in("chunks.jsonl"))) chunks.push_back(chunk_from_json(j));
  std::vector<std::string> texts;
  for (const auto& c : chunks) texts.push_back(c.text);
  const auto vectors = embed_all(*emb, texts);
  VectorStore store(emb->dim(), DType::fp32, EntryKind::chunk);
  for (std::size_t i = 0; i < chunks.size(); ++i) store.add(vectors[i], chunks[i].chunk_id, EntryKind::chunk);
  store.save(ctx.out("chunk_embeddings.mcqv"));
  ctx.counts = {{"vectors", store.size()}, {"dim", store.dim()}};
}

void Pipeline::stage_index(StageContext& ctx) {
  const auto source = VectorStore::load(ctx.in("chunk_embeddings.mcqv"), EntryKind::chunk);
  VectorStore store(source.dim(), cfg_.index_dtype, EntryKind::chunk);
  for (const auto& e : source.entries()) store.add(source.vector(e.row), e.ref_id, EntryKind::chunk);
  store.save(ctx.out("chunks.mcqv"));
  ctx.counts = {{"vectors", store.size()}, {"payload_bytes", store.payload_bytes()}};
}

void Pipeline::stage_genq(StageContext& ctx) {
  std::map<std::string, std::string> source_paths;
  for (const auto& j : read_jsonl_strict(ctx.in("documents.jsonl"))) {
    source_paths.emplace(j.at("doc_id").get<std::string>(), j.at("source_path").get<std::string>());
  }
  std::vector<Chunk> chunks;
  std::vector<ChatRequest> reqs;
  for (const auto& j : read_jsonl_strict(ctx.in("chunks.jsonl"))) {
    chunks.push_back(chunk_from_json(j));
    if (!source_paths.contains(chunks.back().doc_id)) {
      throw Error(ErrorCode::InvalidArgument, "chunk " + chunks.back().chunk_id + " has no document");
    }
    reqs.push_back(build_generation_request(chunks.back(), cfg_.generation));
  }

  auto gw = gateway();
  const auto responses = gw->complete_batch(reqs, cfg_.workers);
  std::vector<json> accepted;
  std::vector<json> rejected;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    auto reject = [&](ErrorCode code, const std::string& detail) {
      rejected.push_back({{"chunk_id", chunks[i].chunk_id}, {"code", std::string(to_string(code))}, {"detail", detail}});
    };
    if (!responses[i].ok()) {
      reject(ErrorCode::Permanent, responses[i].error);
      continue;
    }
    try {
      auto mcq = parse_generated_mcq(responses[i].content, chunks[i], source_paths.at(chunks[i].doc_id));
      if (!ids.insert(mcq.question_id).second) continue;
      accepted.push_back(to_json(mcq));
    } catch (const Error& e) {
      reject(e.code(), e.what());
    }
  }
  write_jsonl(ctx.out("candidates.jsonl"), accepted);
  write_jsonl(ctx.out("genq_rejected.jsonl"), rejected);
  ctx.counts = {{"chunks", chunks.size()}, {"candidates", accepted.size()}, {"rejected", rejected.size()}};
}

void Pipeline::stage_score(StageContext& ctx) {
  std::vector<MCQRecord> candidates;
  std::vector<ChatRequest> reqs;
  for (const auto& j : read_jsonl_strict(ctx.in("candidates.jsonl"))) {
    candidates.push_back(mcq_from_json(j));
    reqs.push_back(build_score_request(candidates.back(), cfg_.scoring));
  }
  auto gw = gateway();
  const auto responses = gw->complete_batch(reqs, cfg_.workers);
  std::vector<json> scored;
  std::vector<json> rejected;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto reject = [&](ErrorCode code, const std::string& detail) {
      rejected.push_back({{"question_id", candidates[i].question_id}, {"code", std::string(to_string(code))}, {"detail", detail}});
    };
    if (!responses[i].ok()) {
      reject(ErrorCode::Permanent, responses[i].error);
      continue;
    }
    try {
      const auto s = parse_score(responses[i].content);
      candidates[i].quality = s.quality;
      candidates[i].relevance_check = s.relevance;
      scored.push_back(to_json(candidates[i]));
    } catch (const Error& e) {
      reject(e.code(), e.what());
    }
  }
  write_jsonl(ctx.out("scored.jsonl"), scored);
  write_jsonl(ctx.out("score_rejected.jsonl"), rejected);
  ctx.counts = {{"candidates", candidates.size()}, {"scored", scored.size()}, {"rejected", rejected.size()}};
}

void Pipeline::stage_filter(StageContext& ctx) {
  std::vector<MCQRecord> scored;
  for (const auto& j : read_jsonl_strict(ctx.in("scored.jsonl"))) scored.push_back(mcq_from_json(j));
  const auto result = filter_mcqs(scored, cfg_.threshold);
  std::vector<json> accepted;
  std::vector<json> rejected;
  for (const auto& m : result.accepted) accepted.push_back(to_json(m));
  for (const auto& m : result.rejected) rejected.push_back(to_json(m));
  write_jsonl(ctx.out("benchmark.jsonl"), accepted);
  write_jsonl(ctx.out("rejected.jsonl"), rejected);
  ctx.counts = {{"scored", scored.size()}, {"accepted", accepted.size()}, {"rejected", rejected.size()},
                {"threshold", cfg_.threshold}};
}

void Pipeline::stage_traces(StageContext& ctx) {
  std::vector<MCQRecord> mcqs;
  for (const auto& j : read_jsonl_strict(ctx.in("benchmark.jsonl"))) mcqs.push_back(mcq_from_json(j));
  auto gw = gateway();
  const auto outcomes = generate_traces_batch(mcqs, *gw, cfg_.traces, cfg_.workers);
  std::vector<json> traces;
  std::vector<json> rejected;
  for (const auto& o : outcomes) {
    for (const auto& t : o.traces) traces.push_back(to_json(t));
    for (const auto& r : o.rejections) rejected.push_back(to_json(r));
  }
  write_jsonl(ctx.out("traces.jsonl"), traces);
  write_jsonl(ctx.out("traces_rejected.jsonl"), rejected);
  ctx.counts = {{"questions", mcqs.size()}, {"traces", traces.size()}, {"rejected", rejected.size()}};
}

void Pipeline::stage_trace_index(StageContext& ctx) {
  std::vector<ReasoningTrace> traces;
  for (const auto& j : read_jsonl_strict(ctx.in("traces.jsonl"))) traces.push_back(trace_from_json(j));
  auto emb = embedder();
  auto stores = build_trace_indexes(traces, *emb, cfg_.index_dtype);
  json counts = json::object();
  for (std::size_t i = 0; i < kTraceModes.size(); ++i) {
    stores[i].save(trace_index_path(ctx.staging, kTraceModes[i]));
    counts[std::string(to_string(kTraceModes[i]))] = stores[i].size();
  }
  ctx.counts = counts;
}

void Pipeline::stage_eval(StageContext& ctx) {
  if (cfg_.eval.models.empty()) invalid("eval.models", "at least one model is required");
  const auto conditions = conditions_of(cfg_);

  std::optional<VectorStore> chunk_store;
  RetrievalSource chunk_source;
  std::map<TraceMode, VectorStore> trace_stores;
  std::map<TraceMode, RetrievalSource> trace_sources;
  std::vector<ReasoningTrace> traces;
  if (ctx.inputs.contains("traces.jsonl")) {
    for (const auto& j : read_jsonl_strict(ctx.in("traces.jsonl"))) traces.push_back(trace_from_json(j));
  }
  for (const auto& c : conditions) {
    if (c.tag == ConditionTag::rag_chunks && !chunk_store) {
      chunk_store = VectorStore::load(ctx.in("chunks.mcqv"), EntryKind::chunk);
      chunk_source.store = &*chunk_store;
      for (const auto& j : read_jsonl_strict(ctx.in("chunks.jsonl"))) {
        chunk_source.texts.emplace(j.at("chunk_id").get<std::string>(), j.at("text").get<std::string>());
      }
    } else if (c.tag == ConditionTag::rag_traces && !trace_stores.contains(*c.trace_mode)) {
      const auto mode = *c.trace_mode;
      const auto file = trace_index_path({}, mode).string();
      auto& store = trace_stores.emplace(mode, VectorStore::load(ctx.in(file), entry_kind_for(mode))).first->second;
      auto& source = trace_sources[mode];
      source.store = &store;
      for (const auto& t : traces) {
        if (t.mode == mode) source.texts.emplace(t.trace_id, t.text);
      }
    }
  }

  EvalSources sources;
  sources.chunks = chunk_store ? &chunk_source : nullptr;
  for (auto& [mode, source] : trace_sources) sources.traces[mode] = &source;
  auto emb = embedder();
  sources.embedder = emb.get();

  struct Dataset {
    std::string name;
    std::vector<EvalItem> items;
    bool classify_math = false;
  };
  std::vector<Dataset> datasets;
  if (cfg_.eval.include_benchmark) {
    Dataset d{"benchmark", {}, false};
    for (const auto& j : read_jsonl_strict(ctx.in("benchmark.jsonl"))) d.items.push_back(eval_item_from(mcq_from_json(j)));
    datasets.push_back(std::move(d));
  }
  for (const auto& dc : cfg_.eval.datasets) {
    Dataset d{dc.name, {}, dc.classify_math};
    std::set<std::string> ids;
    for (const auto& j : read_jsonl_strict(ctx.in("dataset:" + dc.name))) {
      auto item = eval_item_from_json(j);
      if (ids.insert(item.question_id).second) d.items.push_back(std::move(item));
    }
    datasets.push_back(std::move(d));
  }

  auto gw = gateway();
  std::optional<Judge> judge;
  if (cfg_.eval.judge) judge.emplace(Judge{*gw, *cfg_.eval.judge});

  std::vector<json> graded;
  std::vector<json> prompts;
  std::vector<json> labels;
  json counts = json::object();
  for (const auto& d : datasets) {
    if (d.classify_math) {
      MathClassifier classifier(*gw, *cfg_.eval.classifier);
      std::vector<EvalItem> evaluated;
      for (const auto& item : d.items) {
        if (!item.multimodal) evaluated.push_back(item);
      }
      classifier.classify_all(evaluated, cfg_.workers);
      for (const auto& item : evaluated) {
        const auto v = classifier.cache().at(item.question_id);
        labels.push_back({{"dataset", d.name}, {"question_id", item.question_id},
                          {"math_required", v ? json(*v) : json(nullptr)}});
      }
    }

    EvalRunConfig run;
    run.dataset = d.name;
    run.conditions = conditions;
    run.answer_headroom = cfg_.eval.answer_headroom;
    run.answer = cfg_.eval.answer;
    run.max_in_flight = cfg_.workers;
    const auto outcome = evaluate(d.items, cfg_.eval.models, run, sources, *gw, judge);
    for (const auto& g : outcome.graded) graded.push_back(to_json(g));
    prompts.insert(prompts.end(), outcome.prompts.begin(), outcome.prompts.end());
    counts[d.name] = {{"items", d.items.size()},
                      {"multimodal_skipped", outcome.skipped_multimodal},
                      {"evaluated", d.items.size() - outcome.skipped_multimodal},
                      {"graded", outcome.graded.size()}};
  }
  write_jsonl(ctx.out("graded.jsonl"), graded);
  write_jsonl(ctx.out("eval_prompts.jsonl"), prompts);
  write_jsonl(ctx.out("math_labels.jsonl"), labels);
  ctx.counts = counts;
}

void Pipeline::stage_report(StageContext& ctx) {
  std::vector<GradedAnswer> graded;
  for (const auto& j : read_jsonl_strict(ctx.in("graded.jsonl"))) graded.push_back(graded_from_json(j));
  std::map<std::string, std::optional<bool>> labels;
  std::vector<std::string> classified;
  for (const auto& j : read_jsonl_strict(ctx.in("math_labels.jsonl"))) {
    const auto& v = j.at("math_required");
    labels[j.at("question_id").get<std::string>()] = v.is_boolean() ? std::optional<bool>(v.get<bool>()) : std::nullopt;
    const auto dataset = j.at("dataset").get<std::string>();
    if (std::find(classified.begin(), classified.end(), dataset) == classified.end()) classified.push_back(dataset);
  }

  const auto reports = build_reports(graded, labels, classified);
  json all = json::array();
  std::set<std::pair<std::string, Subset>> tables;
  for (const auto& r : reports) {
    all.push_back(to_json(r));
    tables.emplace(r.dataset, r.subset);
  }
  write_file_atomic(ctx.out("report.json"), all.dump(2) + "\n");
  write_file_atomic(ctx.out("report.csv"), report_csv(reports));
  for (const auto& [dataset, subset] : tables) {
    write_file_atomic(ctx.out("improvement_" + dataset + "_" + std::string(to_string(subset)) + ".csv"),
                      improvement_csv(reports, dataset, subset));
  }
  ctx.counts = {{"graded", graded.size()}, {"reports", reports.size()}};
}

}  // namespace mcqforge

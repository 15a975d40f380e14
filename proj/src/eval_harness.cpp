#include "mcqforge/eval_harness.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>

#include "mcqforge/prompts.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

// ---------------------------------------------------------------- conditions

std::string_view to_string(ConditionTag tag) noexcept {
  switch (tag) {
    case ConditionTag::baseline: return "baseline";
    case ConditionTag::rag_chunks: return "rag_chunks";
    case ConditionTag::rag_traces: return "rag_traces";
  }
  return "baseline";
}

std::string EvalCondition::label() const {
  if (tag == ConditionTag::rag_traces && trace_mode) return "rag_traces_" + std::string(to_string(*trace_mode));
  return std::string(to_string(tag));
}

void EvalCondition::validate() const {
  switch (tag) {
    case ConditionTag::baseline:
      if (trace_mode || k != 0) throw Error(ErrorCode::InvalidArgument, "baseline takes no retrieval parameters");
      break;
    case ConditionTag::rag_chunks:
      if (trace_mode) throw Error(ErrorCode::InvalidArgument, "rag_chunks takes no trace mode");
      if (k == 0) throw Error(ErrorCode::InvalidArgument, "rag_chunks needs k > 0");
      break;
    case ConditionTag::rag_traces:
      if (!trace_mode) throw Error(ErrorCode::InvalidArgument, "rag_traces needs a trace mode");
      if (k == 0) throw Error(ErrorCode::InvalidArgument, "rag_traces needs k > 0");
      break;
  }
}

EvalCondition condition_from_label(std::string_view label, std::size_t k) {
  if (label == "baseline") return EvalCondition::baseline();
  if (label == "rag_chunks") return EvalCondition::chunks(k);
  constexpr std::string_view prefix = "rag_traces_";
  if (label.starts_with(prefix)) return EvalCondition::traces(trace_mode_from_string(label.substr(prefix.size())), k);
  throw Error(ErrorCode::InvalidArgument, "unknown condition: " + std::string(label));
}

// ---------------------------------------------------------------- items

EvalItem eval_item_from(const MCQRecord& mcq) {
  return {mcq.question_id, mcq.question, mcq.options, mcq.answer, false};
}

EvalItem eval_item_from_json(const json& j) {
  try {
    EvalItem item;
    item.question = j.at("question").get<std::string>();
    const auto& opts = j.at("options");
    if (opts.is_array()) {
      item.options = opts.get<std::vector<std::string>>();
    } else {
      for (std::size_t i = 0; opts.contains(std::string(1, option_letter(i))); ++i) {
        item.options.push_back(opts.at(std::string(1, option_letter(i))).get<std::string>());
      }
    }
    if (item.options.size() < 2 || item.options.size() > kOptionCount) {
      throw Error(ErrorCode::ParseFailure, "expected 2 to 7 options, got " + std::to_string(item.options.size()));
    }
    const auto answer = j.at("answer").get<std::string>();
    if (answer.size() != 1 || !letter_index(answer[0], item.options.size())) {
      throw Error(ErrorCode::ParseFailure, "answer '" + answer + "' is not an option letter");
    }
    item.answer = answer[0];
    item.multimodal = j.value("multimodal", false);
    item.question_id = j.contains("question_id") ? j["question_id"].get<std::string>()
                                                 : digest_parts({"exam", item.question});
    return item;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("exam row: ") + e.what());
  }
}

std::string query_text(const EvalItem& item) { return item.question + "\n" + format_options(item.options); }

// ---------------------------------------------------------------- prompts

std::optional<std::int64_t> known_context_window(std::string_view model_id) {
  // Order matters: the more specific key comes first.
  static constexpr std::array<std::pair<std::string_view, std::int64_t>, 8> kWindows = {{
      {"olmo7b", 2048},
      {"tinyllama", 2048},
      {"gemma3", 128000},
      {"smollm3", 32768},
      {"mistral", 4096},
      {"llama31", 32768},
      {"llama3", 8192},
      {"qwen15", 32768},
  }};
  std::string key;
  for (char c : model_id) {
    if (std::isalnum(static_cast<unsigned char>(c))) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (const auto& [needle, window] : kWindows) {
    if (key.find(needle) != std::string::npos) return window;
  }
  return std::nullopt;
}

std::int64_t prompt_tokens(const std::vector<ChatMessage>& messages) {
  constexpr std::int64_t kPerMessage = 4;  // role and separators
  std::int64_t total = 0;
  for (const auto& m : messages) total += kPerMessage + estimate_tokens(m.content);
  return total;
}

namespace {

std::vector<ChatMessage> render_answer_messages(const EvalItem& item, const std::string& context) {
  const auto& t = prompt_template("eval_answer");
  const std::string options = format_options(item.options);
  std::vector<ChatMessage> messages;
  if (!t.system.empty()) messages.push_back({"system", t.system});
  messages.push_back(
      {"user", render_template(t.user, {{"context", context}, {"question", item.question}, {"options", options}})});
  return messages;
}

std::string context_block(const std::vector<const RetrievedText*>& texts) {
  if (texts.empty()) return {};
  std::string out = "Context:\n";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out += "[" + std::to_string(i + 1) + "] " + texts[i]->text + "\n\n";
  }
  return out;
}

}  // namespace

AssembledPrompt assemble_prompt(const EvalItem& item, const EvalCondition& condition,
                                std::span<const RetrievedText> retrieved, std::int64_t context_window,
                                std::int64_t answer_headroom) {
  condition.validate();
  if (condition.tag == ConditionTag::baseline && !retrieved.empty()) {
    throw Error(ErrorCode::InvalidArgument, "baseline prompts take no retrieved text");
  }
  const std::int64_t budget = context_window - answer_headroom;

  AssembledPrompt out;
  out.messages = render_answer_messages(item, {});
  out.prompt_tokens = prompt_tokens(out.messages);
  if (out.prompt_tokens > budget) {
    throw Error(ErrorCode::QuestionExceedsBudget, item.question_id + " needs " + std::to_string(out.prompt_tokens) +
                                                      " tokens, budget " + std::to_string(budget));
  }

  std::vector<const RetrievedText*> included;
  for (const auto& r : retrieved) {
    included.push_back(&r);
    auto trial = render_answer_messages(item, context_block(included));
    const auto tokens = prompt_tokens(trial);
    if (tokens > budget) {
      included.pop_back();
      continue;
    }
    out.messages = std::move(trial);
    out.prompt_tokens = tokens;
    out.included_refs.push_back(r.ref_id);
  }
  return out;
}

ChatRequest build_answer_request(const std::string& model_id, const AssembledPrompt& prompt, const AnswerConfig& cfg,
                                 std::string request_id) {
  ChatRequest req;
  req.model = model_id;
  req.messages = prompt.messages;
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  req.request_id = std::move(request_id);
  return req;
}

ChatResponse answer_question(const std::string& model_id, const AssembledPrompt& prompt, LlmGateway& gateway,
                             const AnswerConfig& cfg, std::string request_id) {
  ChatRequest req = build_answer_request(model_id, prompt, cfg, std::move(request_id));
  try {
    return gateway.complete(req);
  } catch (const Error& e) {
    ChatResponse r;
    r.request_id = req.request_id;
    r.finish_reason = FinishReason::error;
    r.error = e.what();
    return r;
  }
}

// ---------------------------------------------------------------- grading

std::string_view to_string(Grader g) noexcept { return g == Grader::llm_judge ? "llm_judge" : "deterministic"; }

json to_json(const GradedAnswer& g) {
  return {{"dataset", g.dataset},
          {"question_id", g.question_id},
          {"model_id", g.model_id},
          {"condition", g.condition},
          {"raw_response", g.raw_response},
          {"extracted_choice", g.extracted_choice ? std::string(1, *g.extracted_choice) : std::string("ABSTAIN")},
          {"correct", g.correct},
          {"judge_reasoning", g.judge_reasoning},
          {"grader", std::string(to_string(g.grader))}};
}

GradedAnswer graded_from_json(const json& j) {
  GradedAnswer g;
  g.dataset = j.value("dataset", std::string());
  g.question_id = j.at("question_id").get<std::string>();
  g.model_id = j.at("model_id").get<std::string>();
  g.condition = j.at("condition").get<std::string>();
  g.raw_response = j.value("raw_response", std::string());
  const auto choice = j.at("extracted_choice").get<std::string>();
  if (choice != "ABSTAIN") {
    if (choice.size() != 1 || !letter_index(choice[0], 26)) {
      throw Error(ErrorCode::ParseFailure, "bad extracted_choice: " + choice);
    }
    g.extracted_choice = choice[0];
  }
  g.correct = j.at("correct").get<bool>();
  g.judge_reasoning = j.value("judge_reasoning", std::string());
  g.grader = j.value("grader", std::string()) == "llm_judge" ? Grader::llm_judge : Grader::deterministic;
  return g;
}

namespace {

using LetterSet = std::set<char>;

void collect(const std::regex& re, const std::string& text, std::size_t option_count, LetterSet& out) {
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    for (std::size_t g = 1; g < it->size(); ++g) {
      if (!(*it)[g].matched) continue;
      const char c = static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[g].str()[0])));
      if (letter_index(c, option_count)) out.insert(c);
    }
  }
}

// A bare lower-case letter is too often an article ("a"), so it only counts
// inside parentheses.
constexpr const char* kLetter = R"((?:\(([A-Za-z])\)|([A-Z])(?![A-Za-z0-9])))";

LetterSet declared_letters(const std::string& text, std::size_t option_count) {
  static const std::array<std::regex, 3> kPatterns = {
      std::regex(std::string(R"((?:[Aa]nswer|ANSWER)s?\s*(?:is|would be|:|=|-)?\s*(?:[Oo]ption\s+|[Cc]hoice\s+)?)") + kLetter),
      std::regex(std::string(R"([Cc]orrect\s+(?:option|choice|letter)\s*(?:is|:)?\s*)") + kLetter),
      std::regex(std::string(R"([Oo]ption\s+)") + kLetter + R"(\s+is\s+(?:the\s+)?correct)"),
  };
  LetterSet out;
  for (const auto& re : kPatterns) collect(re, text, option_count, out);
  return out;
}

LetterSet leading_letter(std::string_view text, std::size_t option_count) {
  std::size_t i = 0;
  while (i < text.size() && (std::isspace(static_cast<unsigned char>(text[i])) || text[i] == '*' || text[i] == '#' ||
                             text[i] == '"' || text[i] == '`')) {
    ++i;
  }
  const bool paren = i < text.size() && text[i] == '(';
  if (paren) ++i;
  if (i >= text.size() || !letter_index(text[i], option_count)) return {};
  const char letter = text[i++];
  if (i == text.size()) return {letter};
  static constexpr std::string_view kFollow = ".):],-*\n";
  if (kFollow.find(text[i]) != std::string_view::npos) return {letter};
  return {};
}

LetterSet parenthesized_letters(const std::string& text, std::size_t option_count) {
  static const std::regex re(R"(\(([A-Z])\))");
  LetterSet out;
  collect(re, text, option_count, out);
  return out;
}

LetterSet option_text_matches(std::string_view text, const std::vector<std::string>& options) {
  const std::string folded = fold_whitespace_lower(text);
  LetterSet out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const std::string opt = fold_whitespace_lower(options[i]);
    if (!opt.empty() && folded.find(opt) != std::string::npos) out.insert(option_letter(i));
  }
  return out;
}

}  // namespace

Extraction extract_choice(std::string_view response, const std::vector<std::string>& options) {
  const std::string text(response);
  const std::size_t n = options.size();
  const std::array<std::pair<const char*, LetterSet>, 4> tiers = {{
      {"declaration", declared_letters(text, n)},
      {"leading_letter", leading_letter(text, n)},
      {"parenthesized", parenthesized_letters(text, n)},
      {"option_text", option_text_matches(text, options)},
  }};
  for (const auto& [rule, letters] : tiers) {
    if (letters.empty()) continue;
    Extraction e;
    e.rule = rule;
    if (letters.size() == 1) e.choice = *letters.begin();
    else e.ambiguous = true;
    return e;
  }
  return {};
}

ChatRequest build_judge_request(const EvalItem& item, std::string_view response, const JudgeConfig& cfg,
                                std::string request_id) {
  const auto& t = prompt_template("judge");
  const std::string options = format_options(item.options);
  const std::string gold = cfg.sees_gold ? "Gold answer: " + std::string(1, item.answer) + "\n\n" : std::string();
  ChatRequest req;
  req.model = cfg.model;
  if (!t.system.empty()) req.messages.push_back({"system", t.system});
  req.messages.push_back({"user", render_template(t.user, {{"question", item.question},
                                                           {"options", options},
                                                           {"gold", gold},
                                                           {"response", response}})});
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  req.request_id = std::move(request_id);
  return req;
}

std::pair<std::optional<char>, std::string> parse_judge_reply(std::string_view reply, std::size_t option_count) {
  auto obj = extract_json_object(reply);
  if (!obj || !obj->contains("choice") || !(*obj)["choice"].is_string()) {
    return {std::nullopt, "unparseable judge reply"};
  }
  std::string reasoning = obj->value("reasoning", std::string());
  std::string choice(trim((*obj)["choice"].get<std::string>()));
  if (choice.size() == 3 && choice[0] == '(' && choice[2] == ')') choice = choice.substr(1, 1);
  if (choice.size() == 2 && (choice[1] == ')' || choice[1] == '.')) choice = choice.substr(0, 1);
  if (choice.size() == 1) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(choice[0])));
    if (letter_index(c, option_count)) return {c, std::move(reasoning)};
  }
  return {std::nullopt, std::move(reasoning)};
}

GradedAnswer grade(const EvalItem& item, const ChatResponse& response, const std::optional<Judge>& judge,
                   std::string judge_request_id) {
  GradedAnswer g;
  g.question_id = item.question_id;
  g.raw_response = response.content;
  g.grader = Grader::deterministic;
  if (!response.ok()) {
    g.judge_reasoning = "no response: " + response.error;
    return g;
  }
  if (is_blank(response.content)) {
    g.judge_reasoning = "empty response";
    return g;
  }

  const auto extraction = extract_choice(response.content, item.options);
  if (extraction.choice) {
    g.extracted_choice = extraction.choice;
    g.correct = *extraction.choice == item.answer;
    return g;
  }
  if (!judge) {
    g.judge_reasoning = extraction.ambiguous ? "several letters, no judge configured" : "no letter, no judge configured";
    return g;
  }

  g.grader = Grader::llm_judge;
  try {
    const auto reply = judge->gateway.complete(build_judge_request(item, response.content, judge->cfg, std::move(judge_request_id)));
    auto [choice, reasoning] = parse_judge_reply(reply.content, item.options.size());
    g.extracted_choice = choice;
    g.judge_reasoning = std::move(reasoning);
  } catch (const Error& e) {
    g.judge_reasoning = std::string("judge failed: ") + e.what();
  }
  g.correct = g.extracted_choice && *g.extracted_choice == item.answer;
  return g;
}

// ---------------------------------------------------------------- math subset

ChatRequest build_classifier_request(const EvalItem& item, const ClassifierConfig& cfg) {
  const auto& t = prompt_template("classify_math");
  const std::string options = format_options(item.options);
  ChatRequest req;
  req.model = cfg.model;
  if (!t.system.empty()) req.messages.push_back({"system", t.system});
  req.messages.push_back({"user", render_template(t.user, {{"question", item.question}, {"options", options}})});
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  req.request_id = "math:" + item.question_id;
  return req;
}

std::optional<bool> parse_classifier_reply(std::string_view reply) {
  auto obj = extract_json_object(reply);
  if (!obj || !obj->contains("math_required") || !(*obj)["math_required"].is_boolean()) return std::nullopt;
  return (*obj)["math_required"].get<bool>();
}

std::optional<bool> MathClassifier::classify(const EvalItem& item) {
  if (auto it = cache_.find(item.question_id); it != cache_.end()) return it->second;
  std::optional<bool> value;
  try {
    value = parse_classifier_reply(gateway_.complete(build_classifier_request(item, cfg_)).content);
  } catch (const Error&) {
  }
  cache_[item.question_id] = value;
  return value;
}

void MathClassifier::classify_all(std::span<const EvalItem> items, std::size_t max_in_flight) {
  std::vector<ChatRequest> reqs;
  std::vector<std::string> ids;
  std::set<std::string> pending;
  for (const auto& item : items) {
    if (cache_.contains(item.question_id) || !pending.insert(item.question_id).second) continue;
    reqs.push_back(build_classifier_request(item, cfg_));
    ids.push_back(item.question_id);
  }
  const auto responses = gateway_.complete_batch(reqs, max_in_flight);
  for (std::size_t i = 0; i < responses.size(); ++i) {
    cache_[ids[i]] = responses[i].ok() ? parse_classifier_reply(responses[i].content) : std::nullopt;
  }
}

// ---------------------------------------------------------------- runs

EvalOutcome evaluate(std::span<const EvalItem> items, const std::vector<EvalModel>& models, const EvalRunConfig& cfg,
                     const EvalSources& sources, LlmGateway& gateway, const std::optional<Judge>& judge) {
  EvalOutcome out;
  std::vector<const EvalItem*> kept;
  for (const auto& item : items) {
    if (item.multimodal) ++out.skipped_multimodal;
    else kept.push_back(&item);
  }

  const bool retrieves = std::any_of(cfg.conditions.begin(), cfg.conditions.end(),
                                     [](const EvalCondition& c) { return c.tag != ConditionTag::baseline; });
  std::vector<EmbeddingVector> queries;
  if (retrieves && !kept.empty()) {
    if (!sources.embedder) throw Error(ErrorCode::InvalidArgument, "retrieval conditions need an embedder");
    std::vector<std::string> texts;
    for (const auto* item : kept) texts.push_back(query_text(*item));
    queries = embed_all(*sources.embedder, texts);
  }

  auto source_for = [&](const EvalCondition& c) -> const RetrievalSource* {
    if (c.tag == ConditionTag::rag_chunks) return sources.chunks;
    if (c.tag == ConditionTag::rag_traces) {
      auto it = sources.traces.find(*c.trace_mode);
      return it == sources.traces.end() ? nullptr : it->second;
    }
    return nullptr;
  };

  for (const auto& model : models) {
    for (const auto& condition : cfg.conditions) {
      condition.validate();
      const RetrievalSource* source = source_for(condition);
      if (condition.tag != ConditionTag::baseline && (!source || !source->store)) {
        throw Error(ErrorCode::InvalidArgument, "no retrieval source for " + condition.label());
      }
      const std::string tag = cfg.dataset + ":" + model.id + ":" + condition.label() + ":";

      std::vector<std::optional<AssembledPrompt>> prompts(kept.size());
      std::vector<std::vector<RetrievedText>> retrieved(kept.size());
      std::vector<ChatRequest> reqs;
      std::vector<std::size_t> req_item;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        if (source && source->store->size() > 0) {
          for (const auto& hit : source->store->search_topk(queries[i], condition.k)) {
            auto text = source->texts.find(hit.ref_id);
            if (text == source->texts.end()) throw Error(ErrorCode::InvalidArgument, "unresolved ref_id " + hit.ref_id);
            retrieved[i].push_back({hit.ref_id, text->second, hit.score});
          }
        }
        try {
          prompts[i] = assemble_prompt(*kept[i], condition, retrieved[i], model.context_window, cfg.answer_headroom);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::QuestionExceedsBudget) throw;
          continue;
        }
        reqs.push_back(build_answer_request(model.id, *prompts[i], cfg.answer, "answer:" + tag + kept[i]->question_id));
        req_item.push_back(i);
      }

      const auto responses = gateway.complete_batch(reqs, cfg.max_in_flight);
      std::vector<const ChatResponse*> by_item(kept.size(), nullptr);
      for (std::size_t r = 0; r < responses.size(); ++r) by_item[req_item[r]] = &responses[r];

      for (std::size_t i = 0; i < kept.size(); ++i) {
        GradedAnswer g;
        if (by_item[i]) {
          g = grade(*kept[i], *by_item[i], judge, "judge:" + tag + kept[i]->question_id);
        } else {
          g.question_id = kept[i]->question_id;
          g.judge_reasoning = "question exceeds context budget";
        }
        g.dataset = cfg.dataset;
        g.model_id = model.id;
        g.condition = condition.label();

        json row{{"dataset", cfg.dataset},
                 {"model_id", model.id},
                 {"condition", g.condition},
                 {"question_id", g.question_id},
                 {"included_refs", prompts[i] ? prompts[i]->included_refs : std::vector<std::string>{}},
                 {"prompt_tokens", prompts[i] ? prompts[i]->prompt_tokens : 0},
                 {"messages", json::array()}};
        if (prompts[i]) {
          for (const auto& m : prompts[i]->messages) row["messages"].push_back({{"role", m.role}, {"content", m.content}});
        }
        out.prompts.push_back(std::move(row));
        out.graded.push_back(std::move(g));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- reporting

double accuracy(std::span<const GradedAnswer> graded, const std::function<bool(const GradedAnswer&)>& keep) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (const auto& g : graded) {
    if (!keep(g)) continue;
    ++total;
    if (g.correct) ++correct;
  }
  if (total == 0) throw Error(ErrorCode::EmptySubset, "no graded answers in subset");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double relative_improvement(double new_accuracy, double base_accuracy) {
  if (!(base_accuracy > 0.0)) throw Error(ErrorCode::ZeroBaseline, "baseline accuracy must be positive");
  return (new_accuracy - base_accuracy) / base_accuracy * 100.0;
}

long long rounded_percent(double percent) { return std::llround(percent); }

std::optional<BestMode> best_of_modes(const std::map<TraceMode, double>& per_mode) {
  std::optional<BestMode> best;
  for (auto mode : kTraceModes) {
    auto it = per_mode.find(mode);
    if (it == per_mode.end()) continue;
    if (!best || it->second > best->accuracy) best = BestMode{mode, it->second};
  }
  return best;
}

std::string_view to_string(Subset s) noexcept { return s == Subset::all ? "all" : "no_math"; }

namespace {

std::vector<std::string> canonical_labels() {
  std::vector<std::string> labels = {"baseline", "rag_chunks"};
  for (auto mode : kTraceModes) labels.push_back("rag_traces_" + std::string(to_string(mode)));
  return labels;
}

std::optional<double> improvement_or_none(double new_accuracy, double base_accuracy) {
  if (!(base_accuracy > 0.0)) return std::nullopt;
  return relative_improvement(new_accuracy, base_accuracy);
}

EvalReport fold_report(std::string dataset, std::string model, Subset subset, const std::vector<const GradedAnswer*>& rows) {
  EvalReport r;
  r.dataset = std::move(dataset);
  r.model_id = std::move(model);
  r.subset = subset;
  std::set<std::string> questions;
  for (const auto* g : rows) {
    questions.insert(g->question_id);
    auto& score = r.conditions[g->condition];
    ++score.total;
    if (g->correct) ++score.correct;
  }
  r.question_count = questions.size();
  for (auto& [label, score] : r.conditions) {
    score.accuracy = static_cast<double>(score.correct) / static_cast<double>(score.total);
  }

  std::map<TraceMode, double> per_mode;
  for (auto mode : kTraceModes) {
    auto it = r.conditions.find("rag_traces_" + std::string(to_string(mode)));
    if (it != r.conditions.end()) per_mode[mode] = it->second.accuracy;
  }
  r.best_trace = best_of_modes(per_mode);
  const auto base = r.conditions.find("baseline");
  const auto chunks = r.conditions.find("rag_chunks");
  if (r.best_trace && base != r.conditions.end()) {
    r.traces_vs_baseline_pct = improvement_or_none(r.best_trace->accuracy, base->second.accuracy);
  }
  if (r.best_trace && chunks != r.conditions.end()) {
    r.traces_vs_chunks_pct = improvement_or_none(r.best_trace->accuracy, chunks->second.accuracy);
  }
  if (chunks != r.conditions.end() && base != r.conditions.end()) {
    r.chunks_vs_baseline_pct = improvement_or_none(chunks->second.accuracy, base->second.accuracy);
  }
  return r;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_rounded(const std::optional<double>& v) { return v ? json(rounded_percent(*v)) : json(nullptr); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<EvalReport> build_reports(std::span<const GradedAnswer> graded,
                                      const std::map<std::string, std::optional<bool>>& math_labels,
                                      const std::vector<std::string>& classified_datasets) {
  std::map<std::pair<std::string, std::string>, std::vector<const GradedAnswer*>> groups;
  for (const auto& g : graded) groups[{g.dataset, g.model_id}].push_back(&g);

  std::vector<EvalReport> reports;
  for (const auto& [key, rows] : groups) {
    reports.push_back(fold_report(key.first, key.second, Subset::all, rows));
    if (std::find(classified_datasets.begin(), classified_datasets.end(), key.first) == classified_datasets.end()) continue;
    std::vector<const GradedAnswer*> no_math;
    for (const auto* g : rows) {
      auto it = math_labels.find(g->question_id);
      if (it != math_labels.end() && it->second == false) no_math.push_back(g);
    }
    if (!no_math.empty()) reports.push_back(fold_report(key.first, key.second, Subset::no_math, no_math));
  }
  return reports;
}

json to_json(const EvalReport& r) {
  json acc = json::object();
  json correct = json::object();
  json totals = json::object();
  for (const auto& [label, score] : r.conditions) {
    acc[label] = score.accuracy;
    correct[label] = score.correct;
    totals[label] = score.total;
  }
  json best = nullptr;
  if (r.best_trace) best = {{"mode", std::string(to_string(r.best_trace->mode))}, {"accuracy", r.best_trace->accuracy}};
  return {{"dataset", r.dataset},
          {"model_id", r.model_id},
          {"subset", std::string(to_string(r.subset))},
          {"question_count", r.question_count},
          {"accuracy", acc},
          {"correct", correct},
          {"total", totals},
          {"best_trace", best},
          {"improvement_pct",
           {{"traces_vs_baseline", optional_number(r.traces_vs_baseline_pct)},
            {"traces_vs_chunks", optional_number(r.traces_vs_chunks_pct)},
            {"chunks_vs_baseline", optional_number(r.chunks_vs_baseline_pct)}}},
          {"improvement_pct_rounded",
           {{"traces_vs_baseline", optional_rounded(r.traces_vs_baseline_pct)},
            {"traces_vs_chunks", optional_rounded(r.traces_vs_chunks_pct)},
            {"chunks_vs_baseline", optional_rounded(r.chunks_vs_baseline_pct)}}}};
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  const auto labels = canonical_labels();
  std::string out = "dataset,subset,model,questions";
  for (const auto& l : labels) out += "," + l;
  out += ",rag_traces_best,best_mode\n";
  for (const auto& r : reports) {
    out += r.dataset + "," + std::string(to_string(r.subset)) + "," + r.model_id + "," + std::to_string(r.question_count);
    for (const auto& l : labels) {
      auto it = r.conditions.find(l);
      out += ",";
      if (it != r.conditions.end()) out += fixed(it->second.accuracy, 4);
    }
    out += ",";
    if (r.best_trace) out += fixed(r.best_trace->accuracy, 4) + "," + std::string(to_string(r.best_trace->mode));
    else out += ",";
    out += "\n";
  }
  return out;
}

std::string improvement_csv(const std::vector<EvalReport>& reports, std::string_view dataset, Subset subset) {
  std::string out = "model,best_mode,rt_vs_baseline_pct,rt_vs_chunks_pct\n";
  auto cell = [](const std::optional<double>& v) { return v ? std::to_string(rounded_percent(*v)) : std::string(); };
  for (const auto& r : reports) {
    if (r.dataset != dataset || r.subset != subset) continue;
    out += r.model_id + "," + (r.best_trace ? std::string(to_string(r.best_trace->mode)) : std::string()) + "," +
           cell(r.traces_vs_baseline_pct) + "," + cell(r.traces_vs_chunks_pct) + "\n";
  }
  return out;
}

}  // namespace mcqforge

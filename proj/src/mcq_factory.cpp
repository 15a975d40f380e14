#include "mcqforge/mcq_factory.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "mcqforge/prompts.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

char option_letter(std::size_t index) { return static_cast<char>('A' + index); }

std::optional<std::size_t> letter_index(char letter, std::size_t count) {
  if (letter < 'A' || letter > 'Z') return std::nullopt;
  const auto idx = static_cast<std::size_t>(letter - 'A');
  if (idx >= count) return std::nullopt;
  return idx;
}

std::string format_options(const std::vector<std::string>& options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out.push_back('\n');
    out.push_back(option_letter(i));
    out += ") ";
    out += options[i];
  }
  return out;
}

json to_json(const MCQRecord& mcq) {
  json options = json::object();
  for (std::size_t i = 0; i < mcq.options.size(); ++i) options[std::string(1, option_letter(i))] = mcq.options[i];
  json j{{"question_id", mcq.question_id},
         {"question", mcq.question},
         {"options", options},
         {"answer", std::string(1, mcq.answer)},
         {"source_text", mcq.source_text},
         {"qtype", mcq.qtype},
         {"provenance", {{"chunk_id", mcq.provenance.chunk_id}, {"file_path", mcq.provenance.file_path}}},
         {"relevance_check", nullptr},
         {"quality", nullptr}};
  if (mcq.relevance_check) {
    j["relevance_check"] = {{"passed", mcq.relevance_check->passed}, {"reasoning", mcq.relevance_check->reasoning}};
  }
  if (mcq.quality) j["quality"] = {{"score", mcq.quality->score}, {"reasoning", mcq.quality->reasoning}};
  return j;
}

MCQRecord mcq_from_json(const json& j) {
  MCQRecord m;
  m.question_id = j.at("question_id").get<std::string>();
  m.question = j.at("question").get<std::string>();
  const auto& opts = j.at("options");
  if (opts.is_array()) {
    m.options = opts.get<std::vector<std::string>>();
  } else {
    for (std::size_t i = 0; opts.contains(std::string(1, option_letter(i))); ++i) {
      m.options.push_back(opts.at(std::string(1, option_letter(i))).get<std::string>());
    }
  }
  const auto answer = j.at("answer").get<std::string>();
  if (answer.size() != 1 || !letter_index(answer[0], m.options.size())) {
    throw Error(ErrorCode::AnswerNotInOptions, "answer '" + answer + "' for " + m.question_id);
  }
  m.answer = answer[0];
  m.source_text = j.value("source_text", std::string());
  m.qtype = j.value("qtype", std::string("multiple-choice"));
  if (j.contains("provenance") && j["provenance"].is_object()) {
    m.provenance = {j["provenance"].value("chunk_id", std::string()), j["provenance"].value("file_path", std::string())};
  }
  if (j.contains("relevance_check") && j["relevance_check"].is_object()) {
    m.relevance_check = RelevanceCheck{j["relevance_check"].at("passed").get<bool>(),
                                       j["relevance_check"].value("reasoning", std::string())};
  }
  if (j.contains("quality") && j["quality"].is_object()) {
    m.quality = Quality{j["quality"].at("score").get<int>(), j["quality"].value("reasoning", std::string())};
  }
  return m;
}

namespace {

ChatRequest from_template(const PromptTemplate& t, std::string user, std::string model, double temperature,
                          std::int64_t max_tokens, std::string request_id) {
  ChatRequest req;
  req.model = std::move(model);
  if (!t.system.empty()) req.messages.push_back({"system", t.system});
  req.messages.push_back({"user", std::move(user)});
  req.temperature = temperature;
  req.max_tokens = max_tokens;
  req.request_id = std::move(request_id);
  return req;
}

// Drops a label the model may have repeated inside the option text: "B) x", "(B) x", "B. x", "B: x".
std::string strip_label(std::string_view text, std::size_t index) {
  std::string_view t = trim(text);
  const char letter = option_letter(index);
  std::string_view rest;
  if (t.size() >= 3 && t[0] == '(' && t[1] == letter && t[2] == ')') rest = t.substr(3);
  else if (t.size() >= 2 && t[0] == letter && (t[1] == ')' || t[1] == '.' || t[1] == ':')) rest = t.substr(2);
  else return std::string(t);
  if (rest.empty() || !std::isspace(static_cast<unsigned char>(rest[0]))) return std::string(t);
  return std::string(trim(rest));
}

}  // namespace

ChatRequest build_generation_request(const Chunk& chunk, const GenerationConfig& cfg) {
  const auto& t = prompt_template("mcq_generate");
  return from_template(t, render_template(t.user, {{"chunk", chunk.text}}), cfg.model, cfg.temperature, cfg.max_tokens,
                       "genq:" + chunk.chunk_id);
}

std::vector<std::string> validate_self_containment(std::string_view question) {
  static constexpr std::array<std::string_view, 8> kBanned = {
      "according to the text", "the passage", "this study", "the authors",
      "in the excerpt", "mentioned above", "the excerpt", "this paper"};
  const std::string folded = fold_whitespace_lower(question);
  std::vector<std::string> hits;
  for (auto phrase : kBanned) {
    if (folded.find(phrase) != std::string::npos) hits.emplace_back(phrase);
  }
  return hits;
}

void shuffle_options(MCQRecord& mcq) {
  const std::string correct = mcq.correct_option();
  SplitMix64 rng(seed_from_hex(mcq.question_id));
  for (std::size_t i = mcq.options.size(); i > 1; --i) {
    std::swap(mcq.options[i - 1], mcq.options[rng.below(i)]);
  }
  for (std::size_t i = 0; i < mcq.options.size(); ++i) {
    if (mcq.options[i] == correct) {
      mcq.answer = option_letter(i);
      break;
    }
  }
}

MCQRecord parse_generated_mcq(std::string_view reply, const Chunk& chunk, const std::string& file_path) {
  auto obj = extract_json_object(reply);
  if (!obj) throw Error(ErrorCode::ParseFailure, "no JSON object in generation reply");
  if (!obj->contains("question") || !(*obj)["question"].is_string()) throw Error(ErrorCode::ParseFailure, "missing question");
  if (!obj->contains("options")) throw Error(ErrorCode::ParseFailure, "missing options");
  if (!obj->contains("answer") || !(*obj)["answer"].is_string()) throw Error(ErrorCode::ParseFailure, "missing answer");

  MCQRecord m;
  m.question = std::string(trim((*obj)["question"].get<std::string>()));
  if (m.question.empty()) throw Error(ErrorCode::ParseFailure, "empty question");

  const auto& opts = (*obj)["options"];
  std::vector<std::string> raw;
  if (opts.is_array()) {
    for (const auto& o : opts) {
      if (!o.is_string()) throw Error(ErrorCode::ParseFailure, "non-string option");
      raw.push_back(o.get<std::string>());
    }
  } else if (opts.is_object()) {
    for (auto it = opts.begin(); it != opts.end(); ++it) {
      if (it.key().size() != 1 || !letter_index(it.key()[0], 26) || !it.value().is_string()) {
        throw Error(ErrorCode::ParseFailure, "bad option key: " + it.key());
      }
      const auto idx = *letter_index(it.key()[0], 26);
      if (raw.size() <= idx) raw.resize(idx + 1);
      raw[idx] = it.value().get<std::string>();
    }
  } else {
    throw Error(ErrorCode::ParseFailure, "options must be a list or an object");
  }
  if (raw.size() != kOptionCount) {
    throw Error(ErrorCode::OptionCountMismatch, "expected 7 options, got " + std::to_string(raw.size()));
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    m.options.push_back(strip_label(raw[i], i));
    if (m.options.back().empty()) throw Error(ErrorCode::ParseFailure, "empty option " + std::string(1, option_letter(i)));
  }
  for (std::size_t i = 0; i < m.options.size(); ++i) {
    for (std::size_t j = i + 1; j < m.options.size(); ++j) {
      if (fold_whitespace_lower(m.options[i]) == fold_whitespace_lower(m.options[j])) {
        throw Error(ErrorCode::ParseFailure, "duplicate options");
      }
    }
  }

  std::string answer(trim((*obj)["answer"].get<std::string>()));
  if (answer.size() == 3 && answer[0] == '(' && answer[2] == ')') answer = answer.substr(1, 1);
  if (answer.size() == 2 && (answer[1] == ')' || answer[1] == '.')) answer = answer.substr(0, 1);
  if (answer.size() != 1 || !letter_index(static_cast<char>(std::toupper(static_cast<unsigned char>(answer[0]))), kOptionCount)) {
    throw Error(ErrorCode::AnswerNotInOptions, "answer '" + answer + "' is not one of A-G");
  }
  m.answer = static_cast<char>(std::toupper(static_cast<unsigned char>(answer[0])));

  if (auto hits = validate_self_containment(m.question); !hits.empty()) {
    throw Error(ErrorCode::SelfContainmentViolation, "question references its source: \"" + hits.front() + "\"");
  }

  m.source_text = chunk.text;
  m.provenance = {chunk.chunk_id, file_path};
  m.question_id = digest_parts({chunk.chunk_id, m.question});
  shuffle_options(m);
  return m;
}

MCQRecord generate_mcq(const Chunk& chunk, const std::string& file_path, LlmGateway& gateway, const GenerationConfig& cfg) {
  if (is_blank(chunk.text)) throw Error(ErrorCode::InvalidArgument, "empty chunk " + chunk.chunk_id);
  const auto resp = gateway.complete(build_generation_request(chunk, cfg));
  return parse_generated_mcq(resp.content, chunk, file_path);
}

ChatRequest build_score_request(const MCQRecord& candidate, const ScoringConfig& cfg) {
  const auto& t = prompt_template("mcq_score");
  const std::string options = format_options(candidate.options);
  const std::string answer(1, candidate.answer);
  return from_template(t,
                       render_template(t.user, {{"question", candidate.question},
                                                {"options", options},
                                                {"answer", answer},
                                                {"chunk", candidate.source_text}}),
                       cfg.model, cfg.temperature, cfg.max_tokens, "score:" + candidate.question_id);
}

ScoreResult parse_score(std::string_view reply) {
  auto obj = extract_json_object(reply);
  if (!obj) throw Error(ErrorCode::ScoreParseFailure, "no JSON object in scoring reply");
  if (!obj->contains("score")) throw Error(ErrorCode::ScoreParseFailure, "missing score");
  const auto& s = (*obj)["score"];
  long long score = 0;
  if (s.is_number_integer()) {
    score = s.get<long long>();
  } else if (s.is_number_float() && std::floor(s.get<double>()) == s.get<double>()) {
    score = static_cast<long long>(s.get<double>());
  } else {
    throw Error(ErrorCode::ScoreParseFailure, "score is not an integer: " + s.dump());
  }
  if (score < 1 || score > 10) throw Error(ErrorCode::ScoreParseFailure, "score out of range: " + std::to_string(score));

  ScoreResult out;
  out.quality.score = static_cast<int>(score);
  if (obj->contains("reasoning") && (*obj)["reasoning"].is_string()) out.quality.reasoning = (*obj)["reasoning"].get<std::string>();

  out.relevance = {false, "relevance not reported"};
  if (obj->contains("relevance") && (*obj)["relevance"].is_object()) {
    const auto& r = (*obj)["relevance"];
    if (r.contains("passed") && r["passed"].is_boolean()) {
      out.relevance.passed = r["passed"].get<bool>();
      out.relevance.reasoning = r.value("reasoning", std::string());
    }
  } else if (obj->contains("relevant") && (*obj)["relevant"].is_boolean()) {
    out.relevance.passed = (*obj)["relevant"].get<bool>();
    out.relevance.reasoning = obj->value("relevance_reasoning", std::string());
  }
  return out;
}

ScoreResult score_mcq(const MCQRecord& candidate, LlmGateway& gateway, const ScoringConfig& cfg) {
  const auto resp = gateway.complete(build_score_request(candidate, cfg));
  return parse_score(resp.content);
}

FilterResult filter_mcqs(const std::vector<MCQRecord>& candidates, int threshold) {
  FilterResult out;
  for (const auto& c : candidates) {
    if (!c.quality) throw Error(ErrorCode::InvalidArgument, "unscored candidate " + c.question_id);
    (c.quality->score >= threshold ? out.accepted : out.rejected).push_back(c);
  }
  return out;
}

}  // namespace mcqforge

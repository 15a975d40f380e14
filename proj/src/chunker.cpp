#include "mcqforge/chunker.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>

#include "mcqforge/text.hpp"

namespace mcqforge {

json to_json(const Chunk& chunk) {
  return json{{"chunk_id", chunk.chunk_id},       {"doc_id", chunk.doc_id},
              {"ordinal", chunk.ordinal},         {"text", chunk.text},
              {"token_count", chunk.token_count}, {"sentence_span", {chunk.sentence_span.start, chunk.sentence_span.end}}};
}

Chunk chunk_from_json(const json& j) {
  Chunk c;
  c.chunk_id = j.at("chunk_id").get<std::string>();
  c.doc_id = j.at("doc_id").get<std::string>();
  c.ordinal = j.at("ordinal").get<std::size_t>();
  c.text = j.at("text").get<std::string>();
  c.token_count = j.at("token_count").get<std::int64_t>();
  c.sentence_span = {j.at("sentence_span").at(0).get<std::size_t>(), j.at("sentence_span").at(1).get<std::size_t>()};
  return c;
}

void ChunkConfig::validate() const {
  if (min_tokens <= 0 || max_tokens <= min_tokens) throw Error(ErrorCode::InvalidConfig, "require 0 < min_tokens < max_tokens");
  if (window == 0) throw Error(ErrorCode::InvalidConfig, "window must be positive");
  if (!(breakpoint_percentile >= 0.0 && breakpoint_percentile <= 100.0)) {
    throw Error(ErrorCode::InvalidConfig, "breakpoint_percentile must lie in [0, 100]");
  }
}

namespace {

constexpr std::array<std::string_view, 34> kAbbreviations = {
    "fig.", "figs.", "al.", "vs.", "e.g.", "i.e.", "cf.", "dr.", "mr.", "mrs.", "ms.", "prof.",
    "eq.", "eqs.", "ref.", "refs.", "no.", "nos.", "approx.", "ca.", "resp.", "sec.", "tab.", "vol.",
    "pp.", "ch.", "st.", "jr.", "sr.", "inc.", "ltd.", "co.", "dept.", "suppl."};

bool space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool closing(char c) { return c == '.' || c == '!' || c == '?' || c == '"' || c == '\'' || c == ')' || c == ']'; }

bool is_abbreviation(std::string_view text, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !space(text[b - 1])) --b;
  std::string word = to_lower_ascii(text.substr(b, dot - b + 1));
  while (!word.empty() && (word.front() == '(' || word.front() == '[' || word.front() == '"')) word.erase(word.begin());
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

struct Range {
  std::size_t begin;
  std::size_t end;
};

std::vector<Range> split_raw(std::string_view text) {
  std::vector<Range> out;
  const std::size_t n = text.size();
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < n) {
    const char c = text[i];
    if (c == '\n') {
      std::size_t j = i + 1;
      while (j < n && (text[j] == ' ' || text[j] == '\t')) ++j;
      if (j < n && text[j] == '\n') {
        out.push_back({start, i});
        start = i;
        i = j;
        continue;
      }
    }
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      while (j < n && closing(text[j])) ++j;
      if (j >= n) break;
      if (!space(text[j])) {
        i = j;
        continue;
      }
      if (c == '.' && is_abbreviation(text, i)) {
        i = j;
        continue;
      }
      std::size_t k = j;
      while (k < n && space(text[k])) ++k;
      if (k < n && std::islower(static_cast<unsigned char>(text[k]))) {
        i = j;
        continue;
      }
      out.push_back({start, j});
      start = j;
      i = j;
      continue;
    }
    ++i;
  }
  out.push_back({start, n});

  std::vector<Range> trimmed;
  for (auto r : out) {
    while (r.begin < r.end && space(text[r.begin])) ++r.begin;
    while (r.end > r.begin && space(text[r.end - 1])) --r.end;
    if (r.end > r.begin) trimmed.push_back(r);
  }
  return trimmed;
}

// Byte offset of the code point `count` code points after `from`.
std::size_t advance_codepoints(std::string_view text, std::size_t from, std::size_t count, std::size_t limit) {
  std::size_t i = from;
  while (i < limit && count > 0) {
    ++i;
    while (i < limit && (static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) ++i;
    --count;
  }
  return i;
}

void cap_range(std::string_view text, Range r, std::int64_t cap, std::vector<Range>& out) {
  std::vector<Range> words;
  for (std::size_t i = r.begin; i < r.end;) {
    while (i < r.end && space(text[i])) ++i;
    std::size_t s = i;
    while (i < r.end && !space(text[i])) ++i;
    if (i > s) words.push_back({s, i});
  }

  std::size_t piece_begin = 0;
  std::size_t piece_end = 0;
  std::int64_t piece_tokens = 0;
  auto flush = [&] {
    if (piece_tokens > 0) out.push_back({piece_begin, piece_end});
    piece_tokens = 0;
  };
  for (auto w : words) {
    std::int64_t t = estimate_tokens(text.substr(w.begin, w.end - w.begin));
    if (t > cap) {
      flush();
      const auto step = static_cast<std::size_t>(cap) * 4;
      std::size_t pos = w.begin;
      while (true) {
        std::size_t next = advance_codepoints(text, pos, step, w.end);
        if (next >= w.end) {
          piece_begin = pos;
          piece_end = w.end;
          piece_tokens = estimate_tokens(text.substr(pos, w.end - pos));
          break;
        }
        out.push_back({pos, next});
        pos = next;
      }
      continue;
    }
    if (piece_tokens > 0 && piece_tokens + t > cap) flush();
    if (piece_tokens == 0) piece_begin = w.begin;
    piece_end = w.end;
    piece_tokens += t;
  }
  flush();
}

}  // namespace

std::vector<Sentence> segment_sentences(std::string_view text, std::int64_t max_sentence_tokens) {
  std::vector<Range> ranges = split_raw(text);
  if (max_sentence_tokens > 0) {
    std::vector<Range> capped;
    for (auto r : ranges) {
      if (estimate_tokens(text.substr(r.begin, r.end - r.begin)) > max_sentence_tokens) {
        cap_range(text, r, max_sentence_tokens, capped);
      } else {
        capped.push_back(r);
      }
    }
    ranges = std::move(capped);
  }

  std::vector<Sentence> sentences;
  sentences.reserve(ranges.size());
  for (auto r : ranges) {
    Sentence s;
    s.text = std::string(text.substr(r.begin, r.end - r.begin));
    s.ordinal = sentences.size();
    s.token_count = std::max<std::int64_t>(1, estimate_tokens(s.text));
    s.begin = r.begin;
    s.end = r.end;
    sentences.push_back(std::move(s));
  }
  return sentences;
}

std::vector<double> boundary_similarities(const std::vector<Sentence>& sentences, Embedder& embedder, std::size_t window) {
  const std::size_t n = sentences.size();
  if (n < 2) return {};
  auto join = [&](std::size_t first, std::size_t last) {
    std::string out;
    for (std::size_t i = first; i <= last; ++i) {
      if (i > first) out.push_back(' ');
      out += sentences[i].text;
    }
    return out;
  };

  std::vector<std::pair<std::string, std::string>> pairs;
  std::map<std::string, std::size_t> slot;
  std::vector<std::string> unique;
  auto intern = [&](const std::string& t) {
    if (slot.emplace(t, unique.size()).second) unique.push_back(t);
  };
  for (std::size_t b = 0; b + 1 < n; ++b) {
    const std::size_t left_first = b + 1 >= window ? b + 1 - window : 0;
    const std::size_t right_last = std::min(n - 1, b + window);
    pairs.emplace_back(join(left_first, b), join(b + 1, right_last));
    intern(pairs.back().first);
    intern(pairs.back().second);
  }
  const auto vectors = embed_all(embedder, unique);

  std::vector<double> sims;
  sims.reserve(pairs.size());
  for (const auto& [l, r] : pairs) sims.push_back(cosine(vectors[slot.at(l)], vectors[slot.at(r)]));
  return sims;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  return values[lo] + (values[hi] - values[lo]) * (rank - static_cast<double>(lo));
}

std::vector<bool> select_breakpoints(const std::vector<double>& sims, double breakpoint_percentile) {
  std::vector<bool> breaks(sims.size(), false);
  if (sims.empty()) return breaks;
  const double threshold = percentile(sims, breakpoint_percentile);
  for (std::size_t b = 0; b < sims.size(); ++b) {
    const bool below = sims[b] < threshold;
    const bool falls = b == 0 || sims[b] < sims[b - 1];
    const bool holds = b + 1 == sims.size() || sims[b] <= sims[b + 1];
    breaks[b] = below && falls && holds;
  }
  return breaks;
}

std::vector<Chunk> semantic_chunk(const ParsedDocument& doc, Embedder& embedder, const ChunkConfig& cfg) {
  cfg.validate();
  if (is_blank(doc.text)) throw Error(ErrorCode::EmptyDocument, doc.source_path);

  const auto sentences = segment_sentences(doc.text, cfg.max_tokens - cfg.min_tokens);
  const std::size_t n = sentences.size();

  std::vector<bool> breaks(n > 0 ? n - 1 : 0, false);
  if (n >= cfg.window && n >= 2) {
    breaks = select_breakpoints(boundary_similarities(sentences, embedder, cfg.window), cfg.breakpoint_percentile);
  }

  std::vector<Chunk> chunks;
  auto emit = [&](std::size_t start, std::size_t end, std::int64_t tokens) {
    Chunk c;
    c.doc_id = doc.doc_id;
    c.ordinal = chunks.size();
    c.text = doc.text.substr(sentences[start].begin, sentences[end - 1].end - sentences[start].begin);
    c.token_count = tokens;
    c.sentence_span = {start, end};
    c.chunk_id = digest_parts({c.doc_id, std::to_string(c.ordinal), c.text});
    chunks.push_back(std::move(c));
  };

  std::size_t start = 0;
  std::int64_t tokens = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t t = sentences[i].token_count;
    if (tokens > 0 && tokens + t > cfg.max_tokens) {
      emit(start, i, tokens);
      start = i;
      tokens = 0;
    }
    tokens += t;
    if (i + 1 < n && breaks[i] && tokens >= cfg.min_tokens) {
      emit(start, i + 1, tokens);
      start = i + 1;
      tokens = 0;
    }
  }
  if (start < n) emit(start, n, tokens);
  return chunks;
}

}  // namespace mcqforge

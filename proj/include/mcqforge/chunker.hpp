#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mcqforge/corpus.hpp"
#include "mcqforge/embedding.hpp"

namespace mcqforge {

struct Sentence {
  std::string text;  // trimmed
  std::size_t ordinal = 0;
  std::int64_t token_count = 1;
  // Byte range of `text` inside the source body; the gaps between
  // consecutive sentences are whitespace only.
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct SentenceSpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive

  bool operator==(const SentenceSpan&) const = default;
};

struct Chunk {
  std::string chunk_id;  // digest(doc_id, ordinal, text)
  std::string doc_id;
  std::size_t ordinal = 0;
  std::string text;
  std::int64_t token_count = 0;
  SentenceSpan sentence_span;

  bool operator==(const Chunk&) const = default;
};

json to_json(const Chunk& chunk);
Chunk chunk_from_json(const json& j);

struct ChunkConfig {
  std::int64_t min_tokens = 128;
  std::int64_t max_tokens = 512;
  std::size_t window = 3;
  double breakpoint_percentile = 25.0;

  /// Throws Error(InvalidConfig).
  void validate() const;
};

/// Rule-based sentence splitter: terminal punctuation followed by whitespace,
/// blank lines, an abbreviation stop-list and decimal protection. When
/// `max_sentence_tokens` > 0, longer sentences are split at word boundaries
/// (and over-long words at code-point boundaries) so no piece exceeds it.
std::vector<Sentence> segment_sentences(std::string_view text, std::int64_t max_sentence_tokens = 0);

/// Cosine similarity across each sentence boundary b (between sentence b and
/// b + 1): the `window` sentences ending at b against the `window` sentences
/// starting at b + 1, clipped at the document edges.
std::vector<double> boundary_similarities(const std::vector<Sentence>& sentences, Embedder& embedder, std::size_t window);

/// Linear-interpolated percentile (numpy's default), p in [0, 100].
double percentile(std::vector<double> values, double p);

/// Boundaries whose similarity is below the percentile threshold and is a
/// local minimum of the similarity curve.
std::vector<bool> select_breakpoints(const std::vector<double>& similarities, double breakpoint_percentile);

/// Embedding-driven chunking. Sentences are capped at max_tokens - min_tokens
/// so the greedy assembly can always honor both bounds: every chunk holds at
/// most max_tokens, and every chunk except the last holds at least min_tokens.
std::vector<Chunk> semantic_chunk(const ParsedDocument& doc, Embedder& embedder, const ChunkConfig& cfg);

}  // namespace mcqforge

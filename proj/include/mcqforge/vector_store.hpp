#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcqforge/embedding.hpp"

namespace mcqforge {

enum class EntryKind { chunk, trace_detailed, trace_focused, trace_efficient };

std::string_view to_string(EntryKind kind) noexcept;
EntryKind entry_kind_from_string(std::string_view s);

enum class DType : std::uint8_t { fp16 = 1, fp32 = 2 };

std::size_t dtype_size(DType dtype) noexcept;
DType dtype_from_string(std::string_view s);

struct IndexEntry {
  std::uint64_t row = 0;
  std::string ref_id;
  EntryKind kind = EntryKind::chunk;

  bool operator==(const IndexEntry&) const = default;
};

struct SearchHit {
  std::string ref_id;
  float score = 0.0f;
  std::uint64_t row = 0;
};

/// On-disk header of a `.mcqv` file: 28 bytes, little-endian.
///   magic "MCQV" | u32 version | u32 dim | u64 count | u8 dtype | 7 zero bytes
inline constexpr std::size_t kIndexHeaderSize = 28;
inline constexpr std::uint32_t kIndexVersion = 1;

/// Exact flat inner-product index over normalized vectors.
///
/// Vectors are normalized on insert and stored as fp16 (or fp32); search
/// dequantizes in blocks and accumulates in fp32. Results are ordered by
/// score descending, then row ascending. A store holds a single entry kind;
/// it is fixed at construction or by the first insert.
///
/// Not synchronized: build single-threaded, then share as const.
class VectorStore {
 public:
  explicit VectorStore(std::size_t dim, DType dtype = DType::fp16, std::optional<EntryKind> kind = std::nullopt);

  /// Returns the new row. Throws DimMismatch, DuplicateRef, KindMismatch, ZeroVector.
  std::uint64_t add(const EmbeddingVector& v, std::string ref_id, EntryKind kind);

  /// Throws EmptyIndex, DimMismatch, InvalidArgument (k == 0).
  std::vector<SearchHit> search_topk(const EmbeddingVector& query, std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static VectorStore load(const std::filesystem::path& path, std::optional<EntryKind> expected_kind = std::nullopt);

  /// `<dir>/<name>.mcqv` -> `<dir>/<name>.meta.jsonl`
  static std::filesystem::path meta_path(const std::filesystem::path& index_path);

  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t size() const noexcept { return entries_.size(); }
  DType dtype() const noexcept { return dtype_; }
  std::optional<EntryKind> kind() const noexcept { return kind_; }
  const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
  std::size_t payload_bytes() const noexcept { return entries_.size() * dim_ * dtype_size(dtype_); }
  std::optional<std::uint64_t> find(const std::string& ref_id) const;

  /// Stored (dequantized) vector for a row.
  EmbeddingVector vector(std::uint64_t row) const;

 private:
  using RowBlock = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowBlock rows_as_float(std::uint64_t first, std::uint64_t count) const;

  std::size_t dim_;
  DType dtype_;
  std::optional<EntryKind> kind_;
  std::vector<std::uint16_t> half_payload_;
  std::vector<float> float_payload_;
  std::vector<IndexEntry> entries_;
  std::unordered_map<std::string, std::uint64_t> row_of_;
};

}  // namespace mcqforge

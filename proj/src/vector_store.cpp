#include "mcqforge/vector_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mcqforge/fp16.hpp"
#include "mcqforge/json_io.hpp"

namespace mcqforge {

namespace fs = std::filesystem;

std::string_view to_string(EntryKind kind) noexcept {
  switch (kind) {
    case EntryKind::chunk: return "chunk";
    case EntryKind::trace_detailed: return "trace_detailed";
    case EntryKind::trace_focused: return "trace_focused";
    case EntryKind::trace_efficient: return "trace_efficient";
  }
  return "chunk";
}

EntryKind entry_kind_from_string(std::string_view s) {
  if (s == "chunk") return EntryKind::chunk;
  if (s == "trace_detailed") return EntryKind::trace_detailed;
  if (s == "trace_focused") return EntryKind::trace_focused;
  if (s == "trace_efficient") return EntryKind::trace_efficient;
  throw Error(ErrorCode::InvalidArgument, "unknown entry kind: " + std::string(s));
}

std::size_t dtype_size(DType dtype) noexcept { return dtype == DType::fp16 ? 2 : 4; }

DType dtype_from_string(std::string_view s) {
  if (s == "fp16") return DType::fp16;
  if (s == "fp32") return DType::fp32;
  throw Error(ErrorCode::InvalidArgument, "unknown dtype: " + std::string(s));
}

VectorStore::VectorStore(std::size_t dim, DType dtype, std::optional<EntryKind> kind)
    : dim_(dim), dtype_(dtype), kind_(kind) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "index dim must be positive");
}

std::uint64_t VectorStore::add(const EmbeddingVector& v, std::string ref_id, EntryKind kind) {
  if (static_cast<std::size_t>(v.size()) != dim_) {
    throw Error(ErrorCode::DimMismatch, "vector dim " + std::to_string(v.size()) + " != index dim " + std::to_string(dim_));
  }
  if (kind_ && *kind_ != kind) {
    throw Error(ErrorCode::KindMismatch, "index holds " + std::string(to_string(*kind_)) + ", got " + std::string(to_string(kind)));
  }
  if (row_of_.contains(ref_id)) throw Error(ErrorCode::DuplicateRef, ref_id);

  const EmbeddingVector unit = normalize(v);
  if (dtype_ == DType::fp16) {
    for (Eigen::Index i = 0; i < unit.size(); ++i) half_payload_.push_back(float_to_half(unit(i)));
  } else {
    float_payload_.insert(float_payload_.end(), unit.data(), unit.data() + unit.size());
  }
  kind_ = kind;
  const std::uint64_t row = entries_.size();
  row_of_.emplace(ref_id, row);
  entries_.push_back({row, std::move(ref_id), kind});
  return row;
}

std::optional<std::uint64_t> VectorStore::find(const std::string& ref_id) const {
  auto it = row_of_.find(ref_id);
  if (it == row_of_.end()) return std::nullopt;
  return it->second;
}

VectorStore::RowBlock VectorStore::rows_as_float(std::uint64_t first, std::uint64_t count) const {
  const auto cols = static_cast<Eigen::Index>(dim_);
  if (dtype_ == DType::fp32) {
    return Eigen::Map<const RowBlock>(float_payload_.data() + first * dim_, static_cast<Eigen::Index>(count), cols);
  }
  RowBlock block(static_cast<Eigen::Index>(count), cols);
  const std::uint16_t* src = half_payload_.data() + first * dim_;
  float* dst = block.data();
  for (std::size_t i = 0; i < count * dim_; ++i) dst[i] = half_to_float(src[i]);
  return block;
}

EmbeddingVector VectorStore::vector(std::uint64_t row) const {
  if (row >= size()) throw Error(ErrorCode::InvalidArgument, "row out of range");
  return rows_as_float(row, 1).row(0).transpose();
}

std::vector<SearchHit> VectorStore::search_topk(const EmbeddingVector& query, std::size_t k) const {
  if (entries_.empty()) throw Error(ErrorCode::EmptyIndex, "search on an empty index");
  if (static_cast<std::size_t>(query.size()) != dim_) {
    throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(query.size()) + " != index dim " + std::to_string(dim_));
  }
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive");

  const EmbeddingVector q = normalize(query);
  const std::uint64_t n = size();
  Eigen::VectorXf scores(static_cast<Eigen::Index>(n));
  constexpr std::uint64_t kBlockRows = 4096;
  for (std::uint64_t first = 0; first < n; first += kBlockRows) {
    const std::uint64_t count = std::min(kBlockRows, n - first);
    scores.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)).noalias() =
        rows_as_float(first, count) * q;
  }

  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  const std::size_t take = std::min<std::size_t>(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::uint64_t a, std::uint64_t b) {
                      const float sa = scores(static_cast<Eigen::Index>(a));
                      const float sb = scores(static_cast<Eigen::Index>(b));
                      return sa != sb ? sa > sb : a < b;
                    });

  std::vector<SearchHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto row = order[i];
    hits.push_back({entries_[row].ref_id, scores(static_cast<Eigen::Index>(row)), row});
  }
  return hits;
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

fs::path VectorStore::meta_path(const fs::path& index_path) {
  fs::path meta = index_path;
  meta.replace_extension(".meta.jsonl");
  return meta;
}

void VectorStore::save(const fs::path& path) const {
  std::string bytes;
  bytes.reserve(kIndexHeaderSize + payload_bytes());
  bytes.append("MCQV");
  put_le<std::uint32_t>(bytes, kIndexVersion);
  put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(dim_));
  put_le<std::uint64_t>(bytes, size());
  bytes.push_back(static_cast<char>(dtype_));
  bytes.append(7, '\0');
  if (dtype_ == DType::fp16) {
    for (auto h : half_payload_) put_le<std::uint16_t>(bytes, h);
  } else {
    for (float f : float_payload_) put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(f));
  }

  std::string meta;
  for (const auto& e : entries_) {
    meta += json{{"row", e.row}, {"ref_id", e.ref_id}, {"kind", to_string(e.kind)}}.dump();
    meta.push_back('\n');
  }
  write_file_atomic(path, bytes);
  write_file_atomic(meta_path(path), meta);
}

VectorStore VectorStore::load(const fs::path& path, std::optional<EntryKind> expected_kind) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kIndexHeaderSize) throw Error(ErrorCode::TruncatedPayload, path.string() + ": header truncated");
  if (bytes.compare(0, 4, "MCQV") != 0) throw Error(ErrorCode::BadMagic, path.string());
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kIndexVersion) throw Error(ErrorCode::VersionUnsupported, path.string() + ": version " + std::to_string(version));
  const auto dim = get_le<std::uint32_t>(bytes, 8);
  const auto count = get_le<std::uint64_t>(bytes, 12);
  const auto dtype_byte = static_cast<std::uint8_t>(bytes[20]);
  if (dtype_byte != 1 && dtype_byte != 2) throw Error(ErrorCode::VersionUnsupported, path.string() + ": unknown dtype");
  const auto dtype = static_cast<DType>(dtype_byte);

  const std::uint64_t expected = kIndexHeaderSize + count * dim * dtype_size(dtype);
  if (bytes.size() < expected) throw Error(ErrorCode::TruncatedPayload, path.string() + ": payload shorter than header count");
  if (bytes.size() > expected) throw Error(ErrorCode::TruncatedPayload, path.string() + ": trailing bytes after payload");

  std::vector<IndexEntry> entries;
  const fs::path meta = meta_path(path);
  if (!fs::exists(meta)) throw Error(ErrorCode::MetaRowMismatch, meta.string() + " is missing");
  for (const auto& row : read_jsonl_strict(meta)) {
    IndexEntry e{row.at("row").get<std::uint64_t>(), row.at("ref_id").get<std::string>(),
                 entry_kind_from_string(row.at("kind").get<std::string>())};
    if (e.row != entries.size()) throw Error(ErrorCode::MetaRowMismatch, meta.string() + ": rows not dense");
    entries.push_back(std::move(e));
  }
  if (entries.size() != count) {
    throw Error(ErrorCode::MetaRowMismatch,
                "header count " + std::to_string(count) + " vs " + std::to_string(entries.size()) + " meta rows");
  }

  VectorStore store(dim, dtype, expected_kind);
  for (const auto& e : entries) {
    if (store.kind_ && *store.kind_ != e.kind) throw Error(ErrorCode::KindMismatch, meta.string() + ": mixed entry kinds");
    store.kind_ = e.kind;
    if (!store.row_of_.emplace(e.ref_id, e.row).second) throw Error(ErrorCode::DuplicateRef, e.ref_id);
  }
  store.entries_ = std::move(entries);
  const std::size_t values = count * dim;
  if (dtype == DType::fp16) {
    store.half_payload_.resize(values);
    for (std::size_t i = 0; i < values; ++i) store.half_payload_[i] = get_le<std::uint16_t>(bytes, kIndexHeaderSize + 2 * i);
  } else {
    store.float_payload_.resize(values);
    for (std::size_t i = 0; i < values; ++i) {
      store.float_payload_[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, kIndexHeaderSize + 4 * i));
    }
  }
  return store;
}

}  // namespace mcqforge

#pragma once

#include "saetrack/common.hpp"

#include <nlohmann/json.hpp>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace saetrack {

/// Identity of one activation: token `token_pos` of corpus context `context_id`.
struct DatapointId {
  std::uint64_t context_id = 0;
  std::uint32_t token_pos = 0;
  std::uint32_t token_id = 0;

  // Ordering and equality use the (context, position) key only; token_id is payload.
  friend bool operator==(const DatapointId& a, const DatapointId& b) {
    return a.context_id == b.context_id && a.token_pos == b.token_pos;
  }
  friend std::strong_ordering operator<=>(const DatapointId& a, const DatapointId& b) {
    if (auto c = a.context_id <=> b.context_id; c != 0) return c;
    return a.token_pos <=> b.token_pos;
  }
};

std::string to_string(const DatapointId& id);

struct ActivationRecord {
  DatapointId id;
  Vector<float> vector;
};

struct ShardHeader {
  std::string model_tag;
  std::uint32_t layer = 0;
  std::uint64_t checkpoint_step = 0;
  std::uint32_t dim = 0;
  // Free-form metadata persisted as JSON; model_tag and context_length are mirrored into it.
  nlohmann::json metadata = nlohmann::json::object();
};

/// All activation vectors for one (model, layer, checkpoint) triple.
///
/// Records are kept sorted by (context_id, token_pos) so lookups are binary searches and the
/// on-disk order is canonical. Values are stored row-per-record in single precision, which is
/// exactly what the file holds.
class ActivationShard {
 public:
  ActivationShard() = default;
  /// Takes ownership of ids/values and sorts them canonically. `values` must be ids.size() x dim.
  ActivationShard(ShardHeader header, std::vector<DatapointId> ids, RowMatrix<float> values);

  const ShardHeader& header() const { return header_; }
  const std::string& model_tag() const { return header_.model_tag; }
  std::uint32_t layer() const { return header_.layer; }
  std::uint64_t checkpoint_step() const { return header_.checkpoint_step; }
  std::size_t dim() const { return header_.dim; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  std::span<const DatapointId> ids() const { return ids_; }
  const RowMatrix<float>& values() const { return values_; }
  auto row(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)); }
  ActivationRecord record(std::size_t i) const;

  /// Index of `id` or -1.
  std::ptrdiff_t find(const DatapointId& id) const;

  /// Rows `indices` as a D x n double matrix (one column per record).
  MatrixXd gather(std::span<const std::size_t> indices) const;
  /// Whole shard as D x N double matrix.
  MatrixXd as_columns() const;

 private:
  ShardHeader header_;
  std::vector<DatapointId> ids_;
  RowMatrix<float> values_;
};

/// Euclidean distance between two stored activation vectors, evaluated in double precision.
/// Shared by the synthetic generator's displacement clamp and the continuity diagnostic.
inline double activation_displacement(const Vector<float>& a, const Vector<float>& b) {
  return (a.cast<double>() - b.cast<double>()).norm();
}

void persist_shard(const ActivationShard& shard, const std::filesystem::path& path);
ActivationShard read_shard(const std::filesystem::path& path);

/// m distinct records, uniform without replacement. Deterministic in (seed, checkpoint_step).
std::vector<ActivationRecord> sample_random(const ActivationShard& shard, std::size_t m,
                                            std::uint64_t seed);
/// Index form of sample_random (same draw).
std::vector<std::size_t> sample_random_indices(const ActivationShard& shard, std::size_t m,
                                               std::uint64_t seed);

std::vector<ActivationRecord> lookup_datapoints(const ActivationShard& shard,
                                                std::span<const DatapointId> ids);
/// Index form of lookup_datapoints; throws LookupError naming the first missing id.
std::vector<std::size_t> lookup_indices(const ActivationShard& shard,
                                        std::span<const DatapointId> ids);

/// Epoch-wise mini-batches over a shard. Batches are returned as D x B double matrices.
class BatchStream {
 public:
  BatchStream(const ActivationShard& shard, std::size_t batch_size, std::uint64_t seed,
              bool shuffle);

  /// Record-index batches of epoch `epoch`; the last batch may be short.
  std::vector<std::vector<std::size_t>> epoch_batches(std::uint64_t epoch) const;

  /// Next batch, wrapping into the next epoch when the current one is exhausted.
  MatrixXd next();
  std::uint64_t epoch() const { return epoch_; }

 private:
  const ActivationShard* shard_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::vector<std::size_t>> current_;
};

}  // namespace saetrack

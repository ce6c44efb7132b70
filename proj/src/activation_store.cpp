#include "saetrack/activation_store.hpp"

#include "binary_io.hpp"
#include "saetrack/rng.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace saetrack {

namespace {

constexpr char kShardMagic[8] = {'S', 'A', 'E', 'T', 'R', 'K', '0', '1'};
constexpr std::uint32_t kShardVersion = 1;

// magic + version + dim + count + step + layer + meta_len
constexpr std::uint64_t kFixedHeaderBytes = 8 + 4 + 4 + 8 + 8 + 4 + 4;
constexpr std::uint64_t kIdBytes = 8 + 4 + 4;

}  // namespace

std::string to_string(const DatapointId& id) {
  return "(context " + std::to_string(id.context_id) + ", pos " + std::to_string(id.token_pos) +
         ", token " + std::to_string(id.token_id) + ")";
}

ActivationShard::ActivationShard(ShardHeader header, std::vector<DatapointId> ids,
                                 RowMatrix<float> values)
    : header_(std::move(header)) {
  if (header_.dim == 0) throw ArgumentError("shard dim must be positive");
  if (values.rows() != static_cast<Eigen::Index>(ids.size()) ||
      (values.rows() > 0 && values.cols() != static_cast<Eigen::Index>(header_.dim))) {
    throw ShapeError("shard values are " + std::to_string(values.rows()) + "x" +
                     std::to_string(values.cols()) + ", expected " + std::to_string(ids.size()) +
                     "x" + std::to_string(header_.dim));
  }
  if (!values.allFinite()) throw NumericError("shard contains non-finite activations");

  header_.metadata["model_tag"] = header_.model_tag;
  std::uint64_t context_length = 0;
  if (auto it = header_.metadata.find("context_length"); it != header_.metadata.end()) {
    context_length = it->get<std::uint64_t>();
  }

  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  ids_.resize(ids.size());
  values_.resize(values.rows(), static_cast<Eigen::Index>(header_.dim));
  for (std::size_t i = 0; i < order.size(); ++i) {
    ids_[i] = ids[order[i]];
    values_.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(order[i]));
    if (i > 0 && ids_[i] == ids_[i - 1]) {
      throw ArgumentError("duplicate datapoint " + to_string(ids_[i]));
    }
    if (context_length > 0 && ids_[i].token_pos >= context_length) {
      throw ArgumentError("token_pos beyond context length in " + to_string(ids_[i]));
    }
  }
}

ActivationRecord ActivationShard::record(std::size_t i) const {
  return {ids_.at(i), values_.row(static_cast<Eigen::Index>(i)).transpose()};
}

std::ptrdiff_t ActivationShard::find(const DatapointId& id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || !(*it == id)) return -1;
  return it - ids_.begin();
}

MatrixXd ActivationShard::gather(std::span<const std::size_t> indices) const {
  MatrixXd out(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) =
        values_.row(static_cast<Eigen::Index>(indices[j])).transpose().cast<double>();
  }
  return out;
}

MatrixXd ActivationShard::as_columns() const { return values_.transpose().cast<double>(); }

void persist_shard(const ActivationShard& shard, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::string meta = shard.header().metadata.dump();

  os.write(kShardMagic, sizeof(kShardMagic));
  detail::write_le<std::uint32_t>(os, kShardVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(shard.dim()));
  detail::write_le<std::uint64_t>(os, shard.size());
  detail::write_le<std::uint64_t>(os, shard.checkpoint_step());
  detail::write_le<std::uint32_t>(os, shard.layer());
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  for (const auto& id : shard.ids()) {
    detail::write_le(os, id.context_id);
    detail::write_le(os, id.token_pos);
    detail::write_le(os, id.token_id);
  }
  // Row-major storage is exactly count x dim in record order.
  detail::write_le_array(os, shard.values().data(), shard.size() * shard.dim());
  if (!os) throw IoError("write failed for " + path.string());
}

ActivationShard read_shard(const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_bytes = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());

  detail::Reader in(is, path.string());
  const std::string magic = in.get_bytes(sizeof(kShardMagic));
  if (magic != std::string(kShardMagic, sizeof(kShardMagic))) {
    throw FormatError(path.string() + ": bad magic");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kShardVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  ShardHeader header;
  header.dim = in.get<std::uint32_t>();
  const auto count = in.get<std::uint64_t>();
  header.checkpoint_step = in.get<std::uint64_t>();
  header.layer = in.get<std::uint32_t>();
  const auto meta_len = in.get<std::uint32_t>();

  const std::uint64_t expected =
      kFixedHeaderBytes + meta_len + count * kIdBytes + count * header.dim * sizeof(float);
  if (file_bytes < expected) throw CorruptionError(path.string() + ": truncated file");
  if (file_bytes > expected) {
    throw CorruptionError(path.string() + ": payload size does not match header dim/count");
  }
  if (header.dim == 0) throw CorruptionError(path.string() + ": zero dim");

  try {
    header.metadata = nlohmann::json::parse(in.get_bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(path.string() + ": metadata: " + e.what());
  }
  header.model_tag = header.metadata.value("model_tag", std::string{});

  std::vector<DatapointId> ids(count);
  for (auto& id : ids) {
    id.context_id = in.get<std::uint64_t>();
    id.token_pos = in.get<std::uint32_t>();
    id.token_id = in.get<std::uint32_t>();
  }
  RowMatrix<float> values(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(header.dim));
  in.get_array(values.data(), count * header.dim);

  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (!(ids[i - 1] < ids[i])) throw CorruptionError(path.string() + ": records not canonical");
  }
  return ActivationShard(std::move(header), std::move(ids), std::move(values));
}

std::vector<std::size_t> sample_random_indices(const ActivationShard& shard, std::size_t m,
                                               std::uint64_t seed) {
  if (m > shard.size()) {
    throw ArgumentError("cannot sample " + std::to_string(m) + " of " +
                        std::to_string(shard.size()) + " records");
  }
  CounterRng rng(derive_seed(seed, shard.checkpoint_step()));
  return sample_without_replacement(shard.size(), m, rng);
}

std::vector<ActivationRecord> sample_random(const ActivationShard& shard, std::size_t m,
                                            std::uint64_t seed) {
  std::vector<ActivationRecord> out;
  for (std::size_t i : sample_random_indices(shard, m, seed)) out.push_back(shard.record(i));
  return out;
}

std::vector<std::size_t> lookup_indices(const ActivationShard& shard,
                                        std::span<const DatapointId> ids) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto at = shard.find(id);
    if (at < 0) {
      throw LookupError("datapoint " + to_string(id) + " not in shard at step " +
                        std::to_string(shard.checkpoint_step()));
    }
    out.push_back(static_cast<std::size_t>(at));
  }
  return out;
}

std::vector<ActivationRecord> lookup_datapoints(const ActivationShard& shard,
                                                std::span<const DatapointId> ids) {
  std::vector<ActivationRecord> out;
  for (std::size_t i : lookup_indices(shard, ids)) out.push_back(shard.record(i));
  return out;
}

BatchStream::BatchStream(const ActivationShard& shard, std::size_t batch_size, std::uint64_t seed,
                         bool shuffle)
    : shard_(&shard), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size == 0) throw ArgumentError("batch_size must be at least 1");
}

std::vector<std::vector<std::size_t>> BatchStream::epoch_batches(std::uint64_t epoch) const {
  const std::size_t n = shard_->size();
  std::vector<std::size_t> order;
  if (shuffle_) {
    CounterRng rng(derive_seed(seed_, epoch));
    order = sample_without_replacement(n, n, rng);
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size_) {
    const std::size_t end = std::min(n, start + batch_size_);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

MatrixXd BatchStream::next() {
  if (shard_->empty()) throw ArgumentError("cannot stream batches from an empty shard");
  if (cursor_ >= current_.size()) {
    if (!current_.empty()) ++epoch_;
    current_ = epoch_batches(epoch_);
    cursor_ = 0;
  }
  return shard_->gather(current_[cursor_++]);
}

}  // namespace saetrack

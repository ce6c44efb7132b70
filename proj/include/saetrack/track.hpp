#pragma once

#include "saetrack/activation_store.hpp"
#include "saetrack/sae.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

namespace saetrack {

/// One arithmetic run of checkpoint steps: start, start + stride, ..., count values.
struct ScheduleSegment {
  std::uint64_t start = 0;
  std::uint64_t stride = 1;
  std::uint64_t count = 1;
};

struct Schedule {
  std::vector<ScheduleSegment> segments;
  std::vector<std::uint64_t> steps() const;
};

/// Expands segments into the checkpoint list. Each segment must begin where the previous
/// one ended (start_i == start_{i-1} + stride_{i-1} * count_{i-1}).
std::vector<std::uint64_t> build_schedule(const std::vector<ScheduleSegment>& segments);

enum class TrackDirection { kForward, kReverse };

/// Training-token budget per chain position. Position 0 is the first SAE trained (the
/// earliest checkpoint going forward, the last one in reverse).
struct BudgetPlan {
  std::uint64_t first = 0;
  std::uint64_t rest = 0;
  std::map<std::size_t, std::uint64_t> overrides;

  std::uint64_t tokens_for(std::size_t position) const;
};

struct TrackConfig {
  BudgetPlan budget;
  TrackDirection direction = TrackDirection::kForward;
  TrainConfig train;
  SaeOptions sae;  // architecture used for the fresh first SAE

  void validate() const;
};

/// steps = ceil(tokens / batch_size); one activation vector counts as one token.
std::size_t steps_for_budget(std::uint64_t tokens, std::size_t batch_size);

struct TrackEntry {
  std::uint64_t checkpoint_step = 0;
  SaeParamsd params;
  std::vector<TrainMetrics> metrics;
};

struct TrackRun {
  Schedule schedule;
  std::vector<TrackEntry> entries;  // ascending checkpoint order
  nlohmann::json config = nlohmann::json::object();

  const TrackEntry& final_entry() const { return entries.back(); }
  std::ptrdiff_t index_of(std::uint64_t checkpoint_step) const;
};

/// Warm-started training: copy of `prev`, trained on `shard` for the budget's step count.
TrainResult<double> track_next(const SaeParamsd& prev, const ActivationShard& shard,
                               std::uint64_t budget_tokens, const TrainConfig& train);

/// Runs the recurrent-initialization chain over shards ordered by checkpoint.
TrackRun run_track(const std::vector<ActivationShard>& shards, const TrackConfig& config,
                   std::optional<Schedule> schedule = std::nullopt);

/// Fresh training versus warm start on the same shard: how many warm steps reach the loss that
/// fresh training ends at. Losses are measured on the full shard every `eval_every` steps.
struct ConvergenceComparison {
  double fresh_initial_loss = 0;
  double fresh_final_loss = 0;
  std::size_t fresh_steps = 0;
  double warm_initial_loss = 0;
  std::optional<std::size_t> warm_steps_to_match;
  std::vector<std::pair<std::size_t, double>> fresh_curve;
  std::vector<std::pair<std::size_t, double>> warm_curve;
};

ConvergenceComparison compare_convergence(const SaeParamsd& warm_init, const SaeParamsd& fresh_init,
                                          const ActivationShard& shard, const TrainConfig& train,
                                          std::size_t fresh_steps, std::size_t eval_every);

/// Directory layout: manifest.json, sae_<step>.bin, metrics_<step>.csv.
void persist_track(const TrackRun& run, const std::filesystem::path& dir);
TrackRun read_track(const std::filesystem::path& dir);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace saetrack

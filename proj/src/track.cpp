#include "saetrack/track.hpp"

#include "saetrack/sae_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace saetrack {

std::vector<std::uint64_t> build_schedule(const std::vector<ScheduleSegment>& segments) {
  if (segments.empty()) throw ScheduleError("schedule needs at least one segment");
  std::vector<std::uint64_t> steps;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.stride == 0 || s.count == 0) {
      throw ScheduleError("segment " + std::to_string(i) + " needs stride >= 1 and count >= 1");
    }
    if (i > 0) {
      const auto& prev = segments[i - 1];
      const std::uint64_t expected = prev.start + prev.stride * prev.count;
      if (s.start != expected) {
        throw ScheduleError("segment " + std::to_string(i) + " starts at " +
                            std::to_string(s.start) + ", continuity requires " +
                            std::to_string(expected));
      }
    }
    for (std::uint64_t j = 0; j < s.count; ++j) steps.push_back(s.start + s.stride * j);
  }
  return steps;
}

std::vector<std::uint64_t> Schedule::steps() const { return build_schedule(segments); }

namespace {

// Inverse of build_schedule for a strictly increasing step list. A run is cut one element
// early when the gap after it changes, so each segment ends exactly where the next begins.
Schedule schedule_from_steps(const std::vector<std::uint64_t>& steps) {
  Schedule s;
  const std::size_t n = steps.size();
  std::size_t i = 0;
  while (i < n) {
    if (i + 1 == n) {
      s.segments.push_back({steps[i], 1, 1});
      break;
    }
    const std::uint64_t stride = steps[i + 1] - steps[i];
    std::size_t j = i + 1;
    while (j < n && steps[j] - steps[j - 1] == stride) ++j;
    const std::size_t count = j == n ? j - i : j - 1 - i;
    s.segments.push_back({steps[i], stride, count});
    i += count;
  }
  return s;
}

}  // namespace

std::uint64_t BudgetPlan::tokens_for(std::size_t position) const {
  if (auto it = overrides.find(position); it != overrides.end()) return it->second;
  return position == 0 ? first : rest;
}

void TrackConfig::validate() const {
  train.validate();
  if (budget.first == 0 || budget.rest == 0) throw ConfigError("token budgets must be positive");
  if (budget.rest > budget.first) throw ConfigError("budget_rest must not exceed budget_first");
}

std::size_t steps_for_budget(std::uint64_t tokens, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  return static_cast<std::size_t>((tokens + batch_size - 1) / batch_size);
}

std::ptrdiff_t TrackRun::index_of(std::uint64_t checkpoint_step) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].checkpoint_step == checkpoint_step) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

TrainResult<double> track_next(const SaeParamsd& prev, const ActivationShard& shard,
                               std::uint64_t budget_tokens, const TrainConfig& train) {
  if (static_cast<Eigen::Index>(shard.dim()) != prev.dim()) {
    throw ConfigError("shard dim " + std::to_string(shard.dim()) + " != SAE dim " +
                      std::to_string(prev.dim()));
  }
  TrainConfig cfg = train;
  cfg.steps = steps_for_budget(budget_tokens, train.batch_size);
  return train_sae(prev, shard, cfg);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},       {"adam_epsilon", c.adam_epsilon},
          {"batch_size", c.batch_size},       {"steps", c.steps},
          {"seed", c.seed},                   {"log_every", c.log_every},
          {"shuffle", c.shuffle}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.shuffle = j.value("shuffle", c.shuffle);
  return c;
}

namespace {

nlohmann::json to_json(const TrackConfig& c) {
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [pos, tokens] : c.budget.overrides) overrides[std::to_string(pos)] = tokens;
  return {{"budget_first", c.budget.first},
          {"budget_rest", c.budget.rest},
          {"budget_overrides", overrides},
          {"direction", c.direction == TrackDirection::kForward ? "forward" : "reverse"},
          {"train", to_json(c.train)},
          {"sae",
           {{"dim", c.sae.dim},
            {"features", c.sae.features},
            {"lambda", c.sae.lambda},
            {"subtract_decoder_bias", c.sae.subtract_decoder_bias},
            {"norm_mode", to_string(c.sae.norm_mode)}}}};
}

// Per-chain-position seed so every SAE in the chain sees its own batch order.
TrainConfig position_config(const TrainConfig& base, std::size_t position) {
  TrainConfig cfg = base;
  cfg.seed = derive_seed(base.seed, position);
  return cfg;
}

}  // namespace

TrackRun run_track(const std::vector<ActivationShard>& shards, const TrackConfig& config,
                   std::optional<Schedule> schedule) {
  config.validate();
  if (shards.empty()) throw ConfigError("run_track needs at least one shard");
  std::vector<std::uint64_t> steps;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (shards[i].dim() != shards[0].dim()) {
      throw ConfigError("shard " + std::to_string(i) + " has dim " +
                        std::to_string(shards[i].dim()) + ", expected " +
                        std::to_string(shards[0].dim()));
    }
    if (i > 0 && shards[i].checkpoint_step() <= shards[i - 1].checkpoint_step()) {
      throw ConfigError("shards must be in strictly increasing checkpoint order");
    }
    steps.push_back(shards[i].checkpoint_step());
  }
  if (config.sae.dim != 0 && config.sae.dim != static_cast<Eigen::Index>(shards[0].dim())) {
    throw ConfigError("SAE dim does not match shard dim");
  }
  TrackRun run;
  run.schedule = schedule ? *schedule : schedule_from_steps(steps);
  if (run.schedule.steps() != steps) {
    throw ConfigError("schedule does not match the checkpoint steps of the shards");
  }
  run.config = to_json(config);

  SaeOptions opts = config.sae;
  opts.dim = static_cast<Eigen::Index>(shards[0].dim());
  const SaeParamsd fresh = random_init<double>(opts, derive_seed(config.train.seed, "track-init"));

  const std::size_t n = shards.size();
  run.entries.resize(n);
  auto shard_at = [&](std::size_t position) -> std::size_t {
    return config.direction == TrackDirection::kForward ? position : n - 1 - position;
  };

  const SaeParamsd* prev = &fresh;
  for (std::size_t position = 0; position < n; ++position) {
    const std::size_t idx = shard_at(position);
    auto result = track_next(*prev, shards[idx], config.budget.tokens_for(position),
                             position_config(config.train, position));
    run.entries[idx] = {shards[idx].checkpoint_step(), std::move(result.params),
                        std::move(result.metrics)};
    prev = &run.entries[idx].params;
  }
  return run;
}

ConvergenceComparison compare_convergence(const SaeParamsd& warm_init, const SaeParamsd& fresh_init,
                                          const ActivationShard& shard, const TrainConfig& train,
                                          std::size_t fresh_steps, std::size_t eval_every) {
  if (eval_every == 0) throw ArgumentError("eval_every must be at least 1");
  const MatrixXd x = shard.as_columns();
  ConvergenceComparison out;
  out.fresh_steps = fresh_steps;

  SaeTrainer<double> fresh(fresh_init, shard, train);
  out.fresh_initial_loss = evaluate(fresh.params(), x).total_loss;
  out.fresh_curve.emplace_back(0, out.fresh_initial_loss);
  while (fresh.steps_done() < fresh_steps) {
    fresh.step();
    if (fresh.steps_done() % eval_every == 0 || fresh.steps_done() == fresh_steps) {
      out.fresh_curve.emplace_back(fresh.steps_done(), evaluate(fresh.params(), x).total_loss);
    }
  }
  out.fresh_final_loss = out.fresh_curve.back().second;

  SaeTrainer<double> warm(warm_init, shard, train);
  out.warm_initial_loss = evaluate(warm.params(), x).total_loss;
  out.warm_curve.emplace_back(0, out.warm_initial_loss);
  if (out.warm_initial_loss <= out.fresh_final_loss) out.warm_steps_to_match = 0;
  while (!out.warm_steps_to_match && warm.steps_done() < fresh_steps) {
    warm.step();
    if (warm.steps_done() % eval_every == 0 || warm.steps_done() == fresh_steps) {
      const double loss = evaluate(warm.params(), x).total_loss;
      out.warm_curve.emplace_back(warm.steps_done(), loss);
      if (loss <= out.fresh_final_loss) out.warm_steps_to_match = warm.steps_done();
    }
  }
  return out;
}

namespace {

std::string params_name(std::uint64_t step) { return "sae_" + std::to_string(step) + ".bin"; }
std::string metrics_name(std::uint64_t step) { return "metrics_" + std::to_string(step) + ".csv"; }

void write_metrics_csv(const std::vector<TrainMetrics>& metrics, const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  os << "step,total_loss,mse,l1_term,l0,explained_variance\n";
  os.precision(17);
  for (const auto& m : metrics) {
    os << m.step << ',' << m.total_loss << ',' << m.mse << ',' << m.l1_term << ',' << m.l0 << ','
       << m.explained_variance << '\n';
  }
}

std::vector<TrainMetrics> read_metrics_csv(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string());
  std::string line;
  std::getline(is, line);
  std::vector<TrainMetrics> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    TrainMetrics m;
    char comma = 0;
    if (!(ss >> m.step >> comma >> m.total_loss >> comma >> m.mse >> comma >> m.l1_term >>
          comma >> m.l0 >> comma >> m.explained_variance)) {
      throw FormatError(p.string() + ": malformed metrics row");
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace

void persist_track(const TrackRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : run.schedule.segments) {
    segments.push_back({{"start", s.start}, {"stride", s.stride}, {"count", s.count}});
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : run.entries) {
    persist_params(e.params, dir / params_name(e.checkpoint_step));
    write_metrics_csv(e.metrics, dir / metrics_name(e.checkpoint_step));
    entries.push_back({{"checkpoint_step", e.checkpoint_step},
                       {"params", params_name(e.checkpoint_step)},
                       {"metrics", metrics_name(e.checkpoint_step)}});
  }
  nlohmann::json manifest = {{"format", "saetrack-run"},
                             {"version", 1},
                             {"schedule", {{"segments", segments}, {"steps", run.schedule.steps()}}},
                             {"config", run.config},
                             {"entries", entries}};
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
}

TrackRun read_track(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "saetrack-run") {
    throw FormatError(dir.string() + ": not a track run manifest");
  }
  TrackRun run;
  try {
    for (const auto& s : manifest.at("schedule").at("segments")) {
      run.schedule.segments.push_back(
          {s.at("start").get<std::uint64_t>(), s.at("stride").get<std::uint64_t>(),
           s.at("count").get<std::uint64_t>()});
    }
    run.config = manifest.value("config", nlohmann::json::object());
    for (const auto& e : manifest.at("entries")) {
      TrackEntry entry;
      entry.checkpoint_step = e.at("checkpoint_step").get<std::uint64_t>();
      entry.params = read_params(dir / e.at("params").get<std::string>());
      entry.metrics = read_metrics_csv(dir / e.at("metrics").get<std::string>());
      run.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  std::vector<std::uint64_t> steps;
  for (const auto& e : run.entries) steps.push_back(e.checkpoint_step);
  if (run.schedule.steps() != steps) throw FormatError(dir.string() + ": entries/schedule mismatch");
  return run;
}

}  // namespace saetrack

#include "saetrack/cli.hpp"

#include "saetrack/activation_store.hpp"
#include "saetrack/analysis.hpp"
#include "saetrack/rng.hpp"
#include "saetrack/sae_io.hpp"
#include "saetrack/synth.hpp"
#include "saetrack/track.hpp"
#include "svg.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace saetrack::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------------------------
// Flag table. Every subcommand's flags and their defaults live here; the README mirrors it.

enum class Type { kString, kInt, kReal, kFlag, kInFile, kInFiles, kInDir, kOutDir };

struct Flag {
  const char* name;  // without leading dashes
  Type type;
  const char* fallback;  // default as text; nullptr means "unset"
  const char* commands;  // space-separated subcommand names
  const char* help;
  bool required = false;
  std::vector<std::string> choices = {};
};

constexpr const char* kAnalysis = "topk progress drift trajectories classify";
constexpr const char* kSae = "train track reverse-track";

const std::vector<Flag>& flag_table() {
  static const std::vector<Flag> table = {
      {"seed", Type::kInt, "0", "*", "master seed; every random draw derives from it"},
      {"out", Type::kOutDir, nullptr, "*", "output directory (default $SAETRACK_OUT or ./saetrack_out)"},
      // synth
      {"config", Type::kInFile, nullptr, "synth", "synthetic config JSON (replaces --dim/--steps)"},
      {"dim", Type::kInt, "64", "synth", "activation dimension"},
      {"steps", Type::kInt, "12", "synth", "number of checkpoints"},
      {"eta", Type::kReal, "1", "synth", "step size of the planted continuity bound eta*L*G"},
      {"noise-sigma", Type::kReal, "0.25", "synth", "within-cluster jitter"},
      {"collapse", Type::kString, nullptr, "synth", "collapse window START:END[:BLEND] (checkpoint indices)"},
      // SAE architecture and optimizer
      {"shard", Type::kInFile, nullptr, "train", "training shard", true},
      {"init", Type::kInFile, nullptr, "train", "warm-start parameters instead of random init"},
      {"latents", Type::kInt, "0", kSae, "dictionary size F (0 = 8 * dim)"},
      {"lambda", Type::kReal, "0.001", kSae, "L1 coefficient"},
      {"norm-mode", Type::kString, "unit_norm", kSae, "L1 variant", false, {"unit_norm", "free"}},
      {"no-decoder-bias", Type::kFlag, nullptr, kSae, "do not subtract b_dec before encoding (c = 0)"},
      {"lr", Type::kReal, "0.0003", kSae, "Adam learning rate"},
      {"batch", Type::kInt, "64", kSae, "mini-batch size"},
      {"steps", Type::kInt, "1000", "train", "optimizer steps"},
      {"log-every", Type::kInt, "50", kSae, "metrics cadence in steps"},
      {"resample-dead", Type::kFlag, nullptr, "train", "resample dead features halfway through"},
      // chains
      {"shards", Type::kInDir, nullptr, "track reverse-track topk progress drift trajectories classify collapse continuity",
       "directory of shard files", true},
      {"budget-first", Type::kInt, "128000", "track reverse-track", "training tokens for the first SAE of the chain"},
      {"budget-rest", Type::kInt, "32000", "track reverse-track", "training tokens for every later SAE"},
      {"schedule", Type::kString, nullptr, "track reverse-track", "checkpoint schedule START:STRIDE:COUNT[,...]"},
      // analyses
      {"track", Type::kInDir, nullptr, kAnalysis, "track directory written by track/reverse-track", true},
      {"features", Type::kString, nullptr, kAnalysis, "comma-separated feature indices"},
      {"all-features", Type::kFlag, nullptr, kAnalysis, "every live feature (the default)"},
      {"k", Type::kInt, "25", kAnalysis, "top-k size"},
      {"density-floor", Type::kReal, "0", kAnalysis, "features firing on a smaller share of the final shard are skipped"},
      {"value-floor", Type::kReal, "0", kAnalysis, "features with a smaller peak activation are skipped"},
      {"metric", Type::kString, "cosine", "progress", "similarity metric", false, {"cosine", "jaccard", "weighted_jaccard", "all"}},
      {"space", Type::kString, "both", "progress", "vector space", false, {"activation", "feature", "both"}},
      {"m-baseline", Type::kInt, "256", "progress classify collapse", "random baseline sample size"},
      {"bin-width", Type::kReal, "0.05", "drift", "alignment histogram bin width"},
      {"theta-formed", Type::kReal, "0.5", "trajectories", "token-overlap threshold for formation"},
      {"theta-keep", Type::kReal, "0.5", "classify", "token-overlap threshold for maintaining"},
      {"theta-noise", Type::kReal, "0.1", "classify", "coherence threshold separating noise"},
      {"token-share", Type::kReal, "0.8", "classify", "token share for token-level and weak-concept classes"},
      {"weak-max-tokens", Type::kInt, "3", "classify", "token count of a weak concept"},
      {"epsilon", Type::kReal, "0.05", "collapse", "flag a step when 1 - baseline similarity < epsilon"},
      // report
      {"input", Type::kInFiles, nullptr, "report", "CSV files written by other subcommands", true},
      {"svg", Type::kFlag, nullptr, "report", "render SVG charts"},
  };
  return table;
}

struct Conflict {
  const char* command;
  const char* a;
  const char* b;
};

const std::vector<Conflict>& conflict_table() {
  static const std::vector<Conflict> table = {
      {"synth", "config", "dim"},         {"synth", "config", "steps"},
      {"train", "init", "latents"},       {"topk", "features", "all-features"},
      {"progress", "features", "all-features"}, {"drift", "features", "all-features"},
      {"trajectories", "features", "all-features"}, {"classify", "features", "all-features"},
  };
  return table;
}

const std::vector<std::pair<const char*, const char*>>& subcommands() {
  static const std::vector<std::pair<const char*, const char*>> list = {
      {"synth", "generate a synthetic checkpoint track with planted ground truth"},
      {"train", "train one SAE on one shard"},
      {"track", "train the recurrent SAE chain forward over checkpoints"},
      {"reverse-track", "train the recurrent SAE chain backward from the last checkpoint"},
      {"topk", "top-k datapoints per feature"},
      {"progress", "progress measure per feature and checkpoint"},
      {"drift", "decoder cosine-to-final distributions"},
      {"trajectories", "decoder trajectories, formation onset, 2-D projection"},
      {"classify", "feature level and transition pattern"},
      {"collapse", "flag checkpoints with collapsed activation geometry"},
      {"continuity", "per-datapoint activation change between consecutive checkpoints"},
      {"report", "render CSV outputs as SVG charts"},
  };
  return list;
}

bool applies(const Flag& f, const std::string& command) {
  if (std::string(f.commands) == "*") return true;
  std::istringstream ss(f.commands);
  std::string c;
  while (ss >> c)
    if (c == command) return true;
  return false;
}

std::int64_t parse_int(const std::string& flag, const std::string& text) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ArgumentError("--" + flag + " expects an integer, got '" + text + "'");
  return v;
}

double parse_real(const std::string& flag, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
    throw ArgumentError("--" + flag + " expects a finite number, got '" + text + "'");
  }
  return v;
}

std::string default_out() {
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return "saetrack_out";
}

// ---------------------------------------------------------------------------------------------
// Shared helpers for execute

const nlohmann::json& opt(const Command& cmd, const char* name) { return cmd.options.at(name); }
bool given(const Command& cmd, const std::string& name) {
  const std::string flag = "--" + name;
  return std::any_of(cmd.argv.begin(), cmd.argv.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}
bool has(const Command& cmd, const char* name) {
  return cmd.options.contains(name) && !cmd.options.at(name).is_null();
}
std::uint64_t u64(const Command& cmd, const char* name) {
  const auto v = opt(cmd, name).get<std::int64_t>();
  if (v < 0) throw ArgumentError(std::string("--") + name + " must be nonnegative");
  return static_cast<std::uint64_t>(v);
}
std::size_t count_opt(const Command& cmd, const char* name) {
  return static_cast<std::size_t>(u64(cmd, name));
}
double real(const Command& cmd, const char* name) { return opt(cmd, name).get<double>(); }
bool flag(const Command& cmd, const char* name) { return opt(cmd, name).get<bool>(); }
fs::path path(const Command& cmd, const char* name) { return opt(cmd, name).get<std::string>(); }

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& p, const std::string& header) : path_(p), os_(p, std::ios::trunc) {
    if (!os_) throw IoError("cannot write " + p.string());
    os_ << header << '\n';
  }
  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((os_ << (first ? "" : ",") << cell(cells), first = false), ...);
    os_ << '\n';
  }
  ~CsvWriter() = default;

 private:
  static std::string cell(double v) { return fmt_real(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <typename T>
    requires std::is_integral_v<T>
  static std::string cell(T v) { return std::to_string(v); }

  fs::path path_;
  std::ofstream os_;
};

// Every regular *.bin file in `dir` whose first bytes carry the shard magic, ascending step.
std::vector<ActivationShard> load_shards(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".bin") continue;
    std::ifstream is(e.path(), std::ios::binary);
    char magic[8] = {};
    is.read(magic, 8);
    if (is.gcount() == 8 && std::string(magic, 8) == "SAETRK01") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no shard files in " + dir.string());
  std::vector<ActivationShard> shards;
  for (const auto& f : files) shards.push_back(read_shard(f));
  std::stable_sort(shards.begin(), shards.end(), [](const auto& a, const auto& b) {
    return a.checkpoint_step() < b.checkpoint_step();
  });
  for (std::size_t i = 1; i < shards.size(); ++i) {
    if (shards[i].checkpoint_step() == shards[i - 1].checkpoint_step()) {
      throw FormatError("two shards in " + dir.string() + " claim checkpoint " +
                        std::to_string(shards[i].checkpoint_step()));
    }
  }
  return shards;
}

std::vector<ScheduleSegment> parse_schedule(const std::string& text) {
  std::vector<ScheduleSegment> segments;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    std::string a, b, c;
    if (!std::getline(is, a, ':') || !std::getline(is, b, ':') || !std::getline(is, c) ||
        !is.eof()) {
      throw ArgumentError("--schedule segment '" + item + "' is not START:STRIDE:COUNT");
    }
    const auto start = parse_int("schedule", a);
    const auto stride = parse_int("schedule", b);
    const auto count = parse_int("schedule", c);
    if (start < 0 || stride < 0 || count < 0) throw ArgumentError("--schedule values must be nonnegative");
    segments.push_back({static_cast<std::uint64_t>(start), static_cast<std::uint64_t>(stride),
                        static_cast<std::uint64_t>(count)});
  }
  if (segments.empty()) throw ArgumentError("--schedule is empty");
  return segments;
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = parse_int("features", item);
    if (v < 0) throw ArgumentError("--features entries must be nonnegative");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ArgumentError("--features is empty");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SaeOptions sae_options(const Command& cmd) {
  SaeOptions o;
  o.features = static_cast<Eigen::Index>(count_opt(cmd, "latents"));
  o.lambda = real(cmd, "lambda");
  if (!(o.lambda >= 0)) throw ConfigError("--lambda must be nonnegative");
  o.norm_mode = norm_mode_from_string(opt(cmd, "norm-mode").get<std::string>());
  o.subtract_decoder_bias = !flag(cmd, "no-decoder-bias");
  return o;
}

TrainConfig train_config(const Command& cmd, std::uint64_t seed) {
  TrainConfig t;
  t.learning_rate = real(cmd, "lr");
  t.batch_size = count_opt(cmd, "batch");
  t.log_every = count_opt(cmd, "log-every");
  if (cmd.options.contains("steps")) t.steps = count_opt(cmd, "steps");
  t.seed = seed;
  t.validate();
  return t;
}

void write_metrics(const std::vector<TrainMetrics>& metrics, const fs::path& p) {
  CsvWriter csv(p, "step,total_loss,mse,l1_term,l0,explained_variance");
  for (const auto& m : metrics) csv.row(m.step, m.total_loss, m.mse, m.l1_term, m.l0, m.explained_variance);
}

AnalysisThresholds thresholds(const Command& cmd) {
  AnalysisThresholds t;
  auto get = [&](const char* name, auto& field) {
    if (!cmd.options.contains(name)) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(field)>, double>) {
      field = real(cmd, name);
    } else {
      field = count_opt(cmd, name);
    }
  };
  get("k", t.k);
  get("theta-formed", t.theta_formed);
  get("theta-keep", t.theta_keep);
  get("theta-noise", t.theta_noise);
  get("epsilon", t.epsilon_collapse);
  get("m-baseline", t.m_baseline);
  get("bin-width", t.bin_width);
  get("token-share", t.token_share);
  get("weak-max-tokens", t.weak_max_tokens);
  get("density-floor", t.density_floor);
  get("value-floor", t.value_floor);
  if (t.k == 0) throw ArgumentError("--k must be at least 1");
  return t;
}

// Run context shared by every subcommand: output directory, manifest under construction.
struct Context {
  explicit Context(const Command& c) : cmd(c) {}

  const Command& cmd;
  fs::path out;
  std::uint64_t seed = 0;
  nlohmann::json derived = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
  std::vector<std::string> outputs;

  std::uint64_t derive(const char* purpose) {
    const auto s = derive_seed(seed, purpose);
    derived[purpose] = s;
    return s;
  }
  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

// Inputs for the per-feature analyses.
struct AnalysisInputs {
  TrackRun run;
  std::vector<ActivationShard> shards;
  AnalysisThresholds thresholds;
  std::vector<std::size_t> features;  // requested or live
  bool explicit_features = false;
};

AnalysisInputs load_analysis(Context& ctx) {
  AnalysisInputs in;
  in.run = read_track(path(ctx.cmd, "track"));
  in.shards = load_shards(path(ctx.cmd, "shards"));
  in.thresholds = thresholds(ctx.cmd);
  if (in.run.entries.size() != in.shards.size()) {
    throw ArgumentError("track has " + std::to_string(in.run.entries.size()) +
                        " checkpoints but --shards holds " + std::to_string(in.shards.size()));
  }
  const auto f = static_cast<std::size_t>(in.run.final_entry().params.features());
  if (has(ctx.cmd, "features")) {
    in.explicit_features = true;
    in.features = parse_index_list(opt(ctx.cmd, "features").get<std::string>());
    for (auto i : in.features) {
      if (i >= f) throw ArgumentError("feature " + std::to_string(i) + " out of range (F = " + std::to_string(f) + ")");
    }
  } else {
    in.features = alive_features(in.run, in.shards.back(), in.thresholds);
  }
  return in;
}

// Final-checkpoint top-k for each feature. Features with fewer than k activating datapoints
// are an error when requested explicitly and skipped otherwise.
std::vector<TopKSet> final_topk(Context& ctx, const AnalysisInputs& in) {
  std::vector<TopKSet> out;
  nlohmann::json skipped = nlohmann::json::array();
  for (auto f : in.features) {
    if (in.explicit_features) {
      out.push_back(select_topk(in.run.final_entry().params, in.shards.back(), f, in.thresholds.k));
      continue;
    }
    auto top = select_topk_partial(in.run.final_entry().params, in.shards.back(), f, in.thresholds.k);
    if (top.k < in.thresholds.k) {
      skipped.push_back(f);
    } else {
      out.push_back(std::move(top));
    }
  }
  ctx.extra["skipped_features"] = skipped;
  return out;
}

// ---------------------------------------------------------------------------------------------
// Subcommands

void cmd_synth(Context& ctx) {
  const auto& cmd = ctx.cmd;
  synth::SynthConfig cfg;
  if (has(cmd, "config")) {
    std::ifstream is(path(cmd, "config"));
    if (!is) throw IoError("cannot read " + path(cmd, "config").string());
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path(cmd, "config").string() + ": " + e.what());
    }
    cfg = synth::synth_config_from_json(j);
  } else {
    cfg = synth::default_config();
    cfg.dim = count_opt(cmd, "dim");
    cfg.steps = count_opt(cmd, "steps");
    for (auto& c : cfg.clusters) {
      if (c.kind != synth::ClusterKind::kToken && c.onset >= cfg.steps) c.onset = cfg.steps - 1;
    }
  }
  // A config file keeps its own values unless the flag is given explicitly.
  if (!has(cmd, "config") || given(cmd, "eta")) cfg.eta = real(cmd, "eta");
  if (!has(cmd, "config") || given(cmd, "noise-sigma")) cfg.noise_sigma = real(cmd, "noise-sigma");
  if (has(cmd, "collapse")) {
    const auto text = opt(cmd, "collapse").get<std::string>();
    std::istringstream is(text);
    std::string a, b, c;
    if (!std::getline(is, a, ':') || !std::getline(is, b, ':')) {
      throw ArgumentError("--collapse expects START:END[:BLEND], got '" + text + "'");
    }
    synth::CollapseWindow w;
    w.start = static_cast<std::size_t>(std::max<std::int64_t>(0, parse_int("collapse", a)));
    w.end = static_cast<std::size_t>(std::max<std::int64_t>(0, parse_int("collapse", b)));
    if (std::getline(is, c)) w.blend = parse_real("collapse", c);
    cfg.collapse = w;
  }
  cfg.seed = ctx.derive("synth");
  const auto track = synth::generate_track(cfg);
  synth::write_track(track, ctx.out);
  for (const auto& s : track.shards) ctx.outputs.push_back("shard_" + std::to_string(s.checkpoint_step()) + ".bin");
  ctx.outputs.push_back("ground_truth.json");
  std::ofstream os(ctx.output("synth_config.json"), std::ios::trunc);
  os << synth::to_json(cfg).dump(2) << '\n';
}

void cmd_train(Context& ctx) {
  const auto& cmd = ctx.cmd;
  const auto shard = read_shard(path(cmd, "shard"));
  SaeParamsd init;
  if (has(cmd, "init")) {
    init = read_params(path(cmd, "init"));
  } else {
    SaeOptions o = sae_options(cmd);
    o.dim = static_cast<Eigen::Index>(shard.dim());
    init = random_init<double>(o, ctx.derive("init"));
  }
  TrainConfig t = train_config(cmd, ctx.derive("train"));
  TrainResult<double> result;
  if (flag(cmd, "resample-dead") && t.steps >= 2) {
    TrainConfig half = t;
    half.steps = t.steps / 2;
    result = train_sae(init, shard, half);
    const auto health = dead_feature_mask(result.params, shard, 0.0, 0.0);
    ctx.extra["resampled_features"] = resample_dead_features(result.params, shard, health);
    TrainConfig rest = t;
    rest.steps = t.steps - half.steps;
    rest.seed = ctx.derive("train-after-resample");
    auto second = train_sae(result.params, shard, rest);
    for (auto& m : second.metrics) m.step += half.steps;
    result.params = std::move(second.params);
    result.metrics.insert(result.metrics.end(), second.metrics.begin(), second.metrics.end());
  } else {
    result = train_sae(init, shard, t);
  }
  persist_params(result.params, ctx.output("sae.bin"));
  write_metrics(result.metrics, ctx.output("metrics.csv"));
  ctx.extra["train"] = to_json(t);
}

void cmd_track(Context& ctx, TrackDirection direction) {
  const auto& cmd = ctx.cmd;
  auto shards = load_shards(path(cmd, "shards"));
  std::optional<Schedule> schedule;
  if (has(cmd, "schedule")) {
    schedule = Schedule{parse_schedule(opt(cmd, "schedule").get<std::string>())};
    const auto steps = schedule->steps();
    std::vector<ActivationShard> picked;
    for (auto s : steps) {
      auto it = std::find_if(shards.begin(), shards.end(),
                             [&](const auto& sh) { return sh.checkpoint_step() == s; });
      if (it == shards.end()) throw ScheduleError("no shard for scheduled checkpoint " + std::to_string(s));
      picked.push_back(std::move(*it));
    }
    shards = std::move(picked);
  }
  TrackConfig tc;
  tc.budget.first = u64(cmd, "budget-first");
  tc.budget.rest = u64(cmd, "budget-rest");
  tc.direction = direction;
  tc.sae = sae_options(cmd);
  tc.train = train_config(cmd, ctx.derive("train"));
  const auto run = run_track(shards, tc, schedule);
  persist_track(run, ctx.out);
  ctx.outputs.push_back("manifest.json");
  for (const auto& e : run.entries) {
    ctx.outputs.push_back("sae_" + std::to_string(e.checkpoint_step) + ".bin");
    ctx.outputs.push_back("metrics_" + std::to_string(e.checkpoint_step) + ".csv");
  }
}

void cmd_topk(Context& ctx) {
  const auto in = load_analysis(ctx);
  const auto sets = final_topk(ctx, in);
  CsvWriter csv(ctx.output("topk.csv"), "feature,rank,context_id,token_pos,token_id,activation");
  for (const auto& s : sets) {
    for (std::size_t r = 0; r < s.ids.size(); ++r) {
      csv.row(s.feature, r + 1, s.ids[r].context_id, s.ids[r].token_pos, s.ids[r].token_id,
              s.activations[r]);
    }
  }
}

void cmd_progress(Context& ctx) {
  const auto& cmd = ctx.cmd;
  const auto in = load_analysis(ctx);
  const auto sets = final_topk(ctx, in);
  const auto metric_text = opt(cmd, "metric").get<std::string>();
  const auto space_text = opt(cmd, "space").get<std::string>();
  std::vector<Space> spaces;
  if (space_text == "both") {
    spaces = {Space::kActivation, Space::kFeature};
  } else {
    spaces = {space_from_string(space_text)};
  }
  std::vector<SimilarityMetric> metrics;
  if (metric_text == "all") {
    metrics = {SimilarityMetric::kCosine, SimilarityMetric::kJaccard, SimilarityMetric::kWeightedJaccard};
  } else {
    metrics = {similarity_metric_from_string(metric_text)};
  }
  if (space_text == "activation" && metric_text != "cosine" && metric_text != "all") {
    throw ArgumentError("--metric " + metric_text + " conflicts with --space activation (Jaccard needs feature space)");
  }
  const auto baseline_seed = ctx.derive("baseline");

  struct Combo {
    Space space;
    SimilarityMetric metric;
    std::vector<double> baseline;
  };
  std::vector<Combo> combos;
  for (auto space : spaces) {
    for (auto metric : metrics) {
      if (space == Space::kActivation && metric != SimilarityMetric::kCosine) continue;
      ProgressOptions po{metric, space, baseline_seed, in.thresholds.m_baseline};
      combos.push_back({space, metric, baseline_similarity(in.run, in.shards, po)});
    }
  }
  CsvWriter csv(ctx.output("progress.csv"), "feature,step,space,metric,M");
  for (const auto& top : sets) {
    for (const auto& c : combos) {
      ProgressOptions po{c.metric, c.space, baseline_seed, in.thresholds.m_baseline};
      const auto series = progress_series(in.run, in.shards, top, po, c.baseline);
      for (const auto& p : series.values) {
        csv.row(top.feature, p.step, to_string(c.space), to_string(c.metric), p.value);
      }
    }
  }
}

void cmd_drift(Context& ctx) {
  const auto in = load_analysis(ctx);
  {
    CsvWriter csv(ctx.output("alignment.csv"), "step,bin_lo,bin_hi,count");
    for (const auto& e : in.run.entries) {
      const auto h = alignment_distribution(in.run, e.checkpoint_step, in.features, in.thresholds.bin_width);
      for (std::size_t b = 0; b < h.counts.size(); ++b) {
        csv.row(e.checkpoint_step, h.bin_lo(b), h.bin_hi(b), h.counts[b]);
      }
    }
  }
  {
    CsvWriter csv(ctx.output("alignment_summary.csv"), "step,features,median,mean");
    for (const auto& e : in.run.entries) {
      auto v = alignment_values(in.run, e.checkpoint_step, in.features);
      double mean = 0;
      for (double x : v) mean += x;
      mean = v.empty() ? 0.0 : mean / static_cast<double>(v.size());
      double median = 0;
      if (!v.empty()) {
        std::sort(v.begin(), v.end());
        const auto n = v.size();
        median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      }
      csv.row(e.checkpoint_step, v.size(), median, mean);
    }
  }
  CsvWriter csv(ctx.output("drift_series.csv"), "feature,step,cosine");
  for (auto f : in.features) {
    for (const auto& p : decoder_alignment_series(in.run, f)) csv.row(f, p.step, p.cosine);
  }
}

void cmd_trajectories(Context& ctx) {
  const auto in = load_analysis(ctx);
  if (in.features.empty()) throw ArgumentError("no features to trace");
  std::vector<Trajectory> trs;
  for (auto f : in.features) {
    trs.push_back(feature_trajectory(in.run, in.shards, f, in.thresholds.k, in.thresholds.theta_formed));
  }
  const auto t = static_cast<Eigen::Index>(in.run.entries.size());
  MatrixXd all(in.run.final_entry().params.dim(), t * static_cast<Eigen::Index>(trs.size()));
  for (std::size_t i = 0; i < trs.size(); ++i) all.middleCols(static_cast<Eigen::Index>(i) * t, t) = trs[i].points;
  const MatrixXd xy = project_2d(all);
  {
    CsvWriter csv(ctx.output("trajectories.csv"), "feature,step,formed,x,y");
    for (std::size_t i = 0; i < trs.size(); ++i) {
      const auto& tr = trs[i];
      for (Eigen::Index s = 0; s < t; ++s) {
        const auto step = tr.steps[static_cast<std::size_t>(s)];
        const bool formed = tr.formed_from && step >= *tr.formed_from;
        const auto row = static_cast<Eigen::Index>(i) * t + s;
        csv.row(tr.feature, step, formed ? 1 : 0, xy(row, 0), xy(row, 1));
      }
    }
  }
  CsvWriter csv(ctx.output("formation.csv"), "feature,formed_from,mean_angle_after");
  for (const auto& tr : trs) {
    const auto idx = tr.formed_index();
    csv.row(tr.feature, tr.formed_from ? std::to_string(*tr.formed_from) : std::string("none"),
            idx ? tr.mean_angular_step(*idx) : 0.0);
  }
}

void cmd_classify(Context& ctx) {
  const auto in = load_analysis(ctx);
  const auto sets = final_topk(ctx, in);
  const auto baseline_seed = ctx.derive("baseline");
  ProgressOptions po{SimilarityMetric::kCosine, Space::kActivation, baseline_seed, in.thresholds.m_baseline};
  const auto baseline = baseline_similarity(in.run, in.shards, po);
  CsvWriter csv(ctx.output("classification.csv"),
                "feature,class,pattern,dominant_share,top_tokens_share,distinct_tokens,progress_final,"
                "token_overlap,first_coherence,final_coherence");
  for (const auto& top : sets) {
    const auto& final_shard = in.shards.back();
    const double top_mean = pairwise_mean_similarity(final_shard.gather(lookup_indices(final_shard, top.ids)),
                                                     SimilarityMetric::kCosine);
    const double progress_final = top_mean - baseline.back();
    std::vector<std::uint32_t> tokens;
    for (const auto& id : top.ids) tokens.push_back(id.token_id);
    const auto level = classify_feature_level(tokens, progress_final, in.thresholds);
    const auto tr = classify_transition(in.run, in.shards, top.feature, in.thresholds, baseline_seed);
    csv.row(top.feature, to_string(level.level), to_string(tr.pattern), level.dominant_share,
            level.top_tokens_share, level.distinct_tokens, progress_final, tr.token_overlap,
            tr.first_coherence, tr.final_coherence);
  }
}

void cmd_collapse(Context& ctx) {
  const auto shards = load_shards(path(ctx.cmd, "shards"));
  const auto t = thresholds(ctx.cmd);
  const auto report = detect_collapse(shards, ctx.derive("baseline"), t.m_baseline, t.epsilon_collapse);
  CsvWriter csv(ctx.output("collapse.csv"), "step,baseline_similarity,flagged");
  for (std::size_t i = 0; i < report.steps.size(); ++i) {
    const bool flagged = std::find(report.flagged.begin(), report.flagged.end(), report.steps[i]) !=
                         report.flagged.end();
    csv.row(report.steps[i], report.baseline[i], flagged ? 1 : 0);
  }
  ctx.extra["flagged_steps"] = report.flagged;
}

void cmd_continuity(Context& ctx) {
  const auto shards = load_shards(path(ctx.cmd, "shards"));
  CsvWriter csv(ctx.output("continuity.csv"), "from_step,to_step,shared,max_delta,mean_delta");
  for (std::size_t i = 1; i < shards.size(); ++i) {
    const auto d = continuity_deltas(shards[i - 1], shards[i]);
    csv.row(shards[i - 1].checkpoint_step(), shards[i].checkpoint_step(), d.shared, d.max, d.mean);
  }
}

// ----- report

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("column '" + name + "' missing");
    return static_cast<std::size_t>(it - header.begin());
  }
  double num(std::size_t r, std::size_t c) const { return parse_real("input", rows[r].at(c)); }
};

Table read_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw FormatError(p.string() + " is empty");
  t.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw FormatError(p.string() + ": ragged row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

void write_text(Context& ctx, const std::string& name, const std::string& text) {
  std::ofstream os(ctx.output(name), std::ios::trunc);
  if (!os) throw IoError("cannot write " + (ctx.out / name).string());
  os << text;
}

std::string report_kind(const Table& t) {
  const auto h = join(t.header);
  if (h == "feature,step,space,metric,M") return "progress";
  if (h == "step,bin_lo,bin_hi,count") return "alignment";
  if (h == "feature,step,cosine") return "drift_series";
  if (h == "feature,step,formed,x,y") return "trajectories";
  if (h == "step,baseline_similarity,flagged") return "collapse";
  if (h == "from_step,to_step,shared,max_delta,mean_delta") return "continuity";
  throw FormatError("unrecognised CSV header '" + h + "'");
}

void render(Context& ctx, const std::string& kind, const Table& t, const std::string& stem) {
  if (kind == "progress") {
    // One chart per (feature, metric), one line per space.
    std::map<std::pair<long long, std::string>, std::map<std::string, svg::Series>> groups;
    const auto cf = t.col("feature"), cs = t.col("step"), csp = t.col("space"), cm = t.col("metric"), cv = t.col("M");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto& s = groups[{parse_int("feature", t.rows[r][cf]), t.rows[r][cm]}][t.rows[r][csp]];
      s.name = t.rows[r][csp];
      s.x.push_back(t.num(r, cs));
      s.y.push_back(t.num(r, cv));
    }
    for (const auto& [key, by_space] : groups) {
      std::vector<svg::Series> series;
      for (const auto& [name, s] : by_space) series.push_back(s);
      write_text(ctx, "progress_f" + std::to_string(key.first) + "_" + key.second + ".svg",
                 svg::line_chart("feature " + std::to_string(key.first) + " progress (" + key.second + ")",
                                 "checkpoint step", "M", series));
    }
  } else if (kind == "alignment") {
    std::map<long long, std::vector<svg::Bar>> by_step;
    const auto cs = t.col("step"), lo = t.col("bin_lo"), hi = t.col("bin_hi"), cc = t.col("count");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      by_step[parse_int("step", t.rows[r][cs])].push_back({t.num(r, lo), t.num(r, hi), t.num(r, cc)});
    }
    for (const auto& [step, bars] : by_step) {
      write_text(ctx, stem + "_step" + std::to_string(step) + ".svg",
                 svg::histogram("decoder cosine to final, step " + std::to_string(step), "cosine", bars));
    }
  } else if (kind == "drift_series") {
    std::map<long long, svg::Series> by_feature;
    const auto cf = t.col("feature"), cs = t.col("step"), cc = t.col("cosine");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto& s = by_feature[parse_int("feature", t.rows[r][cf])];
      s.name = "feature " + t.rows[r][cf];
      s.x.push_back(t.num(r, cs));
      s.y.push_back(t.num(r, cc));
    }
    std::vector<svg::Series> series;
    for (const auto& [f, s] : by_feature) series.push_back(s);
    write_text(ctx, stem + ".svg", svg::line_chart("decoder cosine to final", "checkpoint step", "cosine", series));
  } else if (kind == "trajectories") {
    std::vector<svg::Point> points;
    std::map<long long, std::vector<std::size_t>> paths;
    const auto cf = t.col("feature"), cfo = t.col("formed"), cx = t.col("x"), cy = t.col("y");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      paths[parse_int("feature", t.rows[r][cf])].push_back(points.size());
      points.push_back({t.num(r, cx), t.num(r, cy), t.rows[r][cfo] == "1" ? 1 : 0});
    }
    std::vector<std::vector<std::size_t>> lines;
    for (auto& [f, p] : paths) lines.push_back(std::move(p));
    write_text(ctx, stem + ".svg", svg::scatter("decoder trajectories", points, {"unformed", "formed"}, lines));
  } else if (kind == "collapse") {
    svg::Series s{"baseline similarity", {}, {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      s.x.push_back(t.num(r, t.col("step")));
      s.y.push_back(t.num(r, t.col("baseline_similarity")));
    }
    write_text(ctx, stem + ".svg", svg::line_chart("random-pair cosine", "checkpoint step", "mean cosine", {s}));
  } else if (kind == "continuity") {
    svg::Series mx{"max", {}, {}}, mean{"mean", {}, {}};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const double x = t.num(r, t.col("to_step"));
      mx.x.push_back(x);
      mx.y.push_back(t.num(r, t.col("max_delta")));
      mean.x.push_back(x);
      mean.y.push_back(t.num(r, t.col("mean_delta")));
    }
    write_text(ctx, stem + ".svg", svg::line_chart("activation change per step", "checkpoint step", "L2 delta", {mx, mean}));
  }
}

void cmd_report(Context& ctx) {
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& p : opt(ctx.cmd, "input")) {
    const fs::path file = p.get<std::string>();
    const auto table = read_csv(file);
    const auto kind = report_kind(table);
    summary.push_back({{"input", file.filename().string()}, {"kind", kind}, {"rows", table.rows.size()}});
    if (flag(ctx.cmd, "svg")) render(ctx, kind, table, file.stem().string());
  }
  write_text(ctx, "report.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------------------------

void validate_paths(const Command& cmd) {
  for (const auto& f : flag_table()) {
    if (!applies(f, cmd.name) || !has(cmd, f.name)) continue;
    const auto& v = cmd.options.at(f.name);
    auto check_file = [&](const fs::path& p) {
      if (!fs::is_regular_file(p)) throw IoError("--" + std::string(f.name) + ": no such file '" + p.string() + "'");
    };
    switch (f.type) {
      case Type::kInFile: check_file(v.get<std::string>()); break;
      case Type::kInFiles:
        for (const auto& p : v) check_file(p.get<std::string>());
        break;
      case Type::kInDir:
        if (!fs::is_directory(v.get<std::string>())) {
          throw IoError("--" + std::string(f.name) + ": no such directory '" + v.get<std::string>() + "'");
        }
        break;
      case Type::kOutDir:
        if (fs::exists(v.get<std::string>()) && !fs::is_directory(v.get<std::string>())) {
          throw IoError("--" + std::string(f.name) + ": '" + v.get<std::string>() + "' exists and is not a directory");
        }
        break;
      default: break;
    }
  }
  // Outputs never land inside an input directory.
  const auto out = fs::weakly_canonical(cmd.options.at("out").get<std::string>());
  for (const char* in : {"shards", "track"}) {
    if (has(cmd, in) && fs::weakly_canonical(cmd.options.at(in).get<std::string>()) == out) {
      throw ArgumentError("--out conflicts with --" + std::string(in) + ": outputs must not overwrite inputs");
    }
  }
}

void write_manifest(const Context& ctx) {
  nlohmann::json j = {{"tool", "saetrack"},
                      {"version", kVersion},
                      {"command", ctx.cmd.name},
                      {"argv", ctx.cmd.argv},
                      {"options", ctx.cmd.options},
                      {"seed", ctx.seed},
                      {"derived_seeds", ctx.derived},
                      {"libraries",
                       {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                      "." + std::to_string(EIGEN_MINOR_VERSION)},
                        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                        {"cli11", CLI11_VERSION}}},
                      {"outputs", ctx.outputs}};
  for (const auto& [k, v] : ctx.extra.items()) j[k] = v;
  std::ofstream os(ctx.out / "run_manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (ctx.out / "run_manifest.json").string());
  os << j.dump(2) << '\n';
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kArgument: return 1;
    case ErrorKind::kIo: return 2;
    case ErrorKind::kNumeric: return 3;
    case ErrorKind::kConfiguration: return 4;
  }
  return 1;
}

Command parse_args(const std::vector<std::string>& args) {
  CLI::App app{"saetrack: sparse autoencoder feature tracking across training checkpoints", "saetrack"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // CLI11 binds each option to storage; keep it stable across the parse.
  std::map<std::pair<std::string, std::string>, std::string> text;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> lists;
  std::map<std::pair<std::string, std::string>, bool> flags;
  std::map<std::string, std::map<std::string, CLI::Option*>> registered;

  for (const auto& [name, description] : subcommands()) {
    auto* sub = app.add_subcommand(name, description);
    for (const auto& f : flag_table()) {
      if (!applies(f, name)) continue;
      const std::string flag_name = "--" + std::string(f.name);
      const auto key = std::make_pair(std::string(name), std::string(f.name));
      CLI::Option* o = nullptr;
      if (f.type == Type::kFlag) {
        o = sub->add_flag(flag_name, flags[key], f.help);
      } else if (f.type == Type::kInFiles) {
        o = sub->add_option(flag_name, lists[key], f.help)->expected(1, -1);
      } else {
        o = sub->add_option(flag_name, text[key], f.help);
        if (f.fallback) o->default_str(f.fallback);
        if (!f.choices.empty()) o->check(CLI::IsMember(f.choices));
      }
      if (f.required) o->required();
      registered[name][f.name] = o;
    }
    for (const auto& c : conflict_table()) {
      if (c.command == std::string(name)) registered[name][c.a]->excludes(registered[name][c.b]);
    }
  }

  if (!args.empty() && !args[0].empty() && args[0][0] != '-' &&
      std::none_of(subcommands().begin(), subcommands().end(),
                   [&](const auto& s) { return args[0] == s.first; })) {
    throw ArgumentError("unknown subcommand '" + args[0] + "'");
  }

  Command cmd;
  cmd.argv = args;
  std::vector<const char*> argv{"saetrack"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    cmd.help = true;
    const auto parsed = app.get_subcommands();
    cmd.name = parsed.empty() ? "" : parsed.front()->get_name();
    cmd.usage = parsed.empty() ? app.help() : parsed.front()->help();
    return cmd;
  } catch (const CLI::CallForVersion&) {
    cmd.help = true;
    cmd.usage = std::string("saetrack ") + kVersion + "\n";
    return cmd;
  } catch (const CLI::ParseError& e) {
    throw ArgumentError(e.what());
  }

  const auto* sub = app.get_subcommands().front();
  cmd.name = sub->get_name();
  for (const auto& f : flag_table()) {
    if (!applies(f, cmd.name)) continue;
    const auto key = std::make_pair(cmd.name, std::string(f.name));
    const bool given = registered[cmd.name][f.name]->count() > 0;
    nlohmann::json value;
    switch (f.type) {
      case Type::kFlag: value = flags[key]; break;
      case Type::kInFiles: value = lists[key]; break;
      default: {
        std::optional<std::string> raw;
        if (given) {
          raw = text[key];
        } else if (f.fallback) {
          raw = f.fallback;
        } else if (f.type == Type::kOutDir) {
          raw = default_out();
        }
        if (!raw) break;
        if (f.type == Type::kInt) {
          value = parse_int(f.name, *raw);
        } else if (f.type == Type::kReal) {
          value = parse_real(f.name, *raw);
        } else {
          if (raw->empty()) throw ArgumentError("--" + std::string(f.name) + " must not be empty");
          value = *raw;
        }
      }
    }
    cmd.options[f.name] = value;
  }
  if (cmd.options.at("seed").get<std::int64_t>() < 0) throw ArgumentError("--seed must be nonnegative");
  return cmd;
}

int execute(const Command& cmd, std::ostream& out, std::ostream& err) {
  if (cmd.help) {
    out << cmd.usage;
    return 0;
  }
  try {
    validate_paths(cmd);
    Context ctx{cmd};
    ctx.out = cmd.options.at("out").get<std::string>();
    ctx.seed = static_cast<std::uint64_t>(cmd.options.at("seed").get<std::int64_t>());
    fs::create_directories(ctx.out);
    const auto& n = cmd.name;
    if (n == "synth") cmd_synth(ctx);
    else if (n == "train") cmd_train(ctx);
    else if (n == "track") cmd_track(ctx, TrackDirection::kForward);
    else if (n == "reverse-track") cmd_track(ctx, TrackDirection::kReverse);
    else if (n == "topk") cmd_topk(ctx);
    else if (n == "progress") cmd_progress(ctx);
    else if (n == "drift") cmd_drift(ctx);
    else if (n == "trajectories") cmd_trajectories(ctx);
    else if (n == "classify") cmd_classify(ctx);
    else if (n == "collapse") cmd_collapse(ctx);
    else if (n == "continuity") cmd_continuity(ctx);
    else if (n == "report") cmd_report(ctx);
    else throw ArgumentError("unknown subcommand '" + n + "'");
    write_manifest(ctx);
    out << "saetrack " << n << ": wrote " << ctx.outputs.size() << " file(s) to " << ctx.out.string() << '\n';
    return 0;
  } catch (const Error& e) {
    err << "saetrack " << cmd.name << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "saetrack " << cmd.name << ": io: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "saetrack " << cmd.name << ": format: " << e.what() << '\n';
    return 2;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Command cmd;
  try {
    cmd = parse_args(args);
  } catch (const Error& e) {
    err << "saetrack: " << e.what() << "\nRun 'saetrack --help' for usage.\n";
    return exit_code(e.kind());
  }
  return execute(cmd, out, err);
}

}  // namespace saetrack::cli

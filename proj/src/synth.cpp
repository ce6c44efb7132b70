#include "saetrack/synth.hpp"

#include "saetrack/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <cstring>
#include <random>
#include <span>

namespace saetrack::synth {

const char* to_string(ClusterKind kind) {
  switch (kind) {
    case ClusterKind::kToken: return "token";
    case ClusterKind::kConcept: return "concept";
    case ClusterKind::kWeakConcept: return "weak_concept";
  }
  return "?";
}

namespace {

ClusterKind kind_from_string(const std::string& s) {
  if (s == "token") return ClusterKind::kToken;
  if (s == "concept") return ClusterKind::kConcept;
  if (s == "weak_concept") return ClusterKind::kWeakConcept;
  throw FormatError("unknown cluster kind '" + s + "'");
}

std::size_t default_pool(ClusterKind kind) {
  switch (kind) {
    case ClusterKind::kToken: return 1;
    case ClusterKind::kConcept: return 12;
    case ClusterKind::kWeakConcept: return 2;
  }
  return 1;
}

VectorXd random_unit(std::size_t dim, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(static_cast<Eigen::Index>(dim));
  do {
    for (auto& x : v) x = normal(gen);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

VectorXd random_gaussian(std::size_t dim, double sigma, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(dim)));
  VectorXd v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = normal(gen);
  return v;
}

// Givens rotation by `angle` in the plane spanned by orthonormal (u, w).
VectorXd rotate(const VectorXd& x, const VectorXd& u, const VectorXd& w, double angle) {
  if (angle == 0.0) return x;
  const double a = x.dot(u);
  const double b = x.dot(w);
  return x + (std::cos(angle) - 1.0) * (a * u + b * w) + std::sin(angle) * (a * w - b * u);
}

double mixing_weight(const ClusterSpec& c, std::size_t t, std::size_t steps) {
  if (c.kind == ClusterKind::kToken) return 1.0;
  if (t < c.onset) return 0.0;
  const double rate = c.rate > 0 ? c.rate : 1.0 / static_cast<double>(steps - c.onset);
  return std::min(1.0, static_cast<double>(t - c.onset + 1) * rate);
}

double displacement(const Vector<float>& a, const Vector<float>& b) {
  return activation_displacement(a, b);
}

double mean_pairwise_cosine_brute(const std::vector<VectorXd>& vs) {
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t j = 0; j < vs.size(); ++j) {
    for (std::size_t k = j + 1; k < vs.size(); ++k) {
      const double nj = std::sqrt(vs[j].dot(vs[j]));
      const double nk = std::sqrt(vs[k].dot(vs[k]));
      double dot = 0.0;
      for (Eigen::Index r = 0; r < vs[j].size(); ++r) dot += vs[j](r) * vs[k](r);
      sum += (nj > 0 && nk > 0) ? dot / (nj * nk) : 0.0;
      ++pairs;
    }
  }
  return pairs ? sum / static_cast<double>(pairs) : 0.0;
}

}  // namespace

double RotationSpec::angle_at(std::size_t t) const {
  if (t <= start) return 0.0;
  return angle_per_step * static_cast<double>(std::min(t - start, steps));
}

std::vector<std::uint64_t> SynthConfig::resolved_steps() const {
  if (!checkpoint_steps.empty()) return checkpoint_steps;
  std::vector<std::uint64_t> out(steps);
  std::iota(out.begin(), out.end(), std::uint64_t{0});
  return out;
}

void SynthConfig::validate() const {
  if (dim == 0) throw ConfigError("synthetic dim must be positive");
  if (steps == 0) throw ConfigError("synthetic track needs at least one checkpoint");
  if (!checkpoint_steps.empty()) {
    if (checkpoint_steps.size() != steps) throw ConfigError("checkpoint_steps length != steps");
    for (std::size_t i = 1; i < steps; ++i)
      if (checkpoint_steps[i] <= checkpoint_steps[i - 1])
        throw ConfigError("checkpoint_steps must be strictly increasing");
  }
  if (clusters.empty() && background_points < 2) throw ConfigError("no datapoints to generate");
  if (!(eta_bound() > 0) || !std::isfinite(eta_bound())) throw ConfigError("eta_bound must be positive");
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
  if (context_length == 0) throw ConfigError("context_length must be positive");
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const auto& c = clusters[i];
    const std::string name = "cluster " + std::to_string(i);
    if (c.size < 2) throw ConfigError(name + " needs at least 2 points");
    if (!(c.rate >= 0 && c.rate <= 1)) throw ConfigError(name + " rate must lie in [0, 1]");
    if (!std::isfinite(c.rotation.angle_per_step)) throw ConfigError(name + " rotation angle not finite");
    if (c.kind != ClusterKind::kToken && c.rate == 0 && c.onset >= steps) {
      throw ConfigError(name + " ramps to the final step but onset is past it");
    }
  }
  if (collapse) {
    if (collapse->start > collapse->end || collapse->end >= steps) {
      throw ConfigError("collapse window outside the track");
    }
    if (!(collapse->blend >= 0 && collapse->blend <= 1)) throw ConfigError("collapse blend must lie in [0, 1]");
  }
}

SynthConfig default_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  for (int i = 0; i < 8; ++i) cfg.clusters.push_back({ClusterKind::kToken, 40, 0, 0, 0.5, {}});
  const std::size_t onsets[] = {1, 2, 3, 1, 2, 3};
  for (std::size_t onset : onsets) {
    cfg.clusters.push_back({ClusterKind::kConcept, 40, 0, onset, 0.0, {}});
  }
  cfg.clusters.push_back({ClusterKind::kWeakConcept, 40, 0, 2, 0.0, {}});
  cfg.clusters.push_back({ClusterKind::kWeakConcept, 40, 0, 3, 0.0, {}});
  return cfg;
}

std::vector<DatapointId> GroundTruth::members(std::size_t cluster) const {
  std::vector<DatapointId> out;
  for (std::size_t p = 0; p < ids.size(); ++p)
    if (assignment[p] == static_cast<int>(cluster)) out.push_back(ids[p]);
  return out;
}

Track generate_track(const SynthConfig& config) {
  config.validate();
  const std::size_t dim = config.dim;
  const std::size_t steps = config.steps;
  const auto checkpoints = config.resolved_steps();
  std::mt19937_64 gen(derive_seed(config.seed, "synth"));
  std::uniform_real_distribution<double> scale_dist(0.8, 1.2);

  struct Point {
    int cluster = -1;
    std::uint32_t token_id = 0;
    double scale = 1.0;
    VectorXd noise;       // isotropic component, fixed across checkpoints
    VectorXd structured;  // unrotated center + jitter
  };

  GroundTruth truth;
  truth.checkpoint_steps = checkpoints;
  truth.eta_bound = config.eta_bound();
  truth.collapse = config.collapse;

  std::vector<Point> points;
  std::vector<VectorXd> initial_dir;
  std::vector<VectorXd> plane_dir;
  std::uint32_t next_token = 1;
  for (std::size_t ci = 0; ci < config.clusters.size(); ++ci) {
    const auto& spec = config.clusters[ci];
    ClusterTruth ct;
    ct.kind = spec.kind;
    ct.onset = spec.kind == ClusterKind::kToken ? 0 : spec.onset;
    ct.rotation = spec.rotation;
    ct.rotation.angle_per_step *= config.eta;  // eta is the step size of the planted motion
    const std::size_t pool = spec.token_pool ? spec.token_pool : default_pool(spec.kind);
    for (std::size_t k = 0; k < pool; ++k) ct.token_ids.push_back(next_token++);

    VectorXd u = random_unit(dim, gen);
    VectorXd w = random_unit(dim, gen);
    w -= w.dot(u) * u;
    w.normalize();
    initial_dir.push_back(u);
    plane_dir.push_back(w);

    ct.centers.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(steps));
    const double total = ct.rotation.total_angle();
    for (std::size_t t = 0; t < steps; ++t) {
      const double angle = ct.rotation.angle_at(t);
      ct.centers.col(static_cast<Eigen::Index>(t)) = rotate(u, u, w, angle);
      ct.mixing.push_back(mixing_weight(spec, t, steps));
      ct.cos_to_final.push_back(std::cos(total - angle));
    }
    for (std::size_t k = 0; k < spec.size; ++k) {
      Point p;
      p.cluster = static_cast<int>(ci);
      p.token_id = ct.token_ids[k % pool];
      p.scale = scale_dist(gen);
      p.noise = random_gaussian(dim, 1.0, gen);
      p.structured = u + random_gaussian(dim, config.noise_sigma, gen);
      points.push_back(std::move(p));
    }
    truth.clusters.push_back(std::move(ct));
  }
  const std::uint32_t background_token_base = next_token;
  for (std::size_t k = 0; k < config.background_points; ++k) {
    Point p;
    p.token_id = background_token_base + static_cast<std::uint32_t>(k % 64);
    p.scale = scale_dist(gen);
    p.noise = random_gaussian(dim, 1.0, gen);
    points.push_back(std::move(p));
  }
  const VectorXd collapse_dir = random_unit(dim, gen);

  // Scatter datapoints over (context, position) slots.
  const std::size_t n = points.size();
  CounterRng slot_rng(derive_seed(config.seed, "slots"));
  const auto slots = sample_without_replacement(n, n, slot_rng);
  std::vector<DatapointId> ids(n);
  for (std::size_t p = 0; p < n; ++p) {
    ids[p] = {slots[p] / config.context_length,
              static_cast<std::uint32_t>(slots[p] % config.context_length), points[p].token_id};
  }

  auto target = [&](const Point& p, std::size_t t) -> VectorXd {
    VectorXd x;
    if (p.cluster < 0) {
      x = p.scale * p.noise;
    } else {
      const auto ci = static_cast<std::size_t>(p.cluster);
      const double angle = truth.clusters[ci].rotation.angle_at(t);
      const VectorXd q = p.scale * rotate(p.structured, initial_dir[ci], plane_dir[ci], angle);
      const double r = truth.clusters[ci].mixing[t];
      if (r >= 1.0) {
        x = q;
      } else {
        const VectorXd nz = p.scale * p.noise;
        x = (1.0 - r) * nz + r * q;
        const double norm = x.norm();
        if (norm > 0) x *= ((1.0 - r) * nz.norm() + r * q.norm()) / norm;
      }
    }
    if (config.collapse && t >= config.collapse->start && t <= config.collapse->end) {
      const double b = config.collapse->blend;
      x = (1.0 - b) * x + b * x.norm() * collapse_dir;
    }
    return x;
  };

  // Checkpoint values, float-rounded, with the displacement clamp applied against the
  // previous stored (rounded) value so the bound holds exactly on what is persisted.
  const double bound = config.eta_bound();
  std::vector<RowMatrix<float>> values(steps, RowMatrix<float>(static_cast<Eigen::Index>(n),
                                                                static_cast<Eigen::Index>(dim)));
  bool clamped = false;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t p = 0; p < n; ++p) {
      const VectorXd goal = target(points[p], t);
      const auto row = static_cast<Eigen::Index>(p);
      if (t == 0) {
        values[t].row(row) = goal.transpose().cast<float>();
        continue;
      }
      const Vector<float> prev = values[t - 1].row(row).transpose();
      const VectorXd delta = goal - prev.cast<double>();
      const double len = delta.norm();
      Vector<float> next = goal.cast<float>();
      if (displacement(next, prev) > bound) {
        clamped = true;
        double factor = bound / len;
        do {
          next = (prev.cast<double>() + factor * delta).cast<float>();
          factor *= 1.0 - 1e-6;
        } while (displacement(next, prev) > bound);
      }
      values[t].row(row) = next.transpose();
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  for (std::size_t p : order) {
    truth.ids.push_back(ids[p]);
    truth.assignment.push_back(points[p].cluster);
  }

  Track track;
  for (std::size_t t = 0; t < steps; ++t) {
    ShardHeader header;
    header.model_tag = "synthetic";
    header.layer = 0;
    header.checkpoint_step = checkpoints[t];
    header.dim = static_cast<std::uint32_t>(dim);
    header.metadata = {{"corpus", "synthetic"},
                       {"tokenizer", "synthetic"},
                       {"context_length", config.context_length},
                       {"seed", config.seed}};
    track.shards.emplace_back(std::move(header), ids, values[t]);
  }
  track.truth = std::move(truth);

  const auto summary = oracle_summary(track.truth, track.shards);
  for (std::size_t ci = 0; ci < config.clusters.size(); ++ci) {
    const auto& ct = track.truth.clusters[ci];
    const std::string name = "cluster " + std::to_string(ci);
    if (ct.kind == ClusterKind::kToken) {
      for (std::size_t t = 0; t < steps; ++t) {
        if (summary[ci][t] < 0.9) {
          throw ConfigError(name + " loses cohesion at checkpoint index " + std::to_string(t) +
                            (clamped ? " (eta_bound too small for the planted motion)" : ""));
        }
      }
    } else if (ct.mixing.back() >= 1.0 && summary[ci].back() < 0.9) {
      throw ConfigError(name + " does not converge by the final checkpoint" +
                        std::string(clamped ? " (eta_bound too small for the planted motion)" : ""));
    }
  }
  track.truth.collapse = config.collapse;
  return track;
}

std::vector<std::vector<double>> oracle_summary(const GroundTruth& truth,
                                                const std::vector<ActivationShard>& shards) {
  if (shards.size() != truth.checkpoint_steps.size()) {
    throw ArgumentError("oracle_summary: shard count does not match ground truth");
  }
  std::vector<std::vector<double>> out(truth.clusters.size(), std::vector<double>(shards.size()));
  for (std::size_t t = 0; t < shards.size(); ++t) {
    const auto& shard = shards[t];
    if (shard.checkpoint_step() != truth.checkpoint_steps[t] || shard.size() != truth.ids.size()) {
      throw ArgumentError("oracle_summary: shard at index " + std::to_string(t) +
                          " does not belong to this ground truth");
    }
    std::vector<std::vector<VectorXd>> groups(truth.clusters.size());
    for (std::size_t p = 0; p < truth.ids.size(); ++p) {
      if (!(shard.ids()[p] == truth.ids[p])) {
        throw ArgumentError("oracle_summary: datapoint ids differ from ground truth");
      }
      if (truth.assignment[p] >= 0) {
        groups[static_cast<std::size_t>(truth.assignment[p])].push_back(
            shard.row(p).transpose().cast<double>());
      }
    }
    for (std::size_t c = 0; c < groups.size(); ++c) out[c][t] = mean_pairwise_cosine_brute(groups[c]);
  }
  return out;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string encode_floats(const MatrixXd& m) {
  // column-major: one checkpoint's center after another
  std::vector<float> f(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) f[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  std::vector<unsigned char> bytes(f.size() * 4);
  for (std::size_t i = 0; i < f.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &f[i], 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(u >> (8 * b));
  }
  return base64_encode(bytes);
}

MatrixXd decode_floats(const std::string& text, Eigen::Index rows, Eigen::Index cols) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * 4) throw FormatError("center block size mismatch");
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    float f;
    std::memcpy(&f, &u, 4);
    m.data()[i] = f;
  }
  return m;
}

}  // namespace

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out += kB64[(chunk >> 18) & 63];
    out += kB64[(chunk >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(chunk >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kB64[chunk & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw FormatError("base64 length not a multiple of 4");
  std::vector<unsigned char> out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + static_cast<std::size_t>(k)];
      int v = 0;
      if (c == '=') {
        ++pad;
      } else {
        v = value(c);
        if (v < 0 || pad > 0) throw FormatError("invalid base64 text");
      }
      chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<unsigned char>(chunk >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(chunk >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(chunk));
  }
  return out;
}

nlohmann::json to_json(const GroundTruth& truth) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : truth.clusters) {
    clusters.push_back({{"kind", to_string(c.kind)},
                        {"token_ids", c.token_ids},
                        {"onset", c.onset},
                        {"mixing", c.mixing},
                        {"rotation",
                         {{"angle_per_step", c.rotation.angle_per_step},
                          {"start", c.rotation.start},
                          {"steps", c.rotation.steps}}},
                        {"cos_to_final", c.cos_to_final},
                        {"centers_f32_b64", encode_floats(c.centers)}});
  }
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t p = 0; p < truth.ids.size(); ++p) {
    points.push_back({truth.ids[p].context_id, truth.ids[p].token_pos, truth.ids[p].token_id,
                      truth.assignment[p]});
  }
  nlohmann::json j = {{"format", "saetrack-ground-truth"},
                      {"version", 1},
                      {"dim", truth.clusters.empty() ? 0 : truth.clusters[0].centers.rows()},
                      {"checkpoint_steps", truth.checkpoint_steps},
                      {"eta_bound", truth.eta_bound},
                      {"clusters", clusters},
                      {"datapoints", points}};
  if (truth.collapse) {
    j["collapse"] = {{"start", truth.collapse->start},
                     {"end", truth.collapse->end},
                     {"blend", truth.collapse->blend}};
  }
  return j;
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "saetrack-ground-truth") {
      throw FormatError("not a ground-truth document");
    }
    GroundTruth t;
    t.checkpoint_steps = j.at("checkpoint_steps").get<std::vector<std::uint64_t>>();
    t.eta_bound = j.at("eta_bound").get<double>();
    const auto dim = j.at("dim").get<Eigen::Index>();
    for (const auto& c : j.at("clusters")) {
      ClusterTruth ct;
      ct.kind = kind_from_string(c.at("kind").get<std::string>());
      ct.token_ids = c.at("token_ids").get<std::vector<std::uint32_t>>();
      ct.onset = c.at("onset").get<std::size_t>();
      ct.mixing = c.at("mixing").get<std::vector<double>>();
      ct.rotation.angle_per_step = c.at("rotation").at("angle_per_step").get<double>();
      ct.rotation.start = c.at("rotation").at("start").get<std::size_t>();
      ct.rotation.steps = c.at("rotation").at("steps").get<std::size_t>();
      ct.cos_to_final = c.at("cos_to_final").get<std::vector<double>>();
      ct.centers = decode_floats(c.at("centers_f32_b64").get<std::string>(), dim,
                                 static_cast<Eigen::Index>(t.checkpoint_steps.size()));
      t.clusters.push_back(std::move(ct));
    }
    for (const auto& p : j.at("datapoints")) {
      t.ids.push_back({p.at(0).get<std::uint64_t>(), p.at(1).get<std::uint32_t>(),
                       p.at(2).get<std::uint32_t>()});
      t.assignment.push_back(p.at(3).get<int>());
    }
    if (j.contains("collapse")) {
      const auto& c = j.at("collapse");
      t.collapse = CollapseWindow{c.at("start").get<std::size_t>(), c.at("end").get<std::size_t>(),
                                  c.at("blend").get<double>()};
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ground truth: ") + e.what());
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& k : c.clusters) {
    clusters.push_back({{"kind", to_string(k.kind)},
                        {"size", k.size},
                        {"token_pool", k.token_pool},
                        {"onset", k.onset},
                        {"rate", k.rate},
                        {"rotation",
                         {{"angle_per_step", k.rotation.angle_per_step},
                          {"start", k.rotation.start},
                          {"steps", k.rotation.steps}}}});
  }
  nlohmann::json j = {{"dim", c.dim},
                      {"steps", c.steps},
                      {"checkpoint_steps", c.checkpoint_steps},
                      {"clusters", clusters},
                      {"background_points", c.background_points},
                      {"noise_sigma", c.noise_sigma},
                      {"eta", c.eta},
                      {"lipschitz", c.lipschitz},
                      {"grad_bound", c.grad_bound},
                      {"context_length", c.context_length},
                      {"seed", c.seed}};
  if (c.collapse) {
    j["collapse"] = {{"start", c.collapse->start}, {"end", c.collapse->end}, {"blend", c.collapse->blend}};
  }
  return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  try {
    SynthConfig c;
    c.dim = j.value("dim", c.dim);
    c.steps = j.value("steps", c.steps);
    c.checkpoint_steps = j.value("checkpoint_steps", c.checkpoint_steps);
    if (j.contains("clusters")) {
      for (const auto& k : j.at("clusters")) {
        ClusterSpec spec;
        spec.kind = kind_from_string(k.at("kind").get<std::string>());
        spec.size = k.value("size", spec.size);
        spec.token_pool = k.value("token_pool", spec.token_pool);
        spec.onset = k.value("onset", spec.onset);
        spec.rate = k.value("rate", spec.rate);
        if (k.contains("rotation")) {
          const auto& r = k.at("rotation");
          spec.rotation.angle_per_step = r.value("angle_per_step", 0.0);
          spec.rotation.start = r.value("start", std::size_t{0});
          spec.rotation.steps = r.value("steps", std::size_t{0});
        }
        c.clusters.push_back(spec);
      }
    } else {
      c.clusters = default_config().clusters;
    }
    c.background_points = j.value("background_points", c.background_points);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.eta = j.value("eta", c.eta);
    c.lipschitz = j.value("lipschitz", c.lipschitz);
    c.grad_bound = j.value("grad_bound", c.grad_bound);
    c.context_length = j.value("context_length", c.context_length);
    c.seed = j.value("seed", c.seed);
    if (j.contains("collapse")) {
      const auto& w = j.at("collapse");
      c.collapse = CollapseWindow{w.at("start").get<std::size_t>(), w.at("end").get<std::size_t>(),
                                  w.value("blend", 0.95)};
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
}

void write_track(const Track& track, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& shard : track.shards) {
    persist_shard(shard, dir / ("shard_" + std::to_string(shard.checkpoint_step()) + ".bin"));
  }
  std::ofstream os(dir / "ground_truth.json", std::ios::trunc);
  if (!os) throw IoError("cannot write ground truth in " + dir.string());
  os << to_json(track.truth).dump() << '\n';
}

}  // namespace saetrack::synth

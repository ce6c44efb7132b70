#pragma once

// Sparse autoencoder: encode/decode, loss, analytic gradients, Adam with decoder-norm
// constraint, and the training loop. Templated on the scalar type; training uses double,
// gradient checks use double, persisted parameters are float.

#include "saetrack/activation_store.hpp"
#include "saetrack/common.hpp"
#include "saetrack/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace saetrack {

/// Which L1 penalty is used and whether decoder columns are held at unit norm.
enum class NormMode { kUnitNorm, kFree };

const char* to_string(NormMode mode);
NormMode norm_mode_from_string(const std::string& s);

template <typename Scalar>
struct SaeParams {
  Matrix<Scalar> w_enc;  // F x D
  Vector<Scalar> b_enc;  // F
  Matrix<Scalar> w_dec;  // D x F, column i is the decoder direction of feature i
  Vector<Scalar> b_dec;  // D
  bool subtract_decoder_bias = true;
  Scalar lambda = Scalar(1e-3);
  NormMode norm_mode = NormMode::kUnitNorm;

  Eigen::Index dim() const { return w_dec.rows(); }
  Eigen::Index features() const { return w_dec.cols(); }

  template <typename Other>
  SaeParams<Other> cast() const {
    SaeParams<Other> out;
    out.w_enc = w_enc.template cast<Other>();
    out.b_enc = b_enc.template cast<Other>();
    out.w_dec = w_dec.template cast<Other>();
    out.b_dec = b_dec.template cast<Other>();
    out.subtract_decoder_bias = subtract_decoder_bias;
    out.lambda = static_cast<Other>(lambda);
    out.norm_mode = norm_mode;
    return out;
  }

  bool all_finite() const {
    return w_enc.allFinite() && b_enc.allFinite() && w_dec.allFinite() && b_dec.allFinite() &&
           std::isfinite(static_cast<double>(lambda));
  }
};

using SaeParamsd = SaeParams<double>;
using SaeParamsf = SaeParams<float>;

struct SaeOptions {
  Eigen::Index dim = 0;
  Eigen::Index features = 0;  // 0 means dim * 8
  double lambda = 1e-3;
  bool subtract_decoder_bias = true;
  NormMode norm_mode = NormMode::kUnitNorm;
};

template <typename Scalar>
void check_shapes(const SaeParams<Scalar>& p) {
  const auto d = p.dim();
  const auto f = p.features();
  if (d <= 0 || f <= 0 || p.w_enc.rows() != f || p.w_enc.cols() != d || p.b_enc.size() != f ||
      p.b_dec.size() != d) {
    throw ShapeError("inconsistent SAE parameter blocks");
  }
}

/// Decoder columns uniform on the unit sphere, encoder tied to the decoder transpose,
/// zero biases.
template <typename Scalar = double>
SaeParams<Scalar> random_init(const SaeOptions& opts, std::uint64_t seed) {
  if (opts.dim <= 0) throw ArgumentError("SAE dim must be positive");
  const Eigen::Index f = opts.features > 0 ? opts.features : opts.dim * 8;
  std::mt19937_64 gen(derive_seed(seed, "sae-init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  SaeParams<Scalar> p;
  p.w_dec.resize(opts.dim, f);
  for (Eigen::Index j = 0; j < f; ++j) {
    Vector<double> v(opts.dim);
    do {
      for (Eigen::Index r = 0; r < opts.dim; ++r) v(r) = normal(gen);
    } while (v.norm() == 0.0);
    p.w_dec.col(j) = (v / v.norm()).template cast<Scalar>();
  }
  p.w_enc = p.w_dec.transpose();
  p.b_enc = Vector<Scalar>::Zero(f);
  p.b_dec = Vector<Scalar>::Zero(opts.dim);
  p.lambda = static_cast<Scalar>(opts.lambda);
  p.subtract_decoder_bias = opts.subtract_decoder_bias;
  p.norm_mode = opts.norm_mode;
  return p;
}

/// Pre-ReLU feature values for each column of `x` (F x B).
template <typename Scalar, typename Derived>
Matrix<Scalar> pre_activations(const SaeParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  if (x.rows() != p.dim()) {
    throw ShapeError("input has " + std::to_string(x.rows()) + " rows, SAE dim is " +
                     std::to_string(p.dim()));
  }
  const Scalar c = p.subtract_decoder_bias ? Scalar(1) : Scalar(0);
  Matrix<Scalar> centered = x.template cast<Scalar>();
  if (c != Scalar(0)) centered.colwise() -= p.b_dec;
  Matrix<Scalar> pre = p.w_enc * centered;
  pre.colwise() += p.b_enc;
  return pre;
}

/// f = ReLU(W_enc (x - c b_dec) + b_enc), column-wise.
template <typename Scalar, typename Derived>
Matrix<Scalar> encode(const SaeParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  return pre_activations(p, x).cwiseMax(Scalar(0));
}

/// x_hat = b_dec + W_dec f, column-wise.
template <typename Scalar, typename Derived>
Matrix<Scalar> decode(const SaeParams<Scalar>& p, const Eigen::MatrixBase<Derived>& f) {
  if (f.rows() != p.features()) {
    throw ShapeError("code has " + std::to_string(f.rows()) + " rows, SAE has " +
                     std::to_string(p.features()) + " features");
  }
  Matrix<Scalar> out = p.w_dec * f.template cast<Scalar>();
  out.colwise() += p.b_dec;
  return out;
}

/// Per-feature L1 weights: 1 under unit norm, ||W_dec[:, i]|| otherwise.
template <typename Scalar>
Vector<Scalar> l1_weights(const SaeParams<Scalar>& p) {
  if (p.norm_mode == NormMode::kUnitNorm) return Vector<Scalar>::Ones(p.features());
  return p.w_dec.colwise().norm().transpose();
}

template <typename Scalar>
struct SaeLoss {
  Scalar total = 0;
  Scalar mse = 0;
  Scalar l1 = 0;
};

template <typename Scalar, typename Derived>
SaeLoss<Scalar> sae_loss(const SaeParams<Scalar>& p, const Eigen::MatrixBase<Derived>& batch) {
  if (batch.cols() == 0) throw ArgumentError("sae_loss needs a nonempty batch");
  const Scalar n = static_cast<Scalar>(batch.cols());
  const Matrix<Scalar> f = encode(p, batch);
  const Matrix<Scalar> err = decode(p, f) - batch.template cast<Scalar>();
  SaeLoss<Scalar> out;
  out.mse = err.squaredNorm() / n;
  out.l1 = l1_weights(p).dot(f.rowwise().sum()) / n;
  out.total = out.mse + p.lambda * out.l1;
  return out;
}

template <typename Scalar>
struct SaeGradients {
  Matrix<Scalar> w_enc;
  Vector<Scalar> b_enc;
  Matrix<Scalar> w_dec;
  Vector<Scalar> b_dec;
  SaeLoss<Scalar> loss;  // loss at the point the gradients were taken

  static SaeGradients zeros_like(const SaeParams<Scalar>& p) {
    return {Matrix<Scalar>::Zero(p.w_enc.rows(), p.w_enc.cols()),
            Vector<Scalar>::Zero(p.b_enc.size()),
            Matrix<Scalar>::Zero(p.w_dec.rows(), p.w_dec.cols()),
            Vector<Scalar>::Zero(p.b_dec.size()),
            {}};
  }
};

/// Removes the component of each gradient column along its decoder column.
template <typename Scalar>
void project_out_radial(const Matrix<Scalar>& w_dec, Matrix<Scalar>& grad) {
  for (Eigen::Index i = 0; i < w_dec.cols(); ++i) {
    const Scalar sq = w_dec.col(i).squaredNorm();
    if (sq > Scalar(0)) grad.col(i) -= (w_dec.col(i).dot(grad.col(i)) / sq) * w_dec.col(i);
  }
}

/// Analytic gradients of mean(||x - x_hat||^2) + lambda * mean(L1). Subgradient 0 at the
/// ReLU kink. Under unit norm the decoder gradient is projected onto the sphere's tangent.
template <typename Scalar, typename Derived>
SaeGradients<Scalar> sae_gradients(const SaeParams<Scalar>& p,
                                   const Eigen::MatrixBase<Derived>& batch,
                                   bool project_decoder = true) {
  if (batch.cols() == 0) throw ArgumentError("sae_gradients needs a nonempty batch");
  check_shapes(p);
  const Scalar n = static_cast<Scalar>(batch.cols());
  const Scalar c = p.subtract_decoder_bias ? Scalar(1) : Scalar(0);

  const Matrix<Scalar> x = batch.template cast<Scalar>();
  Matrix<Scalar> centered = x;
  if (c != Scalar(0)) centered.colwise() -= p.b_dec;
  Matrix<Scalar> pre = p.w_enc * centered;
  pre.colwise() += p.b_enc;
  const Matrix<Scalar> f = pre.cwiseMax(Scalar(0));
  Matrix<Scalar> err = p.w_dec * f;
  err.colwise() += p.b_dec;
  err -= x;

  const Vector<Scalar> weights = l1_weights(p);
  const Vector<Scalar> f_sum = f.rowwise().sum();

  SaeGradients<Scalar> g;
  g.loss.mse = err.squaredNorm() / n;
  g.loss.l1 = weights.dot(f_sum) / n;
  g.loss.total = g.loss.mse + p.lambda * g.loss.l1;
  if (!std::isfinite(static_cast<double>(g.loss.total))) throw NumericError("loss is not finite");

  const Matrix<Scalar> d_xhat = (Scalar(2) / n) * err;
  g.w_dec = d_xhat * f.transpose();
  if (p.norm_mode == NormMode::kFree) {
    for (Eigen::Index i = 0; i < p.features(); ++i) {
      if (weights(i) > Scalar(0)) {
        g.w_dec.col(i) += (p.lambda * f_sum(i) / (n * weights(i))) * p.w_dec.col(i);
      }
    }
  }
  Matrix<Scalar> d_pre = p.w_dec.transpose() * d_xhat;
  d_pre.colwise() += (p.lambda / n) * weights;
  d_pre = d_pre.cwiseProduct((pre.array() > Scalar(0)).template cast<Scalar>().matrix());

  g.w_enc = d_pre * centered.transpose();
  g.b_enc = d_pre.rowwise().sum();
  g.b_dec = d_xhat.rowwise().sum();
  if (c != Scalar(0)) g.b_dec -= p.w_enc.transpose() * g.b_enc;

  if (p.norm_mode == NormMode::kUnitNorm && project_decoder) project_out_radial(p.w_dec, g.w_dec);

  if (!g.w_enc.allFinite()) throw NumericError("non-finite gradient in w_enc");
  if (!g.b_enc.allFinite()) throw NumericError("non-finite gradient in b_enc");
  if (!g.w_dec.allFinite()) throw NumericError("non-finite gradient in w_dec");
  if (!g.b_dec.allFinite()) throw NumericError("non-finite gradient in b_dec");
  return g;
}

struct TrainConfig {
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;  // K: metrics cadence; the final step is always logged
  bool shuffle = true;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon >= 0)) throw ConfigError("adam_epsilon must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (log_every == 0) throw ConfigError("log_every must be at least 1");
  }
};

template <typename Scalar>
struct AdamState {
  SaeGradients<Scalar> m;
  SaeGradients<Scalar> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const SaeParams<Scalar>& p) {
    return {SaeGradients<Scalar>::zeros_like(p), SaeGradients<Scalar>::zeros_like(p), 0};
  }
};

template <typename Scalar>
void normalize_decoder_columns(SaeParams<Scalar>& p) {
  for (Eigen::Index i = 0; i < p.features(); ++i) {
    const Scalar norm = p.w_dec.col(i).norm();
    if (norm > Scalar(0)) p.w_dec.col(i) /= norm;
  }
}

namespace detail {
template <typename Scalar, typename Block>
void adam_update(Block& param, const Block& grad, Block& m, Block& v, const TrainConfig& cfg,
                 Scalar bias1, Scalar bias2) {
  const auto b1 = static_cast<Scalar>(cfg.adam_beta1);
  const auto b2 = static_cast<Scalar>(cfg.adam_beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto eps = static_cast<Scalar>(cfg.adam_epsilon);
  param.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + eps);
}
}  // namespace detail

/// One bias-corrected Adam step; decoder columns renormalized afterwards under unit norm.
template <typename Scalar>
void optimizer_step(AdamState<Scalar>& state, SaeParams<Scalar>& p,
                    const SaeGradients<Scalar>& g, const TrainConfig& cfg) {
  check_shapes(p);
  if (state.m.w_enc.rows() != p.w_enc.rows() || state.m.w_enc.cols() != p.w_enc.cols()) {
    state = AdamState<Scalar>::zeros_like(p);
  }
  if (g.w_enc.rows() != p.w_enc.rows() || g.w_enc.cols() != p.w_enc.cols() ||
      g.w_dec.rows() != p.w_dec.rows() || g.w_dec.cols() != p.w_dec.cols() ||
      g.b_enc.size() != p.b_enc.size() || g.b_dec.size() != p.b_dec.size()) {
    throw ShapeError("gradient blocks do not match parameters");
  }
  ++state.t;
  const Scalar bias1 =
      Scalar(1) - static_cast<Scalar>(std::pow(cfg.adam_beta1, static_cast<double>(state.t)));
  const Scalar bias2 =
      Scalar(1) - static_cast<Scalar>(std::pow(cfg.adam_beta2, static_cast<double>(state.t)));
  detail::adam_update(p.w_enc, g.w_enc, state.m.w_enc, state.v.w_enc, cfg, bias1, bias2);
  detail::adam_update(p.b_enc, g.b_enc, state.m.b_enc, state.v.b_enc, cfg, bias1, bias2);
  detail::adam_update(p.w_dec, g.w_dec, state.m.w_dec, state.v.w_dec, cfg, bias1, bias2);
  detail::adam_update(p.b_dec, g.b_dec, state.m.b_dec, state.v.b_dec, cfg, bias1, bias2);
  if (p.norm_mode == NormMode::kUnitNorm) normalize_decoder_columns(p);
}

struct TrainMetrics {
  std::size_t step = 0;
  double total_loss = 0;
  double mse = 0;
  double l1_term = 0;
  double l0 = 0;
  double explained_variance = 0;
};

/// Loss, L0 and explained variance of `p` on the columns of `x`.
template <typename Scalar, typename Derived>
TrainMetrics evaluate(const SaeParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x,
                      std::size_t step = 0) {
  if (x.cols() == 0) throw ArgumentError("evaluate needs at least one datapoint");
  const Matrix<Scalar> xs = x.template cast<Scalar>();
  const auto n = static_cast<double>(xs.cols());
  const Matrix<Scalar> f = encode(p, xs);
  const Matrix<Scalar> err = decode(p, f) - xs;
  TrainMetrics m;
  m.step = step;
  m.mse = static_cast<double>(err.squaredNorm()) / n;
  m.l1_term = static_cast<double>(l1_weights(p).dot(f.rowwise().sum())) / n;
  m.total_loss = m.mse + static_cast<double>(p.lambda) * m.l1_term;
  m.l0 = static_cast<double>((f.array() > Scalar(0)).count()) / n;
  const Vector<Scalar> mean = xs.rowwise().mean();
  const double variance = static_cast<double>((xs.colwise() - mean).squaredNorm()) / n;
  m.explained_variance = variance > 0 ? 1.0 - m.mse / variance : (m.mse == 0 ? 1.0 : -INFINITY);
  return m;
}

template <typename Scalar>
TrainMetrics evaluate(const SaeParams<Scalar>& p, const ActivationShard& shard,
                      std::size_t step = 0) {
  return evaluate(p, shard.as_columns(), step);
}

template <typename Scalar>
struct TrainResult {
  SaeParams<Scalar> params;
  std::vector<TrainMetrics> metrics;
};

/// Step-at-a-time Adam training over shuffled mini-batches of a shard. Optimizer moments
/// start at zero.
template <typename Scalar>
class SaeTrainer {
 public:
  SaeTrainer(const SaeParams<Scalar>& init, const ActivationShard& shard,
             const TrainConfig& config)
      : params_(init),
        config_(config),
        stream_(shard, config.batch_size, derive_seed(config.seed, "batches"), config.shuffle) {
    config_.validate();
    check_shapes(params_);
    if (static_cast<Eigen::Index>(shard.dim()) != params_.dim()) {
      throw ShapeError("shard dim " + std::to_string(shard.dim()) + " != SAE dim " +
                       std::to_string(params_.dim()));
    }
    if (shard.empty()) throw ArgumentError("cannot train on an empty shard");
    state_ = AdamState<Scalar>::zeros_like(params_);
  }

  /// One optimizer step. Returns batch metrics when `with_metrics` is set.
  std::optional<TrainMetrics> step(bool with_metrics = false) {
    const std::size_t step = steps_done_ + 1;
    const MatrixXd batch = stream_.next();
    SaeGradients<Scalar> g;
    try {
      g = sae_gradients(params_, batch);
    } catch (const NumericError& e) {
      throw TrainingError("diverged at step " + std::to_string(step) + ": " + e.what(),
                          static_cast<std::int64_t>(steps_done_));
    }
    std::optional<TrainMetrics> m;
    if (with_metrics) m = evaluate(params_, batch, step);
    optimizer_step(state_, params_, g, config_);
    if (!params_.all_finite()) {
      throw TrainingError("parameters became non-finite at step " + std::to_string(step),
                          static_cast<std::int64_t>(steps_done_));
    }
    steps_done_ = step;
    return m;
  }

  const SaeParams<Scalar>& params() const { return params_; }
  std::size_t steps_done() const { return steps_done_; }

 private:
  SaeParams<Scalar> params_;
  TrainConfig config_;
  BatchStream stream_;
  AdamState<Scalar> state_;
  std::size_t steps_done_ = 0;
};

/// Runs config.steps optimizer steps starting from `init`. Metrics are batch-level, logged
/// every log_every steps and at the final step.
template <typename Scalar>
TrainResult<Scalar> train_sae(const SaeParams<Scalar>& init, const ActivationShard& shard,
                              const TrainConfig& config) {
  config.validate();
  check_shapes(init);
  if (static_cast<Eigen::Index>(shard.dim()) != init.dim()) {
    throw ShapeError("shard dim " + std::to_string(shard.dim()) + " != SAE dim " +
                     std::to_string(init.dim()));
  }
  if (config.steps == 0) return {init, {}};
  SaeTrainer<Scalar> trainer(init, shard, config);
  TrainResult<Scalar> out;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    if (auto m = trainer.step(step % config.log_every == 0 || step == config.steps)) {
      out.metrics.push_back(*m);
    }
  }
  out.params = trainer.params();
  return out;
}

/// The feature-i encoder as an affine map of x: f_i(x) = ReLU(w . x + b).
template <typename Scalar>
std::pair<Vector<Scalar>, Scalar> effective_encoder_affine(const SaeParams<Scalar>& p,
                                                           Eigen::Index i) {
  if (i < 0 || i >= p.features()) throw ArgumentError("feature index out of range");
  Vector<Scalar> w = p.w_enc.row(i).transpose();
  Scalar b = p.b_enc(i);
  if (p.subtract_decoder_bias) b -= w.dot(p.b_dec);
  return {std::move(w), b};
}

/// Whether the pre-ReLU value of feature i lies in [lower, upper).
template <typename Scalar, typename Derived>
bool region_membership(const SaeParams<Scalar>& p, Eigen::Index i,
                       const Eigen::MatrixBase<Derived>& x, double lower, double upper) {
  if (!(lower < upper)) throw ArgumentError("region bounds need lower < upper");
  if (x.size() != p.dim()) throw ShapeError("region query has wrong dimension");
  const auto [w, b] = effective_encoder_affine(p, i);
  const double pre = static_cast<double>(w.dot(x.template cast<Scalar>()) + b);
  return lower <= pre && pre < upper;
}

/// Activity summary per feature over a shard. `dead` features never fire; `ultra_low` ones
/// fire too rarely or too weakly. Analyses skip anything flagged.
struct FeatureHealth {
  std::vector<bool> dead;
  std::vector<bool> ultra_low;
  std::vector<double> density;
  std::vector<double> max_activation;

  bool flagged(std::size_t i) const { return dead.at(i) || ultra_low.at(i); }
  std::size_t size() const { return dead.size(); }
  std::vector<std::size_t> alive() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (!flagged(i)) out.push_back(i);
    return out;
  }
};

template <typename Scalar>
FeatureHealth dead_feature_mask(const SaeParams<Scalar>& p, const ActivationShard& shard,
                                double density_floor, double value_floor) {
  if (density_floor < 0 || value_floor < 0) throw ArgumentError("floors must be nonnegative");
  const auto f = static_cast<std::size_t>(p.features());
  std::vector<std::size_t> counts(f, 0);
  std::vector<double> peak(f, 0.0);
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < shard.size(); start += kChunk) {
    const std::size_t end = std::min(shard.size(), start + kChunk);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = start + k;
    const Matrix<Scalar> codes = encode(p, shard.gather(idx));
    for (std::size_t i = 0; i < f; ++i) {
      const auto row = codes.row(static_cast<Eigen::Index>(i));
      counts[i] += static_cast<std::size_t>((row.array() > Scalar(0)).count());
      if (row.size() > 0) peak[i] = std::max(peak[i], static_cast<double>(row.maxCoeff()));
    }
  }
  FeatureHealth h;
  const double n = static_cast<double>(std::max<std::size_t>(shard.size(), 1));
  for (std::size_t i = 0; i < f; ++i) {
    const double density = static_cast<double>(counts[i]) / n;
    h.dead.push_back(counts[i] == 0);
    h.ultra_low.push_back(counts[i] > 0 && (density < density_floor || peak[i] < value_floor));
    h.density.push_back(density);
    h.max_activation.push_back(peak[i]);
  }
  return h;
}

/// Optional pass: re-point dead features at the worst-reconstructed datapoints.
/// Returns the number of features resampled.
template <typename Scalar>
std::size_t resample_dead_features(SaeParams<Scalar>& p, const ActivationShard& shard,
                                   const FeatureHealth& health, double encoder_scale = 0.2) {
  std::vector<std::size_t> dead;
  for (std::size_t i = 0; i < health.size(); ++i)
    if (health.dead[i]) dead.push_back(i);
  if (dead.empty() || shard.empty()) return 0;
  const MatrixXd x = shard.as_columns();
  const Matrix<Scalar> err = decode(p, encode(p, x)) - x.template cast<Scalar>();
  const Vector<Scalar> loss = err.colwise().squaredNorm().transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(loss.size()));
  for (Eigen::Index k = 0; k < loss.size(); ++k) order[static_cast<std::size_t>(k)] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return loss(a) > loss(b); });
  std::size_t done = 0;
  for (std::size_t k = 0; k < dead.size() && k < order.size(); ++k) {
    Vector<Scalar> dir = err.col(order[k]);
    const Scalar norm = dir.norm();
    if (!(norm > Scalar(0))) continue;
    dir = -dir / norm;  // residual x - x_hat
    const auto i = static_cast<Eigen::Index>(dead[k]);
    p.w_dec.col(i) = dir;
    p.w_enc.row(i) = static_cast<Scalar>(encoder_scale) * dir.transpose();
    p.b_enc(i) = Scalar(0);
    ++done;
  }
  return done;
}

}  // namespace saetrack

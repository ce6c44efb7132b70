#include "saetrack/analysis.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace saetrack {

const char* to_string(SimilarityMetric m) {
  switch (m) {
    case SimilarityMetric::kCosine: return "cosine";
    case SimilarityMetric::kJaccard: return "jaccard";
    case SimilarityMetric::kWeightedJaccard: return "weighted_jaccard";
  }
  return "?";
}

SimilarityMetric similarity_metric_from_string(const std::string& s) {
  if (s == "cosine") return SimilarityMetric::kCosine;
  if (s == "jaccard") return SimilarityMetric::kJaccard;
  if (s == "weighted_jaccard") return SimilarityMetric::kWeightedJaccard;
  throw ArgumentError("unknown metric '" + s + "'");
}

const char* to_string(Space s) { return s == Space::kActivation ? "activation" : "feature"; }

Space space_from_string(const std::string& s) {
  if (s == "activation") return Space::kActivation;
  if (s == "feature") return Space::kFeature;
  throw ArgumentError("unknown space '" + s + "'");
}

const char* to_string(FeatureLevel l) {
  switch (l) {
    case FeatureLevel::kTokenLevel: return "token_level";
    case FeatureLevel::kWeakConcept: return "weak_concept";
    case FeatureLevel::kConceptLevel: return "concept_level";
    case FeatureLevel::kNoise: return "noise";
  }
  return "?";
}

const char* to_string(TransitionPattern p) {
  switch (p) {
    case TransitionPattern::kMaintaining: return "maintaining";
    case TransitionPattern::kShifting: return "shifting";
    case TransitionPattern::kGrouping: return "grouping";
  }
  return "?";
}

namespace {

void check_aligned(const TrackRun& run, const std::vector<ActivationShard>& shards) {
  if (run.entries.size() != shards.size()) {
    throw ArgumentError("run has " + std::to_string(run.entries.size()) + " entries but " +
                        std::to_string(shards.size()) + " shards were given");
  }
  for (std::size_t t = 0; t < shards.size(); ++t) {
    if (run.entries[t].checkpoint_step != shards[t].checkpoint_step()) {
      throw ArgumentError("shard at index " + std::to_string(t) + " is checkpoint " +
                          std::to_string(shards[t].checkpoint_step()) + ", run expects " +
                          std::to_string(run.entries[t].checkpoint_step));
    }
  }
}

// Activation of one feature on every record of the shard.
VectorXd feature_activations(const SaeParamsd& p, const ActivationShard& shard, std::size_t feature) {
  if (static_cast<Eigen::Index>(feature) >= p.features()) {
    throw ArgumentError("feature " + std::to_string(feature) + " out of range");
  }
  if (static_cast<Eigen::Index>(shard.dim()) != p.dim()) throw ShapeError("shard dim != SAE dim");
  const auto [w, b] = effective_encoder_affine(p, static_cast<Eigen::Index>(feature));
  VectorXd pre = shard.values().cast<double>() * w;
  pre.array() += b;
  return pre.cwiseMax(0.0);
}

double baseline_mean(const ActivationShard& shard, const SaeParamsd* encoder, std::size_t m,
                     std::uint64_t seed, SimilarityMetric metric) {
  m = std::min(m, shard.size());
  if (m < 2) throw ArgumentError("random baseline needs at least 2 datapoints");
  const auto idx = sample_random_indices(shard, m, seed);
  const MatrixXd x = shard.gather(idx);
  if (encoder) return pairwise_mean_similarity(encode(*encoder, x), metric);
  return pairwise_mean_similarity(x, metric);
}

double cosine_or_one(const VectorXd& a, const VectorXd& b) {
  if (a == b) return 1.0;
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw NumericError("zero-norm decoder column");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace

TopKSet select_topk_partial(const SaeParamsd& params, const ActivationShard& shard,
                            std::size_t feature, std::size_t k) {
  const VectorXd act = feature_activations(params, shard, feature);
  std::vector<std::size_t> positive;
  for (Eigen::Index r = 0; r < act.size(); ++r)
    if (act(r) > 0) positive.push_back(static_cast<std::size_t>(r));
  // Records are in canonical id order, so a stable sort breaks ties by (context, position).
  std::stable_sort(positive.begin(), positive.end(), [&](std::size_t a, std::size_t b) {
    return act(static_cast<Eigen::Index>(a)) > act(static_cast<Eigen::Index>(b));
  });
  if (positive.size() > k) positive.resize(k);
  TopKSet out;
  out.feature = feature;
  out.k = positive.size();
  for (std::size_t r : positive) {
    out.ids.push_back(shard.ids()[r]);
    out.activations.push_back(act(static_cast<Eigen::Index>(r)));
  }
  return out;
}

TopKSet select_topk(const SaeParamsd& params, const ActivationShard& shard, std::size_t feature,
                    std::size_t k) {
  if (k == 0) throw ArgumentError("k must be at least 1");
  TopKSet out = select_topk_partial(params, shard, feature, k);
  if (out.k < k) {
    throw SelectionError("feature " + std::to_string(feature) + " activates on only " +
                         std::to_string(out.k) + " datapoints; use k <= " + std::to_string(out.k));
  }
  return out;
}

ProgressSeries progress_series(const TrackRun& run, const std::vector<ActivationShard>& shards,
                               const TopKSet& topk, const ProgressOptions& options,
                               std::span<const double> baseline) {
  check_aligned(run, shards);
  if (!baseline.empty() && baseline.size() != shards.size()) {
    throw ArgumentError("baseline has " + std::to_string(baseline.size()) + " values for " +
                        std::to_string(shards.size()) + " checkpoints");
  }
  if (options.space == Space::kActivation && options.metric != SimilarityMetric::kCosine) {
    throw ArgumentError("Jaccard metrics apply to feature space only");
  }
  ProgressSeries out{topk.feature, options.space, options.metric, {}};
  for (std::size_t t = 0; t < shards.size(); ++t) {
    const auto& shard = shards[t];
    const SaeParamsd* encoder = options.space == Space::kFeature ? &run.entries[t].params : nullptr;
    MatrixXd top = shard.gather(lookup_indices(shard, topk.ids));
    if (encoder) top = encode(*encoder, top);
    ProgressPoint pt;
    pt.step = shard.checkpoint_step();
    pt.top_mean = pairwise_mean_similarity(top, options.metric);
    pt.baseline_mean = baseline.empty() ? baseline_mean(shard, encoder, options.m_baseline,
                                                        options.baseline_seed, options.metric)
                                        : baseline[t];
    pt.value = pt.top_mean - pt.baseline_mean;
    out.values.push_back(pt);
  }
  return out;
}

std::vector<double> baseline_similarity(const TrackRun& run,
                                        const std::vector<ActivationShard>& shards,
                                        const ProgressOptions& options) {
  check_aligned(run, shards);
  std::vector<double> out;
  for (std::size_t t = 0; t < shards.size(); ++t) {
    const SaeParamsd* encoder = options.space == Space::kFeature ? &run.entries[t].params : nullptr;
    out.push_back(baseline_mean(shards[t], encoder, options.m_baseline, options.baseline_seed,
                                options.metric));
  }
  return out;
}

std::vector<AlignmentPoint> decoder_alignment_series(const TrackRun& run, std::size_t feature) {
  if (run.entries.empty()) throw ArgumentError("empty track run");
  const auto& final_params = run.final_entry().params;
  if (static_cast<Eigen::Index>(feature) >= final_params.features()) {
    throw ArgumentError("feature " + std::to_string(feature) + " out of range");
  }
  const VectorXd last = final_params.w_dec.col(static_cast<Eigen::Index>(feature));
  std::vector<AlignmentPoint> out;
  for (const auto& e : run.entries) {
    out.push_back({e.checkpoint_step,
                   cosine_or_one(e.params.w_dec.col(static_cast<Eigen::Index>(feature)), last)});
  }
  return out;
}

std::size_t Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

double Histogram::median() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  const double half = static_cast<double>(n) / 2.0;
  double seen = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (seen + static_cast<double>(counts[b]) >= half && counts[b] > 0) {
      return bin_lo(b) + width * (half - seen) / static_cast<double>(counts[b]);
    }
    seen += static_cast<double>(counts[b]);
  }
  return bin_hi(counts.size() - 1);
}

std::vector<double> alignment_values(const TrackRun& run, std::uint64_t checkpoint_step,
                                     std::span<const std::size_t> features) {
  const auto at = run.index_of(checkpoint_step);
  if (at < 0) throw ArgumentError("checkpoint " + std::to_string(checkpoint_step) + " not in run");
  const auto& cur = run.entries[static_cast<std::size_t>(at)].params;
  const auto& last = run.final_entry().params;
  std::vector<double> out;
  for (std::size_t f : features) {
    const auto i = static_cast<Eigen::Index>(f);
    out.push_back(cosine_or_one(cur.w_dec.col(i), last.w_dec.col(i)));
  }
  return out;
}

Histogram alignment_distribution(const TrackRun& run, std::uint64_t checkpoint_step,
                                 std::span<const std::size_t> features, double bin_width) {
  if (!(bin_width > 0)) throw ArgumentError("bin width must be positive");
  Histogram h;
  h.width = bin_width;
  const auto bins = static_cast<std::size_t>(std::llround(2.0 / bin_width));
  h.counts.assign(bins, 0);
  for (double c : alignment_values(run, checkpoint_step, features)) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((c + 1.0) / bin_width));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

std::vector<std::size_t> alive_features(const TrackRun& run, const ActivationShard& final_shard,
                                        const AnalysisThresholds& thresholds) {
  if (run.entries.empty()) throw ArgumentError("empty track run");
  return dead_feature_mask(run.final_entry().params, final_shard, thresholds.density_floor,
                           thresholds.value_floor)
      .alive();
}

double token_multiset_jaccard(std::span<const DatapointId> a, std::span<const DatapointId> b) {
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& id : a) ++counts[id.token_id].first;
  for (const auto& id : b) ++counts[id.token_id].second;
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (const auto& [tok, c] : counts) {
    lo += std::min(c.first, c.second);
    hi += std::max(c.first, c.second);
  }
  return hi ? static_cast<double>(lo) / static_cast<double>(hi) : 0.0;
}

double token_set_jaccard(std::span<const DatapointId> a, std::span<const DatapointId> b) {
  std::map<std::uint32_t, int> membership;
  for (const auto& id : a) membership[id.token_id] |= 1;
  for (const auto& id : b) membership[id.token_id] |= 2;
  std::size_t both = 0;
  for (const auto& [tok, m] : membership)
    if (m == 3) ++both;
  return membership.empty() ? 0.0 : static_cast<double>(both) / static_cast<double>(membership.size());
}

std::vector<TopKSet> per_checkpoint_topk(const TrackRun& run,
                                         const std::vector<ActivationShard>& shards,
                                         std::size_t feature, std::size_t k) {
  check_aligned(run, shards);
  std::vector<TopKSet> out;
  for (std::size_t t = 0; t < shards.size(); ++t) {
    out.push_back(select_topk_partial(run.entries[t].params, shards[t], feature, k));
  }
  return out;
}

std::optional<std::size_t> Trajectory::formed_index() const {
  if (!formed_from) return std::nullopt;
  for (std::size_t t = 0; t < steps.size(); ++t)
    if (steps[t] == *formed_from) return t;
  return std::nullopt;
}

double Trajectory::mean_angular_step(std::size_t from) const {
  const auto n = static_cast<std::size_t>(points.cols());
  if (n < 2 || from + 1 >= n) return 0.0;
  double sum = 0.0;
  for (std::size_t t = from; t + 1 < n; ++t) {
    const auto a = points.col(static_cast<Eigen::Index>(t));
    const auto b = points.col(static_cast<Eigen::Index>(t + 1));
    const double c = std::clamp(cosine_similarity(a, b), -1.0, 1.0);
    sum += std::acos(c);
  }
  return sum / static_cast<double>(n - 1 - from);
}

Trajectory feature_trajectory(const TrackRun& run, const std::vector<ActivationShard>& shards,
                              std::size_t feature, std::size_t k, double theta_formed) {
  const auto topk = per_checkpoint_topk(run, shards, feature, k);
  Trajectory tr;
  tr.feature = feature;
  const auto n = shards.size();
  tr.points.resize(run.entries.front().params.dim(), static_cast<Eigen::Index>(n));
  for (std::size_t t = 0; t < n; ++t) {
    tr.steps.push_back(run.entries[t].checkpoint_step);
    tr.points.col(static_cast<Eigen::Index>(t)) =
        run.entries[t].params.w_dec.col(static_cast<Eigen::Index>(feature));
    tr.overlap_with_final.push_back(token_multiset_jaccard(topk[t].ids, topk.back().ids));
  }
  std::optional<std::size_t> onset;
  for (std::size_t t = n; t-- > 0;) {
    if (tr.overlap_with_final[t] < theta_formed) break;
    onset = t;
  }
  if (onset) tr.formed_from = tr.steps[*onset];
  return tr;
}

LevelClassification classify_feature_level(std::span<const std::uint32_t> token_ids,
                                           double progress_final,
                                           const AnalysisThresholds& thresholds) {
  if (token_ids.size() < 5) throw ArgumentError("feature-level classification needs k >= 5");
  std::map<std::uint32_t, std::size_t> counts;
  for (auto t : token_ids) ++counts[t];
  std::vector<std::size_t> sorted;
  for (const auto& [tok, c] : counts) sorted.push_back(c);
  std::sort(sorted.rbegin(), sorted.rend());
  const double k = static_cast<double>(token_ids.size());
  LevelClassification out;
  out.distinct_tokens = counts.size();
  out.dominant_share = static_cast<double>(sorted.front()) / k;
  const std::size_t top_n = std::min(thresholds.weak_max_tokens, sorted.size());
  out.top_tokens_share =
      static_cast<double>(std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top_n), std::size_t{0})) / k;
  if (out.dominant_share >= thresholds.token_share) {
    out.level = FeatureLevel::kTokenLevel;
  } else if (out.top_tokens_share >= thresholds.token_share) {
    out.level = FeatureLevel::kWeakConcept;
  } else if (progress_final < thresholds.theta_noise) {
    out.level = FeatureLevel::kNoise;
  } else {
    out.level = FeatureLevel::kConceptLevel;
  }
  return out;
}

TransitionClassification classify_transition(const TrackRun& run,
                                             const std::vector<ActivationShard>& shards,
                                             std::size_t feature,
                                             const AnalysisThresholds& thresholds,
                                             std::uint64_t baseline_seed) {
  check_aligned(run, shards);
  auto coherence = [&](std::size_t t) -> std::pair<TopKSet, double> {
    TopKSet top = select_topk_partial(run.entries[t].params, shards[t], feature, thresholds.k);
    if (top.ids.size() < 2) return {std::move(top), 0.0};
    const MatrixXd x = shards[t].gather(lookup_indices(shards[t], top.ids));
    const double base = baseline_mean(shards[t], nullptr, thresholds.m_baseline, baseline_seed,
                                      SimilarityMetric::kCosine);
    return {std::move(top), pairwise_mean_similarity(x, SimilarityMetric::kCosine) - base};
  };
  auto [first, first_coh] = coherence(0);
  auto [last, last_coh] = coherence(shards.size() - 1);
  TransitionClassification out;
  out.token_overlap = token_set_jaccard(first.ids, last.ids);
  out.first_coherence = first_coh;
  out.final_coherence = last_coh;
  if (out.token_overlap >= thresholds.theta_keep) {
    out.pattern = TransitionPattern::kMaintaining;
  } else if (first_coh < thresholds.theta_noise && last_coh >= thresholds.theta_noise) {
    out.pattern = TransitionPattern::kGrouping;
  } else {
    out.pattern = TransitionPattern::kShifting;
  }
  return out;
}

ContinuityDeltas continuity_deltas(const ActivationShard& a, const ActivationShard& b) {
  if (a.dim() != b.dim()) throw ShapeError("continuity: shards differ in dim");
  ContinuityDeltas out;
  double sum = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  const auto ia = a.ids();
  const auto ib = b.ids();
  while (i < ia.size() && j < ib.size()) {
    if (ia[i] < ib[j]) {
      ++i;
    } else if (ib[j] < ia[i]) {
      ++j;
    } else {
      const Vector<float> va = a.row(i).transpose();
      const Vector<float> vb = b.row(j).transpose();
      const double d = activation_displacement(va, vb);
      out.max = std::max(out.max, d);
      sum += d;
      ++out.shared;
      ++i;
      ++j;
    }
  }
  if (out.shared == 0) throw ArgumentError("continuity: shards share no datapoints");
  out.mean = sum / static_cast<double>(out.shared);
  return out;
}

CollapseReport detect_collapse(const std::vector<ActivationShard>& shards,
                               std::uint64_t baseline_seed, std::size_t m_baseline,
                               double epsilon_collapse) {
  if (m_baseline < 2) throw ArgumentError("collapse detection needs m_baseline >= 2");
  CollapseReport out;
  out.epsilon = epsilon_collapse;
  for (const auto& shard : shards) {
    const double sim =
        baseline_mean(shard, nullptr, m_baseline, baseline_seed, SimilarityMetric::kCosine);
    out.steps.push_back(shard.checkpoint_step());
    out.baseline.push_back(sim);
    if (1.0 - sim < epsilon_collapse) out.flagged.push_back(shard.checkpoint_step());
  }
  return out;
}

MatrixXd project_2d(const MatrixXd& vectors) {
  if (vectors.cols() < 2) throw ArgumentError("projection needs at least 2 vectors");
  MatrixXd centered = vectors.transpose();  // N x D
  centered.rowwise() -= centered.colwise().mean();
  const double scale = centered.cwiseAbs().maxCoeff();
  if (!(scale > 0)) throw NumericError("degenerate projection: all vectors coincide");
  Eigen::JacobiSVD<MatrixXd> svd(centered, Eigen::ComputeThinV);
  MatrixXd axes = MatrixXd::Zero(centered.cols(), 2);
  const Eigen::Index rank = std::min<Eigen::Index>(2, svd.matrixV().cols());
  for (Eigen::Index c = 0; c < rank; ++c) {
    if (svd.singularValues()(c) <= 1e-12 * svd.singularValues()(0)) break;
    VectorXd axis = svd.matrixV().col(c);
    Eigen::Index at = 0;
    axis.cwiseAbs().maxCoeff(&at);
    if (axis(at) < 0) axis = -axis;
    axes.col(c) = axis;
  }
  return centered * axes;
}

}  // namespace saetrack

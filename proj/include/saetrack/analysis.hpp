#pragma once

// Measurements over a track run: top-k datapoint sets, progress measures, decoder drift,
// trajectories with formation onset, feature/transition classification, activation continuity,
// collapse detection and a 2-D projection.

#include "saetrack/activation_store.hpp"
#include "saetrack/sae.hpp"
#include "saetrack/similarity.hpp"
#include "saetrack/track.hpp"

#include <optional>
#include <span>
#include <vector>

namespace saetrack {

/// Default thresholds. All are heuristics with no canonical values; every one is configurable.
struct AnalysisThresholds {
  std::size_t k = 25;
  double theta_formed = 0.5;
  double theta_keep = 0.5;
  double theta_noise = 0.1;
  double epsilon_collapse = 0.05;
  std::size_t m_baseline = 256;
  double bin_width = 0.05;
  double token_share = 0.8;         // dominant-token share for token-level features
  std::size_t weak_max_tokens = 3;  // weak concept: this many tokens cover token_share
  double density_floor = 0.0;
  double value_floor = 0.0;
};

// ---------------------------------------------------------------------------------------------
// Top-k datapoint sets

struct TopKSet {
  std::size_t feature = 0;
  std::size_t k = 0;
  std::vector<DatapointId> ids;      // descending activation, ties by (context, position)
  std::vector<double> activations;
};

/// The k datapoints with the largest activation of `feature`. Throws SelectionError when fewer
/// than k datapoints activate it.
TopKSet select_topk(const SaeParamsd& params, const ActivationShard& shard, std::size_t feature,
                    std::size_t k);
/// Like select_topk but returns however many positive datapoints exist, up to k.
TopKSet select_topk_partial(const SaeParamsd& params, const ActivationShard& shard,
                            std::size_t feature, std::size_t k);

// ---------------------------------------------------------------------------------------------
// Progress measure

enum class Space { kActivation, kFeature };
const char* to_string(Space s);
Space space_from_string(const std::string& s);

struct ProgressPoint {
  std::uint64_t step = 0;
  double value = 0;        // top-set mean similarity minus baseline mean similarity
  double top_mean = 0;
  double baseline_mean = 0;
};

struct ProgressSeries {
  std::size_t feature = 0;
  Space space = Space::kActivation;
  SimilarityMetric metric = SimilarityMetric::kCosine;
  std::vector<ProgressPoint> values;
};

struct ProgressOptions {
  SimilarityMetric metric = SimilarityMetric::kCosine;
  Space space = Space::kActivation;
  std::uint64_t baseline_seed = 0;
  std::size_t m_baseline = 256;  // capped at the shard size
};

/// Per checkpoint t: mean pairwise similarity of the top-k datapoints (raw activations, or their
/// SAE[t] codes in feature space) minus that of a random baseline sample of the same shard.
/// A non-empty `baseline` (one value per checkpoint, from baseline_similarity with the same
/// options) is used instead of resampling.
ProgressSeries progress_series(const TrackRun& run, const std::vector<ActivationShard>& shards,
                               const TopKSet& topk, const ProgressOptions& options,
                               std::span<const double> baseline = {});

/// The random-baseline term alone, per checkpoint.
std::vector<double> baseline_similarity(const TrackRun& run,
                                        const std::vector<ActivationShard>& shards,
                                        const ProgressOptions& options);

// ---------------------------------------------------------------------------------------------
// Decoder drift

struct AlignmentPoint {
  std::uint64_t step = 0;
  double cosine = 0;
};

/// Cosine of each checkpoint's decoder column `feature` to the final one. Final entry is 1.
std::vector<AlignmentPoint> decoder_alignment_series(const TrackRun& run, std::size_t feature);

struct Histogram {
  double lo = -1.0;
  double width = 0.05;
  std::vector<std::size_t> counts;

  double bin_lo(std::size_t b) const { return lo + width * static_cast<double>(b); }
  double bin_hi(std::size_t b) const { return lo + width * static_cast<double>(b + 1); }
  std::size_t total() const;
  double median() const;  // midpoint-interpolated from the bins
};

/// Histogram over [-1, 1] of decoder cosine-to-final for `features` at `checkpoint_step`.
/// The top bin is closed so cosine 1 lands in it.
Histogram alignment_distribution(const TrackRun& run, std::uint64_t checkpoint_step,
                                 std::span<const std::size_t> features, double bin_width = 0.05);
/// Raw cosines behind alignment_distribution.
std::vector<double> alignment_values(const TrackRun& run, std::uint64_t checkpoint_step,
                                     std::span<const std::size_t> features);

/// Features not flagged by dead_feature_mask on the final checkpoint.
std::vector<std::size_t> alive_features(const TrackRun& run, const ActivationShard& final_shard,
                                        const AnalysisThresholds& thresholds = {});

// ---------------------------------------------------------------------------------------------
// Trajectories

struct Trajectory {
  std::size_t feature = 0;
  std::vector<std::uint64_t> steps;
  MatrixXd points;                       // D x T decoder columns
  std::vector<double> overlap_with_final;  // token multiset Jaccard of per-checkpoint top-k
  std::optional<std::uint64_t> formed_from;

  /// Index into `steps` of formed_from, if any.
  std::optional<std::size_t> formed_index() const;
  /// Mean angle (radians) between consecutive decoder columns from index `from` on.
  double mean_angular_step(std::size_t from) const;
};

/// Multiset Jaccard over token ids: sum of min counts / sum of max counts.
double token_multiset_jaccard(std::span<const DatapointId> a, std::span<const DatapointId> b);
/// Set Jaccard over distinct token ids.
double token_set_jaccard(std::span<const DatapointId> a, std::span<const DatapointId> b);

/// Top-k of `feature` at every checkpoint, selected with that checkpoint's SAE.
std::vector<TopKSet> per_checkpoint_topk(const TrackRun& run,
                                         const std::vector<ActivationShard>& shards,
                                         std::size_t feature, std::size_t k);

Trajectory feature_trajectory(const TrackRun& run, const std::vector<ActivationShard>& shards,
                              std::size_t feature, std::size_t k, double theta_formed);

// ---------------------------------------------------------------------------------------------
// Classification

enum class FeatureLevel { kTokenLevel, kWeakConcept, kConceptLevel, kNoise };
enum class TransitionPattern { kMaintaining, kShifting, kGrouping };
const char* to_string(FeatureLevel l);
const char* to_string(TransitionPattern p);

struct LevelClassification {
  FeatureLevel level = FeatureLevel::kNoise;
  double dominant_share = 0;   // share of the most frequent token
  double top_tokens_share = 0; // share of the weak_max_tokens most frequent tokens
  std::size_t distinct_tokens = 0;
};

LevelClassification classify_feature_level(std::span<const std::uint32_t> token_ids,
                                           double progress_final,
                                           const AnalysisThresholds& thresholds = {});

struct TransitionClassification {
  TransitionPattern pattern = TransitionPattern::kShifting;
  double token_overlap = 0;     // token-set Jaccard of first vs final top-k
  double first_coherence = 0;   // mean pairwise cosine of the top-k minus baseline
  double final_coherence = 0;
};

TransitionClassification classify_transition(const TrackRun& run,
                                             const std::vector<ActivationShard>& shards,
                                             std::size_t feature,
                                             const AnalysisThresholds& thresholds = {},
                                             std::uint64_t baseline_seed = 0);

// ---------------------------------------------------------------------------------------------
// Continuity, collapse, projection

struct ContinuityDeltas {
  double max = 0;
  double mean = 0;
  std::size_t shared = 0;
};

/// Euclidean activation change per shared datapoint between two shards.
ContinuityDeltas continuity_deltas(const ActivationShard& a, const ActivationShard& b);

struct CollapseReport {
  double epsilon = 0;
  std::vector<std::uint64_t> steps;
  std::vector<double> baseline;  // random-baseline mean pairwise cosine per step
  std::vector<std::uint64_t> flagged;
};

CollapseReport detect_collapse(const std::vector<ActivationShard>& shards,
                               std::uint64_t baseline_seed, std::size_t m_baseline,
                               double epsilon_collapse);

/// Centered PCA onto the top two principal axes of the columns of `vectors`; N x 2 result.
/// Each axis is signed so its largest-magnitude loading is positive.
MatrixXd project_2d(const MatrixXd& vectors);

}  // namespace saetrack

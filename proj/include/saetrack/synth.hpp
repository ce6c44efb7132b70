#pragma once

// Synthetic checkpoint tracks with planted ground truth: token clusters that are tight from
// the first checkpoint, concept clusters that condense out of isotropic noise, planar rotation
// schedules, collapse bursts, and a hard per-step displacement bound.

#include "saetrack/activation_store.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace saetrack::synth {

enum class ClusterKind { kToken, kConcept, kWeakConcept };

const char* to_string(ClusterKind kind);

/// Rotation of a cluster's point cloud in the plane of its initial and final directions:
/// `angle_per_step` radians per checkpoint during [start, start + steps), then hold.
struct RotationSpec {
  double angle_per_step = 0.0;
  std::size_t start = 0;
  std::size_t steps = 0;

  double total_angle() const { return angle_per_step * static_cast<double>(steps); }
  double angle_at(std::size_t t) const;
};

struct ClusterSpec {
  ClusterKind kind = ClusterKind::kToken;
  std::size_t size = 40;
  std::size_t token_pool = 0;  // 0 picks the kind default: 1 token, 12 concept, 2 weak
  std::size_t onset = 1;       // concept kinds: first checkpoint index with mixing weight > 0
  double rate = 0.5;           // mixing-weight increment per checkpoint; 0 ramps to the end
  RotationSpec rotation;
};

struct CollapseWindow {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  double blend = 0.95;
};

struct SynthConfig {
  std::size_t dim = 64;
  std::size_t steps = 12;
  std::vector<std::uint64_t> checkpoint_steps;  // empty means 0..steps-1
  std::vector<ClusterSpec> clusters;
  std::size_t background_points = 0;
  double noise_sigma = 0.25;
  // Step size of the planted dynamics: rotations advance eta * angle_per_step per checkpoint.
  // Per-step displacement never exceeds eta * lipschitz * grad_bound.
  double eta = 1.0;
  double lipschitz = 1.0;
  double grad_bound = 4.0;
  std::optional<CollapseWindow> collapse;
  std::size_t context_length = 16;
  std::uint64_t seed = 0;

  double eta_bound() const { return eta * lipschitz * grad_bound; }
  std::vector<std::uint64_t> resolved_steps() const;
  void validate() const;
};

/// D=64, 8 token + 6 concept + 2 weak-concept clusters of 40 points, 12 checkpoints. Concept
/// kinds start at onsets 1..3 and ramp linearly to the final checkpoint.
SynthConfig default_config(std::uint64_t seed = 0);

struct ClusterTruth {
  ClusterKind kind = ClusterKind::kToken;
  std::vector<std::uint32_t> token_ids;
  std::size_t onset = 0;      // checkpoint index where convergence starts (0 for token kind)
  std::vector<double> mixing; // per checkpoint weight on the structured component
  MatrixXd centers;           // D x steps, unit center direction per checkpoint
  RotationSpec rotation;              // as applied, angle_per_step already scaled by eta
  std::vector<double> cos_to_final;  // closed-form center cosine to its final direction
};

struct GroundTruth {
  std::vector<DatapointId> ids;         // one per datapoint, canonical order
  std::vector<int> assignment;          // cluster index per datapoint, -1 for background
  std::vector<ClusterTruth> clusters;
  std::vector<std::uint64_t> checkpoint_steps;
  double eta_bound = 0;
  std::optional<CollapseWindow> collapse;

  std::vector<DatapointId> members(std::size_t cluster) const;
};

struct Track {
  std::vector<ActivationShard> shards;
  GroundTruth truth;
};

Track generate_track(const SynthConfig& config);

/// Brute-force within-cluster mean pairwise cosine, [cluster][checkpoint index].
std::vector<std::vector<double>> oracle_summary(const GroundTruth& truth,
                                                const std::vector<ActivationShard>& shards);

nlohmann::json to_json(const SynthConfig& config);
/// Missing keys take SynthConfig defaults; a missing cluster list takes default_config's.
SynthConfig synth_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

void write_track(const Track& track, const std::filesystem::path& dir);

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace saetrack::synth

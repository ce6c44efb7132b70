#pragma once

// Helpers shared by the unit tests and the acceptance suite: the small-SAE configuration used
// on synthetic tracks, planted-cluster to feature matching, and brute-force oracles.

#include "saetrack/analysis.hpp"
#include "saetrack/synth.hpp"
#include "saetrack/track.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace saetrack::testing {

// F = D, strong L1: on a 64-d track with 16 clusters this yields roughly one active feature per
// datapoint, which is what makes feature-space similarities interpretable.
inline TrackConfig desk_track_config(std::uint64_t seed, std::size_t dim = 64) {
  TrackConfig tc;
  tc.budget = {128000, 32000, {}};
  tc.train.learning_rate = 1e-3;
  tc.train.seed = seed;
  tc.train.log_every = 500;
  tc.sae.dim = static_cast<Eigen::Index>(dim);
  tc.sae.features = static_cast<Eigen::Index>(dim);
  tc.sae.lambda = 0.3;
  return tc;
}

struct ClusterMatch {
  std::size_t cluster = 0;
  std::size_t feature = 0;
  std::size_t overlap = 0;  // members among the feature's final top-k
  TopKSet topk;
};

// For each planted cluster, the live feature whose final top-k holds the most cluster members
// (ties to the lower index).
inline std::vector<ClusterMatch> match_clusters(const TrackRun& run, const synth::Track& track,
                                                std::size_t k = 25) {
  const auto& params = run.final_entry().params;
  const auto& shard = track.shards.back();
  std::vector<TopKSet> tops;
  for (auto f : alive_features(run, shard)) {
    auto t = select_topk_partial(params, shard, f, k);
    if (t.k == k) tops.push_back(std::move(t));
  }
  std::vector<ClusterMatch> out;
  for (std::size_t c = 0; c < track.truth.clusters.size(); ++c) {
    const auto members = track.truth.members(c);
    const std::set<DatapointId> set(members.begin(), members.end());
    ClusterMatch best{c, 0, 0, {}};
    for (const auto& t : tops) {
      std::size_t o = 0;
      for (const auto& id : t.ids) o += set.count(id);
      if (o > best.overlap) best = {c, t.feature, o, t};
    }
    out.push_back(std::move(best));
  }
  return out;
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) r[idx[m]] = rank;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(average_ranks(a), average_ranks(b));
}

// Sum of absolute consecutive differences.
inline double total_variation(const std::vector<double>& v) {
  double tv = 0;
  for (std::size_t i = 1; i < v.size(); ++i) tv += std::abs(v[i] - v[i - 1]);
  return tv;
}

// All-pairs loops with no Eigen reductions, as an oracle for pairwise_mean_similarity.
inline double brute_pairwise(const MatrixXd& x, SimilarityMetric metric) {
  const auto n = x.cols();
  const auto d = x.rows();
  double sum = 0;
  long pairs = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = j + 1; k < n; ++k) {
      double s = 0;
      if (metric == SimilarityMetric::kCosine) {
        double dot = 0, nj = 0, nk = 0;
        bool same = true;
        for (Eigen::Index r = 0; r < d; ++r) {
          dot += x(r, j) * x(r, k);
          nj += x(r, j) * x(r, j);
          nk += x(r, k) * x(r, k);
          same = same && x(r, j) == x(r, k);
        }
        if (nj > 0 && nk > 0) s = same ? 1.0 : dot / (std::sqrt(nj) * std::sqrt(nk));
      } else if (metric == SimilarityMetric::kJaccard) {
        int inter = 0, uni = 0;
        for (Eigen::Index r = 0; r < d; ++r) {
          const bool a = x(r, j) > 0, b = x(r, k) > 0;
          inter += a && b;
          uni += a || b;
        }
        s = uni ? static_cast<double>(inter) / uni : 0.0;
      } else {
        double lo = 0, hi = 0;
        for (Eigen::Index r = 0; r < d; ++r) {
          lo += std::min(x(r, j), x(r, k));
          hi += std::max(x(r, j), x(r, k));
        }
        s = hi > 0 ? lo / hi : 0.0;
      }
      sum += s;
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("saetrack-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace saetrack::testing

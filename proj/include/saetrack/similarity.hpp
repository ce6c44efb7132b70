#pragma once

// Pairwise similarity metrics over vector sets (columns of a matrix).

#include "saetrack/common.hpp"

#include <Eigen/Dense>

#include <algorithm>

#include <string>

namespace saetrack {

enum class SimilarityMetric { kCosine, kJaccard, kWeightedJaccard };

const char* to_string(SimilarityMetric m);
SimilarityMetric similarity_metric_from_string(const std::string& s);

/// Cosine u.v / (|u||v|); 0 when either vector is zero, exactly 1 for identical vectors.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  const double nu = u.template cast<double>().norm();
  const double nv = v.template cast<double>().norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  if (u.template cast<double>() == v.template cast<double>()) return 1.0;
  return std::clamp(u.template cast<double>().dot(v.template cast<double>()) / (nu * nv), -1.0, 1.0);
}

/// |supp(u) & supp(v)| / |supp(u) | supp(v)| with supp = entries > 0; two empty supports give 0.
template <typename DerivedA, typename DerivedB>
double jaccard_similarity(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  const auto a = (u.array() > 0);
  const auto b = (v.array() > 0);
  const auto uni = (a || b).count();
  if (uni == 0) return 0.0;
  return static_cast<double>((a && b).count()) / static_cast<double>(uni);
}

/// sum(min(u, v)) / sum(max(u, v)); 0 when the denominator is 0.
template <typename DerivedA, typename DerivedB>
double weighted_jaccard_similarity(const Eigen::MatrixBase<DerivedA>& u,
                                   const Eigen::MatrixBase<DerivedB>& v) {
  const auto ud = u.template cast<double>().array();
  const auto vd = v.template cast<double>().array();
  const double den = ud.max(vd).sum();
  if (den == 0.0) return 0.0;
  return ud.min(vd).sum() / den;
}

template <typename DerivedA, typename DerivedB>
double similarity(SimilarityMetric metric, const Eigen::MatrixBase<DerivedA>& u,
                  const Eigen::MatrixBase<DerivedB>& v) {
  switch (metric) {
    case SimilarityMetric::kCosine: return cosine_similarity(u, v);
    case SimilarityMetric::kJaccard: return jaccard_similarity(u, v);
    case SimilarityMetric::kWeightedJaccard: return weighted_jaccard_similarity(u, v);
  }
  return 0.0;
}

/// Mean similarity over all unordered pairs of columns. The Jaccard variants require
/// nonnegative inputs.
template <typename Derived>
double pairwise_mean_similarity(const Eigen::MatrixBase<Derived>& vectors, SimilarityMetric metric) {
  const Eigen::Index n = vectors.cols();
  if (n < 2) throw ArgumentError("pairwise similarity needs at least 2 vectors");
  if (metric != SimilarityMetric::kCosine && (vectors.array() < 0).any()) {
    throw ArgumentError("Jaccard similarities need nonnegative vectors");
  }
  const MatrixXd x = vectors.template cast<double>();
  double sum = 0.0;
  if (metric == SimilarityMetric::kCosine) {
    MatrixXd unit = x;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double norm = unit.col(j).norm();
      unit.col(j) = norm > 0 ? VectorXd(unit.col(j) / norm) : VectorXd::Zero(x.rows());
    }
    const MatrixXd gram = unit.transpose() * unit;
    for (Eigen::Index k = 1; k < n; ++k) {
      for (Eigen::Index j = 0; j < k; ++j) {
        if (gram(j, k) != 0.0 && x.col(j) == x.col(k)) {
          sum += 1.0;
        } else {
          sum += std::clamp(gram(j, k), -1.0, 1.0);
        }
      }
    }
  } else {
    for (Eigen::Index k = 1; k < n; ++k)
      for (Eigen::Index j = 0; j < k; ++j) sum += similarity(metric, x.col(j), x.col(k));
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

}  // namespace saetrack

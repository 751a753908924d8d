#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hedge/clustering.hpp"
#include "hedge/datamodel.hpp"
#include "hedge/error.hpp"

namespace hedge {

enum class DistributionMode {
  /// softmax over per-cluster sums of max-shifted likelihood weights
  AsWritten,
  /// per-cluster weight mass divided by total mass
  MassNormalized,
};

std::string_view to_string(DistributionMode mode) noexcept;
DistributionMode parse_distribution_mode(std::string_view s);

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct BasicSemanticDistribution {
  std::vector<int> cluster_universe;
  Vector<Scalar> probabilities;
  DistributionMode mode = DistributionMode::AsWritten;
};

using SemanticDistribution = BasicSemanticDistribution<double>;

struct MetricConfig {
  double alpha = 1.0;
  DistributionMode distribution_mode = DistributionMode::AsWritten;
  bool include_baseline_in_clean = false;
};

/// Numerically stable softmax.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Vector<Scalar> shifted = logits.array() - logits.maxCoeff();
  const Vector<Scalar> e = shifted.array().exp();
  return e / e.sum();
}

/// -sum p ln p, with 0 ln 0 = 0.
template <typename Derived>
typename Derived::Scalar shannon_entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar v = p(i);
    if (v > Scalar(0)) h -= v * std::log(v);
  }
  return h;
}

template <typename Scalar>
Scalar shannon_entropy(const BasicSemanticDistribution<Scalar>& d) {
  return shannon_entropy(d.probabilities);
}

/// Cluster-level distribution from per-answer mean log-likelihoods. Answers
/// are weighted by exp(log l_i - max_k log l_k); clusters of the universe
/// with no answers get logit 0 (as written) or mass 0 (mass normalized).
template <typename Scalar>
BasicSemanticDistribution<Scalar> semantic_distribution(std::span<const Scalar> log_likelihoods,
                                                        std::span<const int> cluster_ids,
                                                        std::span<const int> universe, DistributionMode mode) {
  if (log_likelihoods.empty() || universe.empty()) throw Error(ErrorCode::EmptyInput, "no answers or clusters");
  if (log_likelihoods.size() != cluster_ids.size()) {
    throw Error(ErrorCode::LengthMismatch, "log-likelihoods and cluster ids differ in length");
  }
  std::unordered_map<int, Eigen::Index> slot;
  for (std::size_t k = 0; k < universe.size(); ++k) slot.emplace(universe[k], static_cast<Eigen::Index>(k));

  const Scalar max_ll = *std::max_element(log_likelihoods.begin(), log_likelihoods.end());
  Vector<Scalar> logits = Vector<Scalar>::Zero(static_cast<Eigen::Index>(universe.size()));
  for (std::size_t i = 0; i < cluster_ids.size(); ++i) {
    auto it = slot.find(cluster_ids[i]);
    if (it == slot.end()) {
      throw Error(ErrorCode::UnknownCluster, "cluster " + std::to_string(cluster_ids[i]) + " not in universe");
    }
    logits(it->second) += std::exp(log_likelihoods[i] - max_ll);
  }

  BasicSemanticDistribution<Scalar> d;
  d.cluster_universe.assign(universe.begin(), universe.end());
  d.mode = mode;
  d.probabilities = mode == DistributionMode::AsWritten ? softmax(logits) : Vector<Scalar>(logits / logits.sum());
  return d;
}

/// softmax(s_clean + alpha (s_clean - s_noisy)) over the shared universe.
template <typename Scalar>
Vector<Scalar> vision_amplified_distribution(const BasicSemanticDistribution<Scalar>& s_clean,
                                             const BasicSemanticDistribution<Scalar>& s_noisy, Scalar alpha) {
  if (s_clean.cluster_universe != s_noisy.cluster_universe || s_clean.mode != s_noisy.mode) {
    throw Error(ErrorCode::UniverseMismatch, "clean and noisy distributions have different supports or modes");
  }
  if (!std::isfinite(static_cast<double>(alpha))) throw Error(ErrorCode::InvalidValue, "alpha must be finite");
  return softmax(s_clean.probabilities + alpha * (s_clean.probabilities - s_noisy.probabilities));
}

template <typename Scalar>
Scalar compute_vase(const BasicSemanticDistribution<Scalar>& s_clean,
                    const BasicSemanticDistribution<Scalar>& s_noisy, Scalar alpha) {
  return shannon_entropy(vision_amplified_distribution(s_clean, s_noisy, alpha));
}

/// 1 - (1/n) sum_{i=1..n} [c_i == c_0] over the clean block.
double compute_radflag(const ClusterAssignment& assignment, int n);

/// Universe 0..K-1 of a relabeled assignment.
std::vector<int> cluster_universe(const ClusterAssignment& assignment);

struct BundleDistributions {
  SemanticDistribution clean;
  SemanticDistribution noisy;
};

BundleDistributions bundle_distributions(const SampleBundle& bundle, const ClusterAssignment& assignment,
                                         const MetricConfig& config);

double compute_se(const SampleBundle& bundle, const ClusterAssignment& assignment, const MetricConfig& config);

/// SE, RadFlag and VASE for one bundle; label is left empty.
ScoreRow score_bundle(const SampleBundle& bundle, const ClusterAssignment& assignment, const MetricConfig& config);

}  // namespace hedge

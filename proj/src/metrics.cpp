#include "hedge/metrics.hpp"

#include <numeric>

namespace hedge {

std::string_view to_string(DistributionMode mode) noexcept {
  return mode == DistributionMode::AsWritten ? "as_written" : "mass_normalized";
}

DistributionMode parse_distribution_mode(std::string_view s) {
  if (s == "as_written") return DistributionMode::AsWritten;
  if (s == "mass_normalized") return DistributionMode::MassNormalized;
  throw Error(ErrorCode::InvalidValue, "unknown distribution mode '" + std::string(s) + "'");
}

namespace {

void check_layout(const ClusterAssignment& assignment, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidValue, "n must be positive");
  if (static_cast<int>(assignment.cluster_ids.size()) != 2 * n + 1) {
    throw Error(ErrorCode::LengthMismatch, "assignment has " + std::to_string(assignment.cluster_ids.size()) +
                                               " ids, expected " + std::to_string(2 * n + 1));
  }
}

}  // namespace

double compute_radflag(const ClusterAssignment& assignment, int n) {
  check_layout(assignment, n);
  const int c0 = assignment.cluster_ids[0];
  int agree = 0;
  for (int i = 1; i <= n; ++i) agree += assignment.cluster_ids[i] == c0 ? 1 : 0;
  return 1.0 - static_cast<double>(agree) / n;
}

std::vector<int> cluster_universe(const ClusterAssignment& assignment) {
  std::vector<int> universe(assignment.num_clusters);
  std::iota(universe.begin(), universe.end(), 0);
  return universe;
}

BundleDistributions bundle_distributions(const SampleBundle& bundle, const ClusterAssignment& assignment,
                                         const MetricConfig& config) {
  const int n = bundle.n();
  check_layout(assignment, n);
  const auto universe = cluster_universe(assignment);
  const auto& ids = assignment.cluster_ids;

  std::vector<double> clean_ll;
  std::vector<int> clean_ids;
  if (config.include_baseline_in_clean) {
    clean_ll.push_back(bundle.baseline.mean_log_likelihood);
    clean_ids.push_back(ids[0]);
  }
  for (int i = 0; i < n; ++i) {
    clean_ll.push_back(bundle.clean[i].mean_log_likelihood);
    clean_ids.push_back(ids[1 + i]);
  }
  std::vector<double> noisy_ll;
  std::vector<int> noisy_ids;
  for (int i = 0; i < n; ++i) {
    noisy_ll.push_back(bundle.noisy[i].mean_log_likelihood);
    noisy_ids.push_back(ids[1 + n + i]);
  }
  return {semantic_distribution<double>(clean_ll, clean_ids, universe, config.distribution_mode),
          semantic_distribution<double>(noisy_ll, noisy_ids, universe, config.distribution_mode)};
}

double compute_se(const SampleBundle& bundle, const ClusterAssignment& assignment, const MetricConfig& config) {
  return shannon_entropy(bundle_distributions(bundle, assignment, config).clean);
}

ScoreRow score_bundle(const SampleBundle& bundle, const ClusterAssignment& assignment, const MetricConfig& config) {
  const auto dists = bundle_distributions(bundle, assignment, config);
  ScoreRow row;
  row.bundle_id = bundle.bundle_id;
  row.backend = assignment.backend;
  row.task_type = bundle.task_type;
  row.se = shannon_entropy(dists.clean);
  row.radflag = compute_radflag(assignment, bundle.n());
  row.vase = compute_vase(dists.clean, dists.noisy, config.alpha);
  return row;
}

}  // namespace hedge

#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <numeric>
#include <random>

#include "hedge/metrics.hpp"
#include "test_support.hpp"

using namespace hedge;
using hedge::testing::make_bundle;

namespace {

SemanticDistribution dist(std::vector<double> p) {
  SemanticDistribution d;
  for (std::size_t i = 0; i < p.size(); ++i) d.cluster_universe.push_back(static_cast<int>(i));
  d.probabilities = Eigen::Map<Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  return d;
}

ClusterAssignment assignment(std::vector<int> ids) { return relabel_by_first_occurrence(ids, Backend::Embedding); }

}  // namespace

TEST_CASE("semantic_distribution examples") {
  const std::vector<int> u0{0};
  for (auto mode : {DistributionMode::AsWritten, DistributionMode::MassNormalized}) {
    const auto d = semantic_distribution<double>(std::vector<double>{-3.0}, std::vector<int>{0}, u0, mode);
    CHECK(d.probabilities(0) == doctest::Approx(1.0));
  }

  const std::vector<int> u01{0, 1};
  const auto sym = semantic_distribution<double>(std::vector<double>{0, 0}, std::vector<int>{0, 1}, u01,
                                                 DistributionMode::AsWritten);
  CHECK(sym.probabilities(0) == doctest::Approx(0.5));

  // softmax([2, 1]) evaluated independently: e^2 / (e^2 + e) = 1 / (1 + e^-1).
  const double p0 = 1.0 / (1.0 + std::exp(-1.0));
  const auto aw = semantic_distribution<double>(std::vector<double>{0, 0, 0}, std::vector<int>{0, 0, 1}, u01,
                                                DistributionMode::AsWritten);
  CHECK(std::abs(aw.probabilities(0) - 0.73106) < 1e-5);
  CHECK(std::abs(aw.probabilities(1) - 0.26894) < 1e-5);
  CHECK(std::abs(aw.probabilities(0) - p0) < 1e-12);
  const auto mn = semantic_distribution<double>(std::vector<double>{0, 0, 0}, std::vector<int>{0, 0, 1}, u01,
                                                DistributionMode::MassNormalized);
  CHECK(std::abs(mn.probabilities(0) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(mn.probabilities(1) - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("semantic_distribution errors") {
  const std::vector<int> u{0};
  CHECK_THROWS_WITH_AS(semantic_distribution<double>(std::vector<double>{}, std::vector<int>{}, u,
                                                     DistributionMode::AsWritten),
                       doctest::Contains("EmptyInput"), Error);
  CHECK_THROWS_WITH_AS(semantic_distribution<double>(std::vector<double>{-1}, std::vector<int>{3}, u,
                                                     DistributionMode::AsWritten),
                       doctest::Contains("UnknownCluster"), Error);
}

TEST_CASE("empty clusters: logit 0 when as written, mass 0 when normalized") {
  const std::vector<int> u{0, 1};
  const auto mn = semantic_distribution<double>(std::vector<double>{-2.0, -1.0}, std::vector<int>{0, 0}, u,
                                                DistributionMode::MassNormalized);
  CHECK(mn.probabilities(0) == 1.0);
  CHECK(mn.probabilities(1) == 0.0);
  const auto aw = semantic_distribution<double>(std::vector<double>{-2.0, -1.0}, std::vector<int>{0, 0}, u,
                                                DistributionMode::AsWritten);
  const double w = 1.0 + std::exp(-1.0);
  CHECK(aw.probabilities(0) == doctest::Approx(std::exp(w) / (std::exp(w) + 1.0)));
  CHECK(aw.probabilities(0) > aw.probabilities(1));
}

TEST_CASE("property: max-shift invariance") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ll(-5.0, 0.0), shift(-20.0, 0.0);
  std::uniform_int_distribution<int> cid(0, 3);
  const std::vector<int> u{0, 1, 2, 3};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> a(9), b(9);
    std::vector<int> ids(9);
    const double c = shift(rng);
    for (int i = 0; i < 9; ++i) {
      a[i] = ll(rng);
      b[i] = a[i] + c;
      ids[i] = cid(rng);
    }
    for (auto mode : {DistributionMode::AsWritten, DistributionMode::MassNormalized}) {
      const auto da = semantic_distribution<double>(a, ids, u, mode);
      const auto db = semantic_distribution<double>(b, ids, u, mode);
      REQUIRE((da.probabilities - db.probabilities).cwiseAbs().maxCoeff() < 1e-12);
      REQUIRE(std::abs(da.probabilities.sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("shannon_entropy examples") {
  CHECK(shannon_entropy(dist({1.0, 0.0})) == 0.0);
  CHECK(std::abs(shannon_entropy(dist({0.25, 0.25, 0.25, 0.25})) - std::log(4.0)) < 1e-9);
  // -p ln p - q ln q evaluated by hand.
  const double p = 0.73106, q = 0.26894;
  CHECK(std::abs(shannon_entropy(dist({p, q})) - 0.58220) < 1e-4);
  const Eigen::Vector3f single_precision(0.5f, 0.5f, 0.0f);
  CHECK(shannon_entropy(single_precision) == doctest::Approx(std::log(2.0f)));
}

TEST_CASE("compute_se examples") {
  MetricConfig cfg;
  const auto one = make_bundle({"a", "a", "a"}, {-1, -1, -1});
  CHECK(compute_se(one, assignment({0, 0, 0}), cfg) == 0.0);

  const auto two = make_bundle({"a", "a", "b", "a", "a"}, {-1, -1, -1, -1, -1});
  CHECK(compute_se(two, assignment({0, 0, 1, 0, 0}), cfg) == doctest::Approx(std::log(2.0)));

  // Worked fixture, mass mode, clean ll [-1, -1, -2] over clusters [0, 0, 1].
  // Weights e^0, e^0, e^-1 -> masses [2, e^-1] / (2 + e^-1); entropy ~ 0.43190.
  MetricConfig mass;
  mass.distribution_mode = DistributionMode::MassNormalized;
  const auto worked = make_bundle({"a", "a", "a", "b", "a", "a", "a"}, {-0.5, -1, -1, -2, -1, -1, -1});
  const double m0 = 2.0 / (2.0 + std::exp(-1.0));
  const double expected = -m0 * std::log(m0) - (1 - m0) * std::log(1 - m0);
  CHECK(std::abs(expected - 0.43190) < 1e-5);
  CHECK(std::abs(compute_se(worked, assignment({0, 0, 0, 1, 0, 0, 0}), mass) - expected) < 1e-12);
}

TEST_CASE("include_baseline_in_clean adds A0 to the clean distribution") {
  const auto b = make_bundle({"x", "a", "a"}, {-1, -1, -1});
  MetricConfig cfg;
  cfg.distribution_mode = DistributionMode::MassNormalized;
  CHECK(compute_se(b, assignment({0, 1, 1}), cfg) == 0.0);
  cfg.include_baseline_in_clean = true;
  CHECK(compute_se(b, assignment({0, 1, 1}), cfg) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("compute_radflag") {
  CHECK(compute_radflag(assignment({0, 0, 0, 1, 1}), 2) == 0.0);
  CHECK(compute_radflag(assignment({0, 1, 2, 0, 0}), 2) == 1.0);
  CHECK(compute_radflag(assignment({0, 0, 0, 0, 1, 2, 0, 0, 0, 0, 0}), 5) == doctest::Approx(0.4));
  CHECK_THROWS_AS(compute_radflag(assignment({0, 0}), 1), Error);
}

TEST_CASE("compute_vase examples") {
  CHECK(compute_vase(dist({0.5, 0.5}), dist({0.5, 0.5}), 1.0) == doctest::Approx(std::log(2.0)));
  // softmax([0.9 + 0.8, 0.1 - 0.8]) then entropy.
  const double z = std::exp(1.7) + std::exp(-0.7);
  const double a = std::exp(1.7) / z, b = std::exp(-0.7) / z;
  const double expected = -a * std::log(a) - b * std::log(b);
  CHECK(std::abs(expected - 0.2865) < 1e-3);
  CHECK(std::abs(compute_vase(dist({0.9, 0.1}), dist({0.1, 0.9}), 1.0) - expected) < 1e-12);

  const auto clean = dist({0.7, 0.2, 0.1});
  const double base = shannon_entropy(softmax(clean.probabilities));
  CHECK(compute_vase(clean, dist({0.1, 0.1, 0.8}), 0.0) == doctest::Approx(base));
  CHECK(compute_vase(clean, clean, 1.0) == base);

  auto other = dist({0.5, 0.5});
  other.cluster_universe = {0, 2};
  CHECK_THROWS_WITH_AS(compute_vase(dist({0.5, 0.5}), other, 1.0), doctest::Contains("UniverseMismatch"), Error);
}

TEST_CASE("score_bundle examples") {
  MetricConfig cfg;
  const auto same = hedge::testing::make_uniform_bundle(4, "goal");
  const auto row = score_bundle(same, assignment(std::vector<int>(9, 0)), cfg);
  CHECK(*row.se == 0.0);
  CHECK(*row.radflag == 0.0);
  CHECK(*row.vase == 0.0);
  CHECK_FALSE(row.label.has_value());

  const auto mismatch = make_bundle({"a", "b", "b"}, {-1, -1, -1});
  CHECK(*score_bundle(mismatch, assignment({0, 1, 1}), cfg).radflag == 1.0);
}

TEST_CASE("property: scores invariant under cluster relabeling and bounded") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ll(-4.0, 0.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 6;
    std::vector<std::string> texts;
    std::vector<double> lls;
    std::vector<int> ids;
    for (int i = 0; i < 2 * n + 1; ++i) {
      ids.push_back(static_cast<int>(rng() % 4));
      texts.push_back("t" + std::to_string(ids.back()));
      lls.push_back(ll(rng));
    }
    const auto b = make_bundle(texts, lls);
    const auto a = assignment(ids);
    // Rename clusters with a random permutation of 0..K-1 (not re-canonicalized).
    std::vector<int> perm(a.num_clusters);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ClusterAssignment renamed = a;
    for (int& id : renamed.cluster_ids) id = perm[id];
    for (auto mode : {DistributionMode::AsWritten, DistributionMode::MassNormalized}) {
      MetricConfig cfg;
      cfg.distribution_mode = mode;
      const auto r1 = score_bundle(b, a, cfg);
      const auto r2 = score_bundle(b, renamed, cfg);
      REQUIRE(*r1.se == doctest::Approx(*r2.se));
      REQUIRE(*r1.vase == doctest::Approx(*r2.vase));
      REQUIRE(*r1.radflag == *r2.radflag);
      const double lnk = std::log(static_cast<double>(a.num_clusters));
      REQUIRE(*r1.se >= 0.0);
      REQUIRE(*r1.se <= lnk + 1e-12);
      REQUIRE(*r1.vase >= 0.0);
      REQUIRE(*r1.vase <= lnk + 1e-12);
      const double scaled = *r1.radflag * n;
      REQUIRE(std::abs(scaled - std::round(scaled)) < 1e-9);
    }
  }
}

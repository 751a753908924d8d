#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "hedge/clustering.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace hedge;
using hedge::testing::same_partition;

namespace {

JudgmentMatrix all_neutral(int m) {
  JudgmentMatrix y(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (i != j) y.set(i, j, NliLabel::Neutral);
  return y;
}

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
  auto p = std::filesystem::temp_directory_path() / ("hedge_test_" + name);
  std::ofstream(p) << contents;
  return p;
}

struct CountingJudge : JudgmentProvider {
  long long calls = 0;
  std::vector<NliLabel> judge(std::span<const PairRequest> pairs, const std::string&) override {
    calls += static_cast<long long>(pairs.size());
    return std::vector<NliLabel>(pairs.size(), NliLabel::Neutral);
  }
};

}  // namespace

TEST_CASE("cluster_by_embedding basic cases") {
  Eigen::MatrixXd same(3, 2);
  same << 1, 0, 1, 0, 1, 0;
  CHECK(cluster_by_embedding(same, {0.9, 0}).num_clusters == 1);

  const Eigen::MatrixXd ortho = Eigen::MatrixXd::Identity(3, 3);
  const auto a = cluster_by_embedding(ortho, {0.5, 0});
  CHECK(a.num_clusters == 3);
  CHECK(a.cluster_ids == std::vector<int>{0, 1, 2});

  // Not a Gram matrix of real unit vectors, so it goes in as similarities.
  Eigen::MatrixXd sim(3, 3);
  sim << 1, 0.9, 0.1, 0.9, 1, 0.9, 0.1, 0.9, 1;
  const auto chain = cluster_by_similarity(sim, {0.8, 0});
  CHECK(chain.num_clusters == 1);
  CHECK(chain.cluster_ids == std::vector<int>{0, 0, 0});
}

TEST_CASE("similarity exactly at tau is an edge") {
  Eigen::MatrixXd rows(2, 2);
  rows << 1, 0, 0.5, std::sqrt(0.75);
  const double sim = rows.row(0).dot(rows.row(1));
  CHECK(cluster_by_embedding(rows, {sim, 0}).num_clusters == 1);
  CHECK(cluster_by_embedding(rows, {std::nextafter(sim, 2.0), 0}).num_clusters == 2);
}

TEST_CASE("kNN edges join nearest neighbours") {
  const Eigen::MatrixXd ortho = Eigen::MatrixXd::Identity(4, 4);
  // All similarities tie at 0, so each row links to the lowest other index.
  const auto a = cluster_by_embedding(ortho, {0.5, 1});
  CHECK(a.num_clusters == 1);
}

TEST_CASE("make_embedding_set normalizes and validates") {
  const auto set = make_embedding_set({{3, 4}, {0, 2}});
  CHECK(set.vectors.row(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(set.vectors(0, 0) == doctest::Approx(0.6));
  CHECK_THROWS_WITH_AS(make_embedding_set({{1, 0}, {1, 0, 0}}), doctest::Contains("DimensionMismatch"), Error);
  CHECK_THROWS_WITH_AS(make_embedding_set({{1, 0}, {0, 0}}), doctest::Contains("ZeroVector"), Error);
}

TEST_CASE("property: embedding clustering equals brute-force reachability") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> md(1, 12), dd(2, 5), kd(0, 2);
  std::uniform_real_distribution<double> td(-0.2, 0.95);
  for (int trial = 0; trial < 600; ++trial) {
    const int m = md(rng);
    const int d = dd(rng);
    Eigen::MatrixXd x(m, d);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < d; ++c) x(i, c) = g(rng);
      x.row(i).normalize();
    }
    const double tau = td(rng);
    const int k = trial % 3 == 0 ? kd(rng) : 0;
    const auto got = cluster_by_embedding(x, {tau, k});
    const auto want = oracle::embedding_components(x * x.transpose(), tau, k);
    REQUIRE(same_partition(got.cluster_ids, want));
    REQUIRE(got.cluster_ids.front() == 0);
    REQUIRE(*std::max_element(got.cluster_ids.begin(), got.cluster_ids.end()) == got.num_clusters - 1);
  }
}

TEST_CASE("property: raising tau never merges clusters") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd x(10, 3);
    for (int i = 0; i < 10; ++i) {
      for (int c = 0; c < 3; ++c) x(i, c) = g(rng);
      x.row(i).normalize();
    }
    int prev = 0;
    for (double tau = -1.0; tau <= 1.0; tau += 0.05) {
      const int k = cluster_by_embedding(x, {tau, 0}).num_clusters;
      REQUIRE(k >= prev);
      prev = k;
    }
  }
}

TEST_CASE("property: embedding clustering is permutation-equivariant") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd x(8, 3);
    for (int i = 0; i < 8; ++i) {
      for (int c = 0; c < 3; ++c) x(i, c) = g(rng);
      x.row(i).normalize();
    }
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd px(8, 3);
    for (int i = 0; i < 8; ++i) px.row(i) = x.row(perm[i]);
    const auto base = cluster_by_embedding(x, {0.3, 0});
    const auto permuted = cluster_by_embedding(px, {0.3, 0});
    std::vector<int> expected(8);
    for (int i = 0; i < 8; ++i) expected[i] = base.cluster_ids[perm[i]];
    CHECK(permuted == relabel_by_first_occurrence(expected, Backend::Embedding));
  }
}

TEST_CASE("cluster_by_nli examples") {
  // A <-> B mutual entailment, C contradicts both.
  JudgmentMatrix y(3);
  y.set(0, 1, NliLabel::Entails);
  y.set(1, 0, NliLabel::Entails);
  y.set(0, 2, NliLabel::Contradicts);
  y.set(2, 0, NliLabel::Contradicts);
  y.set(1, 2, NliLabel::Contradicts);
  y.set(2, 1, NliLabel::Contradicts);
  CHECK(cluster_by_nli(y).cluster_ids == std::vector<int>{0, 0, 1});

  JudgmentMatrix one_way = all_neutral(2);
  one_way.set(0, 1, NliLabel::Entails);
  CHECK(cluster_by_nli(one_way).num_clusters == 2);

  CHECK(cluster_by_nli(all_neutral(5)).num_clusters == 5);

  JudgmentMatrix hole(3);
  hole.set(0, 1, NliLabel::Entails);
  CHECK_THROWS_WITH_AS(cluster_by_nli(hole), doctest::Contains("IncompleteMatrix"), Error);
}

TEST_CASE("contradiction guard blocks transitive merges in lexicographic order") {
  // A~B, B~C, A contradicts C: (A,B) merges first, then (B,C) is blocked.
  JudgmentMatrix y = all_neutral(3);
  for (auto [i, j] : {std::pair{0, 1}, std::pair{1, 2}}) {
    y.set(i, j, NliLabel::Entails);
    y.set(j, i, NliLabel::Entails);
  }
  y.set(0, 2, NliLabel::Contradicts);
  CHECK(cluster_by_nli(y).cluster_ids == std::vector<int>{0, 0, 1});
}

TEST_CASE("property: NLI clustering against exhaustive partition oracle") {
  auto check_instance = [](const JudgmentMatrix& y) {
    const auto got = cluster_by_nli(y);
    std::vector<std::vector<int>> valid;
    oracle::for_each_partition(y.size(), [&](const std::vector<int>& p) {
      if (oracle::valid_constrained_closure(y, p)) valid.push_back(p);
    });
    REQUIRE(!valid.empty());
    REQUIRE(oracle::valid_constrained_closure(y, got.cluster_ids));
    if (valid.size() == 1) REQUIRE(same_partition(valid.front(), got.cluster_ids));
  };

  const NliLabel labels[] = {NliLabel::Entails, NliLabel::Contradicts, NliLabel::Neutral};
  // Every labelling for m <= 3.
  for (int m = 1; m <= 3; ++m) {
    const int cells = m * (m - 1);
    int total = 1;
    for (int c = 0; c < cells; ++c) total *= 3;
    for (int code = 0; code < total; ++code) {
      JudgmentMatrix y(m);
      int rest = code;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          if (i != j) {
            y.set(i, j, labels[rest % 3]);
            rest /= 3;
          }
      check_instance(y);
    }
  }
  // Random instances for m = 4..7, biased toward entailment so merges happen.
  std::mt19937_64 rng(5);
  std::discrete_distribution<int> pick({0.55, 0.15, 0.30});
  for (int trial = 0; trial < 1500; ++trial) {
    const int m = 4 + trial % 4;
    JudgmentMatrix y(m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        if (i != j) y.set(i, j, labels[pick(rng)]);
    check_instance(y);
  }
}

TEST_CASE("collect_pairwise_judgments asks for every ordered pair") {
  CountingJudge judge;
  const std::vector<std::string> texts{"a", "b", "c", "a"};
  const auto y = collect_pairwise_judgments(texts, judge);
  CHECK(judge.calls == 12);
  CHECK(y.complete());

  CountingJudge single;
  CHECK(collect_pairwise_judgments({"only"}, single).size() == 1);
  CHECK(single.calls == 0);
}

TEST_CASE("file judgments report missing pairs") {
  std::string lines;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      if (i != j && !(i == 2 && j == 5)) lines += R"({"i":)" + std::to_string(i) + R"(,"j":)" + std::to_string(j) + R"(,"label":"neutral"})" "\n";
  FileJudgmentProvider provider(temp_file("judgments.jsonl", lines));
  const std::vector<std::string> texts(6, "t");
  CHECK_THROWS_WITH_AS(collect_pairwise_judgments(texts, provider), doctest::Contains("(2, 5)"), Error);
  CHECK_THROWS_WITH_AS(collect_pairwise_judgments(texts, provider), doctest::Contains("IncompleteJudgmentFile"), Error);
}

TEST_CASE("embed_texts through file and surrogate providers") {
  FileEmbeddingProvider file(temp_file("emb.jsonl",
                                       "{\"index\":0,\"vector\":[2,0]}\n{\"index\":1,\"vector\":[0,5]}\n"));
  const auto set = embed_texts({"x", "y"}, file);
  CHECK(set.vectors.row(1).norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_WITH_AS(embed_texts({"x", "y", "z"}, file), doctest::Contains("ProviderError"), Error);

  OneHotEmbeddingProvider one_hot;
  const auto oh = embed_texts({"goal", "foul", "goal"}, one_hot);
  CHECK(oh.vectors.row(0) == oh.vectors.row(2));
  CHECK(oh.vectors.row(0).dot(oh.vectors.row(1)) == 0.0);
  for (int i = 0; i < oh.size(); ++i) CHECK(oh.vectors.row(i).norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("surrogate backends agree on exact-match clustering") {
  const auto bundle = hedge::testing::make_bundle({"goal", "goal", "foul", "goal", "corner"}, {-1, -1, -1, -1, -1});
  OneHotEmbeddingProvider embedder;
  ExactMatchJudgmentProvider judge;
  auto by_embedding = BundleClusterer::embedding(embedder, {0.5, 0});
  auto by_nli = BundleClusterer::nli(judge);
  const auto e = by_embedding.cluster(bundle);
  const auto n = by_nli.cluster(bundle);
  CHECK(e.cluster_ids == std::vector<int>{0, 0, 1, 0, 2});
  CHECK(n.cluster_ids == e.cluster_ids);
  CHECK(n.backend == Backend::Nli);
  CHECK(cluster_assignment_from_json(to_json(e, bundle.bundle_id)) == e);
}

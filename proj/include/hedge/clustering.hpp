#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hedge/datamodel.hpp"
#include "hedge/error.hpp"

namespace hedge {

/// Cluster id per flattened answer, relabeled by first occurrence.
struct ClusterAssignment {
  std::vector<int> cluster_ids;
  int num_clusters = 0;
  Backend backend = Backend::Embedding;

  friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;
};

/// Maps arbitrary component labels to 0..K-1 in order of first appearance.
ClusterAssignment relabel_by_first_occurrence(std::span<const int> raw, Backend backend);

class DisjointSet {
 public:
  explicit DisjointSet(int size) : parent_(size), rank_(size, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  /// Returns the surviving root.
  int unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return a;
  }

  int size() const noexcept { return static_cast<int>(parent_.size()); }

  std::vector<int> labels() {
    std::vector<int> out(parent_.size());
    for (int i = 0; i < size(); ++i) out[i] = find(i);
    return out;
  }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
};

// -- embedding backend -------------------------------------------------------

struct ClusteringConfig {
  double tau = 0.7;
  int knn_k = 0;
};

struct EmbeddingSet {
  Eigen::MatrixXd vectors;  // one unit-norm row per text
  std::string source_model;

  int size() const noexcept { return static_cast<int>(vectors.rows()); }
};

/// Normalizes rows to unit length. Throws DimensionMismatch on ragged input
/// and ZeroVector when a row norm is below 1e-12.
EmbeddingSet make_embedding_set(const std::vector<std::vector<double>>& rows, std::string source_model = {});

/// Connected components of the graph with edge (i, j) iff sim(i, j) >= tau or
/// j is one of the knn_k most similar entries to i (kNN edges are symmetrized).
template <typename Derived>
ClusterAssignment cluster_by_similarity(const Eigen::MatrixBase<Derived>& sim, const ClusteringConfig& config) {
  using Scalar = typename Derived::Scalar;
  const int m = static_cast<int>(sim.rows());
  if (m < 1) throw Error(ErrorCode::EmptyInput, "no embeddings to cluster");
  if (sim.cols() != sim.rows()) throw Error(ErrorCode::DimensionMismatch, "similarity matrix is not square");
  if (!std::isfinite(config.tau)) throw Error(ErrorCode::InvalidValue, "tau must be finite");
  if (config.knn_k < 0) throw Error(ErrorCode::InvalidValue, "knn_k must be non-negative");

  const Scalar tau = static_cast<Scalar>(config.tau);
  DisjointSet ds(m);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (sim(i, j) >= tau) ds.unite(i, j);
    }
  }
  if (config.knn_k > 0 && m > 1) {
    std::vector<int> order;
    order.reserve(m);
    for (int i = 0; i < m; ++i) {
      order.clear();
      for (int j = 0; j < m; ++j) {
        if (j != i) order.push_back(j);
      }
      const int k = std::min<int>(config.knn_k, static_cast<int>(order.size()));
      // Most similar first; equal similarities resolve to the lower index.
      std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        return sim(i, a) > sim(i, b) || (sim(i, a) == sim(i, b) && a < b);
      });
      for (int r = 0; r < k; ++r) ds.unite(i, order[r]);
    }
  }
  const std::vector<int> raw = ds.labels();
  return relabel_by_first_occurrence(raw, Backend::Embedding);
}

/// Clusters unit-norm rows by cosine similarity (their Gram matrix).
template <typename Derived>
ClusterAssignment cluster_by_embedding(const Eigen::MatrixBase<Derived>& unit_rows, const ClusteringConfig& config) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sim = unit_rows * unit_rows.transpose();
  return cluster_by_similarity(sim, config);
}

ClusterAssignment cluster_by_embedding(const EmbeddingSet& embeddings, const ClusteringConfig& config);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// One raw (not necessarily normalized) vector per text, in order. `scope`
  /// names the bundle for providers backed by per-bundle files.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, const std::string& scope) = 0;
  virtual std::string model() const = 0;
};

EmbeddingSet embed_texts(const std::vector<std::string>& texts, EmbeddingProvider& provider,
                         const std::string& scope = {});

/// Vectors from a JSONL file of {index, vector} rows, optionally keyed by bundle_id.
class FileEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(const std::filesystem::path& path);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, const std::string& scope) override;
  std::string model() const override { return "file:" + path_; }

 private:
  std::string path_;
  std::unordered_map<std::string, std::vector<std::vector<double>>> by_scope_;
};

/// Surrogate encoder: identical texts share a basis vector, distinct texts are
/// orthogonal. Needs no model and makes cosine similarity an exact-match test.
class OneHotEmbeddingProvider : public EmbeddingProvider {
 public:
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, const std::string& scope) override;
  std::string model() const override { return "surrogate:one-hot"; }
};

// -- NLI backend -------------------------------------------------------------

enum class NliLabel { Entails, Contradicts, Neutral };

std::string_view to_string(NliLabel label) noexcept;
/// Accepts entails/entailment, contradicts/contradiction, neutral (any case).
NliLabel parse_nli_label(std::string_view s);

struct PairwiseJudgment {
  NliLabel label = NliLabel::Neutral;
  int premise_index = 0;
  int hypothesis_index = 1;
};

/// Ordered-pair label table over m texts; the diagonal is unused.
class JudgmentMatrix {
 public:
  JudgmentMatrix() = default;
  explicit JudgmentMatrix(int size) : size_(size), cells_(static_cast<std::size_t>(size) * size) {}

  int size() const noexcept { return size_; }
  void set(int premise, int hypothesis, NliLabel label);
  void set(const PairwiseJudgment& j) { set(j.premise_index, j.hypothesis_index, j.label); }
  std::optional<NliLabel> at(int premise, int hypothesis) const {
    return cells_[static_cast<std::size_t>(premise) * size_ + hypothesis];
  }
  bool complete() const;

 private:
  int size_ = 0;
  std::vector<std::optional<NliLabel>> cells_;
};

/// Mutual-entailment closure by union-find over pairs in lexicographic order;
/// a union is skipped when it would join two texts linked by a contradiction.
ClusterAssignment cluster_by_nli(const JudgmentMatrix& judgments);

struct PairRequest {
  int premise_index;
  int hypothesis_index;
  std::string_view premise;
  std::string_view hypothesis;
};

class JudgmentProvider {
 public:
  virtual ~JudgmentProvider() = default;
  virtual std::vector<NliLabel> judge(std::span<const PairRequest> pairs, const std::string& scope) = 0;
};

/// One judgment per ordered pair (i, j), i != j.
JudgmentMatrix collect_pairwise_judgments(const std::vector<std::string>& texts, JudgmentProvider& provider,
                                          const std::string& scope = {});

/// Judgments from a JSONL file of {i, j, label} rows, optionally keyed by bundle_id.
class FileJudgmentProvider : public JudgmentProvider {
 public:
  explicit FileJudgmentProvider(const std::filesystem::path& path);
  std::vector<NliLabel> judge(std::span<const PairRequest> pairs, const std::string& scope) override;

 private:
  std::unordered_map<std::string, std::unordered_map<long long, NliLabel>> by_scope_;
};

/// Surrogate classifier: equal texts entail each other, different texts contradict.
class ExactMatchJudgmentProvider : public JudgmentProvider {
 public:
  std::vector<NliLabel> judge(std::span<const PairRequest> pairs, const std::string& scope) override;
};

// -- bundle-level driver -----------------------------------------------------

std::vector<std::string> flattened_texts(const SampleBundle& bundle);

/// Clusters the flattened answers of a bundle with either backend. Embeddings
/// are memoized per bundle_id so tau sweeps reuse them.
class BundleClusterer {
 public:
  static BundleClusterer embedding(EmbeddingProvider& provider, ClusteringConfig config);
  static BundleClusterer nli(JudgmentProvider& provider);

  Backend backend() const noexcept { return backend_; }
  const ClusteringConfig& config() const noexcept { return config_; }
  void set_tau(double tau) { config_.tau = tau; }

  ClusterAssignment cluster(const SampleBundle& bundle);
  const EmbeddingSet& embeddings_for(const SampleBundle& bundle);

 private:
  BundleClusterer() = default;
  Backend backend_ = Backend::Embedding;
  ClusteringConfig config_;
  EmbeddingProvider* embedder_ = nullptr;
  JudgmentProvider* judge_ = nullptr;
  std::unordered_map<std::string, EmbeddingSet> embedding_memo_;
};

nlohmann::json to_json(const ClusterAssignment& a, const std::string& bundle_id);
ClusterAssignment cluster_assignment_from_json(const nlohmann::json& j);

}  // namespace hedge

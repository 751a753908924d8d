#include "hedge/clustering.hpp"

#include <algorithm>
#include <cctype>

namespace hedge {

using nlohmann::json;

ClusterAssignment relabel_by_first_occurrence(std::span<const int> raw, Backend backend) {
  ClusterAssignment out;
  out.backend = backend;
  out.cluster_ids.reserve(raw.size());
  std::unordered_map<int, int> remap;
  for (int label : raw) {
    auto [it, inserted] = remap.try_emplace(label, static_cast<int>(remap.size()));
    out.cluster_ids.push_back(it->second);
  }
  out.num_clusters = static_cast<int>(remap.size());
  return out;
}

EmbeddingSet make_embedding_set(const std::vector<std::vector<double>>& rows, std::string source_model) {
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "no embedding vectors");
  const std::size_t dim = rows.front().size();
  if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "embedding vectors are empty");
  EmbeddingSet set;
  set.source_model = std::move(source_model);
  set.vectors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "vector " + std::to_string(i) + " has dimension " +
                                                    std::to_string(rows[i].size()) + ", expected " +
                                                    std::to_string(dim));
    }
    Eigen::Map<const Eigen::VectorXd> v(rows[i].data(), static_cast<Eigen::Index>(dim));
    const double norm = v.norm();
    if (!(norm >= 1e-12)) throw Error(ErrorCode::ZeroVector, "vector " + std::to_string(i) + " has zero norm");
    set.vectors.row(static_cast<Eigen::Index>(i)) = v.transpose() / norm;
  }
  return set;
}

ClusterAssignment cluster_by_embedding(const EmbeddingSet& embeddings, const ClusteringConfig& config) {
  return cluster_by_embedding(embeddings.vectors, config);
}

EmbeddingSet embed_texts(const std::vector<std::string>& texts, EmbeddingProvider& provider, const std::string& scope) {
  if (texts.empty()) throw Error(ErrorCode::EmptyInput, "no texts to embed");
  auto rows = provider.embed(texts, scope);
  if (rows.size() != texts.size()) {
    throw Error(ErrorCode::ProviderError, "provider returned " + std::to_string(rows.size()) + " vectors for " +
                                              std::to_string(texts.size()) + " texts");
  }
  return make_embedding_set(rows, provider.model());
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& path) : path_(path.string()) {
  std::unordered_map<std::string, std::vector<std::pair<int, std::vector<double>>>> staged;
  for (const auto& row : read_jsonl(path)) {
    if (!row.contains("index") || !row.contains("vector")) {
      throw Error(ErrorCode::ProviderError, path_ + ": rows need index and vector");
    }
    const std::string scope = row.value("bundle_id", std::string{});
    staged[scope].emplace_back(row.at("index").get<int>(), row.at("vector").get<std::vector<double>>());
  }
  for (auto& [scope, entries] : staged) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& dst = by_scope_[scope];
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (entries[k].first != static_cast<int>(k)) {
        throw Error(ErrorCode::ProviderError, path_ + ": indices for '" + scope + "' are not 0..m-1");
      }
      dst.push_back(std::move(entries[k].second));
    }
  }
}

std::vector<std::vector<double>> FileEmbeddingProvider::embed(const std::vector<std::string>& texts,
                                                              const std::string& scope) {
  auto it = by_scope_.find(scope);
  if (it == by_scope_.end()) it = by_scope_.find("");
  if (it == by_scope_.end()) throw Error(ErrorCode::ProviderError, path_ + ": no vectors for '" + scope + "'");
  if (it->second.size() != texts.size()) {
    throw Error(ErrorCode::ProviderError, path_ + ": " + std::to_string(it->second.size()) + " vectors for " +
                                              std::to_string(texts.size()) + " texts");
  }
  return it->second;
}

std::vector<std::vector<double>> OneHotEmbeddingProvider::embed(const std::vector<std::string>& texts,
                                                                const std::string&) {
  std::unordered_map<std::string, std::size_t> vocab;
  for (const auto& t : texts) vocab.try_emplace(t, vocab.size());
  std::vector<std::vector<double>> rows;
  rows.reserve(texts.size());
  for (const auto& t : texts) {
    std::vector<double> v(vocab.size(), 0.0);
    v[vocab.at(t)] = 1.0;
    rows.push_back(std::move(v));
  }
  return rows;
}

// -- NLI ---------------------------------------------------------------------

std::string_view to_string(NliLabel label) noexcept {
  switch (label) {
    case NliLabel::Entails: return "entails";
    case NliLabel::Contradicts: return "contradicts";
    case NliLabel::Neutral: return "neutral";
  }
  return "neutral";
}

NliLabel parse_nli_label(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "entails" || lower == "entailment") return NliLabel::Entails;
  if (lower == "contradicts" || lower == "contradiction") return NliLabel::Contradicts;
  if (lower == "neutral") return NliLabel::Neutral;
  throw Error(ErrorCode::ProviderError, "unknown NLI label '" + std::string(s) + "'");
}

void JudgmentMatrix::set(int premise, int hypothesis, NliLabel label) {
  if (premise == hypothesis) throw Error(ErrorCode::InvalidValue, "judgment on the diagonal");
  if (premise < 0 || hypothesis < 0 || premise >= size_ || hypothesis >= size_) {
    throw Error(ErrorCode::InvalidValue, "judgment index out of range");
  }
  cells_[static_cast<std::size_t>(premise) * size_ + hypothesis] = label;
}

bool JudgmentMatrix::complete() const {
  for (int i = 0; i < size_; ++i) {
    for (int j = 0; j < size_; ++j) {
      if (i != j && !at(i, j)) return false;
    }
  }
  return true;
}

ClusterAssignment cluster_by_nli(const JudgmentMatrix& judgments) {
  const int m = judgments.size();
  if (m < 1) throw Error(ErrorCode::EmptyInput, "no texts to cluster");
  if (!judgments.complete()) throw Error(ErrorCode::IncompleteMatrix, "judgment matrix has missing pairs");

  auto contradicts = [&](int a, int b) {
    return *judgments.at(a, b) == NliLabel::Contradicts || *judgments.at(b, a) == NliLabel::Contradicts;
  };

  DisjointSet ds(m);
  std::vector<std::vector<int>> members(m);
  for (int i = 0; i < m; ++i) members[i] = {i};

  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (*judgments.at(i, j) != NliLabel::Entails || *judgments.at(j, i) != NliLabel::Entails) continue;
      const int ri = ds.find(i);
      const int rj = ds.find(j);
      if (ri == rj) continue;
      bool blocked = false;
      for (int a : members[ri]) {
        for (int b : members[rj]) {
          if (contradicts(a, b)) {
            blocked = true;
            break;
          }
        }
        if (blocked) break;
      }
      if (blocked) continue;
      const int root = ds.unite(ri, rj);
      const int other = root == ri ? rj : ri;
      members[root].insert(members[root].end(), members[other].begin(), members[other].end());
      members[other].clear();
    }
  }
  const std::vector<int> raw = ds.labels();
  return relabel_by_first_occurrence(raw, Backend::Nli);
}

JudgmentMatrix collect_pairwise_judgments(const std::vector<std::string>& texts, JudgmentProvider& provider,
                                          const std::string& scope) {
  const int m = static_cast<int>(texts.size());
  if (m < 1) throw Error(ErrorCode::EmptyInput, "no texts to judge");
  JudgmentMatrix matrix(m);
  if (m == 1) return matrix;
  std::vector<PairRequest> pairs;
  pairs.reserve(static_cast<std::size_t>(m) * (m - 1));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j) pairs.push_back({i, j, texts[i], texts[j]});
    }
  }
  const auto labels = provider.judge(pairs, scope);
  if (labels.size() != pairs.size()) {
    throw Error(ErrorCode::ProviderError, "provider returned " + std::to_string(labels.size()) + " labels for " +
                                              std::to_string(pairs.size()) + " pairs");
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) matrix.set(pairs[k].premise_index, pairs[k].hypothesis_index, labels[k]);
  return matrix;
}

namespace {
long long pair_key(int i, int j) { return (static_cast<long long>(i) << 32) | static_cast<unsigned>(j); }
}  // namespace

FileJudgmentProvider::FileJudgmentProvider(const std::filesystem::path& path) {
  for (const auto& row : read_jsonl(path)) {
    if (!row.contains("i") || !row.contains("j") || !row.contains("label")) {
      throw Error(ErrorCode::ProviderError, path.string() + ": rows need i, j and label");
    }
    const std::string scope = row.value("bundle_id", std::string{});
    by_scope_[scope][pair_key(row.at("i").get<int>(), row.at("j").get<int>())] =
        parse_nli_label(row.at("label").get<std::string>());
  }
}

std::vector<NliLabel> FileJudgmentProvider::judge(std::span<const PairRequest> pairs, const std::string& scope) {
  auto it = by_scope_.find(scope);
  if (it == by_scope_.end()) it = by_scope_.find("");
  if (it == by_scope_.end()) throw Error(ErrorCode::IncompleteJudgmentFile, "no judgments for '" + scope + "'");
  std::vector<NliLabel> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto found = it->second.find(pair_key(p.premise_index, p.hypothesis_index));
    if (found == it->second.end()) {
      throw Error(ErrorCode::IncompleteJudgmentFile, "missing pair (" + std::to_string(p.premise_index) + ", " +
                                                         std::to_string(p.hypothesis_index) + ")");
    }
    out.push_back(found->second);
  }
  return out;
}

std::vector<NliLabel> ExactMatchJudgmentProvider::judge(std::span<const PairRequest> pairs, const std::string&) {
  std::vector<NliLabel> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.premise == p.hypothesis ? NliLabel::Entails : NliLabel::Contradicts);
  return out;
}

// -- bundle driver -----------------------------------------------------------

std::vector<std::string> flattened_texts(const SampleBundle& bundle) {
  std::vector<std::string> texts;
  for (const auto& a : flatten_sequence(bundle)) texts.push_back(a.text);
  return texts;
}

BundleClusterer BundleClusterer::embedding(EmbeddingProvider& provider, ClusteringConfig config) {
  BundleClusterer c;
  c.backend_ = Backend::Embedding;
  c.config_ = config;
  c.embedder_ = &provider;
  return c;
}

BundleClusterer BundleClusterer::nli(JudgmentProvider& provider) {
  BundleClusterer c;
  c.backend_ = Backend::Nli;
  c.judge_ = &provider;
  return c;
}

const EmbeddingSet& BundleClusterer::embeddings_for(const SampleBundle& bundle) {
  if (!embedder_) throw Error(ErrorCode::InvalidValue, "clusterer has no embedding provider");
  auto it = embedding_memo_.find(bundle.bundle_id);
  if (it == embedding_memo_.end()) {
    it = embedding_memo_.emplace(bundle.bundle_id, embed_texts(flattened_texts(bundle), *embedder_, bundle.bundle_id))
             .first;
  }
  return it->second;
}

ClusterAssignment BundleClusterer::cluster(const SampleBundle& bundle) {
  if (backend_ == Backend::Embedding) return cluster_by_embedding(embeddings_for(bundle), config_);
  const auto judgments = collect_pairwise_judgments(flattened_texts(bundle), *judge_, bundle.bundle_id);
  return cluster_by_nli(judgments);
}

json to_json(const ClusterAssignment& a, const std::string& bundle_id) {
  return {{"bundle_id", bundle_id},
          {"cluster_ids", a.cluster_ids},
          {"num_clusters", a.num_clusters},
          {"backend", to_string(a.backend)}};
}

ClusterAssignment cluster_assignment_from_json(const json& j) {
  const auto ids = j.at("cluster_ids").get<std::vector<int>>();
  ClusterAssignment a = relabel_by_first_occurrence(ids, parse_backend(j.at("backend").get<std::string>()));
  if (j.contains("num_clusters") && j.at("num_clusters").get<int>() != a.num_clusters) {
    throw Error(ErrorCode::InvalidValue, "num_clusters disagrees with cluster_ids");
  }
  return a;
}

}  // namespace hedge

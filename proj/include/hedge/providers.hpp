#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "hedge/cache.hpp"
#include "hedge/clustering.hpp"
#include "hedge/http.hpp"

namespace hedge {

/// OpenAI-style /embeddings client; vectors are cached per (model, text).
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(JsonTransport& transport, ContentCache& cache, std::string model, int batch_size = 64);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, const std::string& scope) override;
  std::string model() const override { return model_; }
  long long endpoint_calls() const noexcept { return calls_.load(); }

 private:
  JsonTransport& transport_;
  ContentCache& cache_;
  std::string model_;
  int batch_size_;
  std::atomic<long long> calls_{0};
};

/// Pairwise classifier client. POST /classify with
/// {model, pairs: [{premise, hypothesis}, ...]} returning {labels: [...]}.
/// Labels are cached per (model, premise, hypothesis); identical texts are
/// still sent to the classifier on a cold cache.
class HttpJudgmentProvider final : public JudgmentProvider {
 public:
  HttpJudgmentProvider(JsonTransport& transport, ContentCache& cache, std::string model, int batch_size = 256);
  std::vector<NliLabel> judge(std::span<const PairRequest> pairs, const std::string& scope) override;
  long long pairs_requested() const noexcept { return pairs_requested_.load(); }

 private:
  JsonTransport& transport_;
  ContentCache& cache_;
  std::string model_;
  int batch_size_;
  std::atomic<long long> pairs_requested_{0};
};

}  // namespace hedge

#include "hedge/providers.hpp"

#include "hedge/error.hpp"
#include "hedge/hash.hpp"

namespace hedge {

using nlohmann::json;

HttpEmbeddingProvider::HttpEmbeddingProvider(JsonTransport& transport, ContentCache& cache, std::string model,
                                             int batch_size)
    : transport_(transport), cache_(cache), model_(std::move(model)), batch_size_(std::max(1, batch_size)) {}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts,
                                                              const std::string&) {
  std::vector<std::vector<double>> out(texts.size());
  std::vector<std::string> keys(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = content_hash({{"model", model_}, {"text", texts[i]}});
    if (auto hit = cache_.get("embedding", keys[i])) {
      out[i] = hit->get<std::vector<double>>();
    } else {
      missing.push_back(i);
    }
  }
  for (std::size_t start = 0; start < missing.size(); start += batch_size_) {
    const std::size_t stop = std::min(missing.size(), start + batch_size_);
    json input = json::array();
    for (std::size_t k = start; k < stop; ++k) input.push_back(texts[missing[k]]);
    ++calls_;
    const json body = transport_.post("/embeddings", {{"model", model_}, {"input", input}});
    if (!body.contains("data") || !body["data"].is_array() || body["data"].size() != stop - start) {
      throw Error(ErrorCode::ProviderError, "embedding response does not match the request size");
    }
    for (std::size_t r = 0; r < body["data"].size(); ++r) {
      const json& item = body["data"][r];
      const std::size_t slot = item.contains("index") ? item["index"].get<std::size_t>() : r;
      if (slot >= stop - start || !item.contains("embedding")) {
        throw Error(ErrorCode::ProviderError, "malformed embedding entry");
      }
      const std::size_t i = missing[start + slot];
      out[i] = item["embedding"].get<std::vector<double>>();
      cache_.put("embedding", keys[i], out[i]);
    }
  }
  return out;
}

HttpJudgmentProvider::HttpJudgmentProvider(JsonTransport& transport, ContentCache& cache, std::string model,
                                           int batch_size)
    : transport_(transport), cache_(cache), model_(std::move(model)), batch_size_(std::max(1, batch_size)) {}

std::vector<NliLabel> HttpJudgmentProvider::judge(std::span<const PairRequest> pairs, const std::string&) {
  std::vector<NliLabel> out(pairs.size(), NliLabel::Neutral);
  std::vector<std::string> keys(pairs.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    keys[i] = content_hash({{"model", model_},
                            {"premise", std::string(pairs[i].premise)},
                            {"hypothesis", std::string(pairs[i].hypothesis)}});
    if (auto hit = cache_.get("nli", keys[i])) {
      out[i] = parse_nli_label(hit->get<std::string>());
    } else {
      missing.push_back(i);
    }
  }
  for (std::size_t start = 0; start < missing.size(); start += batch_size_) {
    const std::size_t stop = std::min(missing.size(), start + batch_size_);
    json batch = json::array();
    for (std::size_t k = start; k < stop; ++k) {
      const auto& p = pairs[missing[k]];
      batch.push_back({{"premise", std::string(p.premise)}, {"hypothesis", std::string(p.hypothesis)}});
    }
    pairs_requested_ += static_cast<long long>(stop - start);
    const json body = transport_.post("/classify", {{"model", model_}, {"pairs", batch}});
    if (!body.contains("labels") || !body["labels"].is_array() || body["labels"].size() != stop - start) {
      throw Error(ErrorCode::ProviderError, "classifier response does not match the request size");
    }
    for (std::size_t k = start; k < stop; ++k) {
      const std::size_t i = missing[k];
      out[i] = parse_nli_label(body["labels"][k - start].get<std::string>());
      cache_.put("nli", keys[i], std::string(to_string(out[i])));
    }
  }
  return out;
}

}  // namespace hedge

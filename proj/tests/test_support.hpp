#pragma once

#include <random>
#include <string>
#include <vector>

#include "hedge/datamodel.hpp"

namespace hedge::testing {

/// Bundle whose answers carry the given texts / log-likelihoods in flattened
/// layout order [A0, A1..An, N1..Nn].
inline SampleBundle make_bundle(const std::vector<std::string>& texts, const std::vector<double>& ll,
                                TaskType task = TaskType::VideoQA, std::string video_id = "clip-0") {
  const int n = static_cast<int>(texts.size() - 1) / 2;
  SampleBundle b;
  b.video_id = std::move(video_id);
  b.task_type = task;
  b.question = "Who scored?";
  b.gold_answer = "the player in red";
  b.sampling_config = SamplingConfig::for_budget(n, 7);
  b.baseline = {texts[0], ll[0], Condition::Baseline, 0};
  for (int i = 0; i < n; ++i) {
    b.clean.push_back({texts[1 + i], ll[1 + i], Condition::Clean, i});
    b.noisy.push_back({texts[1 + n + i], ll[1 + n + i], Condition::Noisy, i});
  }
  b.bundle_id = compute_bundle_id(b.video_id, b.task_type, b.question, b.sampling_config);
  return b;
}

inline SampleBundle make_uniform_bundle(int n, const std::string& text = "goal", double ll = -0.5) {
  return make_bundle(std::vector<std::string>(2 * n + 1, text), std::vector<double>(2 * n + 1, ll));
}

/// Same partition, regardless of label names.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    }
  }
  return true;
}

}  // namespace hedge::testing

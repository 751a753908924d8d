#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hedge/datamodel.hpp"
#include "hedge/sampling.hpp"

namespace hedge {

struct JudgeVerdict {
  int score = 0;
  std::string reason;
  std::string raw;
  std::string judge_model;
};

/// Rubric template; every "{task_type}" is replaced by the task name.
extern const std::string_view kJudgeSystemTemplate;

std::vector<ChatMessage> build_judge_prompt(TaskType task, std::string_view question, std::string_view description,
                                            std::string_view gold_answer, std::string_view generated_answer);

/// Strict JSON {"reason": string, "score": 0|1}, optionally wrapped in
/// whitespace and a code fence. Throws MalformedVerdict, InvalidScore or MissingField.
JudgeVerdict parse_verdict(std::string_view raw);

/// Canonical compact form: {"reason":...,"score":...}.
std::string serialize_verdict(const JudgeVerdict& verdict);

enum class JudgeTarget { Baseline, AllAnswers };

struct AdjudicatorOptions {
  int max_reasks = 2;
};

class Adjudicator {
 public:
  explicit Adjudicator(ChatClient& client, AdjudicatorOptions options = {});

  /// Temperature 0. Responses are cached through the client, keyed by the full
  /// prompt, so a warm rerun reproduces every verdict without endpoint calls.
  JudgeVerdict adjudicate(const SampleBundle& bundle, const AnswerRecord& answer);
  std::vector<JudgeVerdict> adjudicate_bundle(const SampleBundle& bundle, JudgeTarget target);

 private:
  ChatClient& client_;
  AdjudicatorOptions options_;
};

/// {bundle_id, score, reason, judge_model}, plus condition/ordinal when
/// the verdict is for a sampled (non-baseline) answer.
nlohmann::json verdict_row(const std::string& bundle_id, const JudgeVerdict& verdict,
                           const AnswerRecord* answer = nullptr);

}  // namespace hedge

#include "hedge/adjudicator.hpp"

#include <cmath>

#include "hedge/error.hpp"

namespace hedge {

using nlohmann::json;

const std::string_view kJudgeSystemTemplate =
    "You are a fair and careful evaluator of sports video question-answer pairs, focused on football (soccer). "
    "You will be given:\n"
    "    - question: the exact text shown to the model\n"
    "    - description: optional clarification\n"
    "    - correct_answer: the verified correct answer\n"
    "    - generated_answer: the model's answer.\n"
    "    Task type: {task_type}.\n"
    "- Video is ALWAYS football.\n"
    "If task_type == \"EventClassification\":\n"
    "- Question: identify the single most relevant event. correct_answer and generated_answer are SHORT LABELS "
    "(e.g., goal, penalty, foul, etc.). Labels count as MATCHING if they indicate the SAME event. Score 0 when "
    "event types differ or one is \"no event\" and the other is an actual event.\n"
    "If task_type == \"VideoQA\":\n"
    "- Answers must be short and directly address the question. Team names vs jersey colors are equivalent if they "
    "refer to the same side. Paraphrasing allowed unless contradictory.\n"
    "Scoring: Score 1 if generated_answer conveys the same main fact/event. Score 0 if different, contradicted, or "
    "missing. Output (STRICT JSON, no code fences): {\"reason\": \"<one concise sentence (less than 20 words)>\", "
    "\"score\": 0 or 1}";

namespace {

constexpr std::string_view kReaskPrompt =
    "Your previous reply was not a valid verdict. Reply with only the JSON object "
    "{\"reason\": \"<one concise sentence>\", \"score\": 0 or 1}.";

std::string_view strip(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string_view unwrap(std::string_view s) {
  s = strip(s);
  if (s.rfind("<think>", 0) == 0) {
    const auto close = s.find("</think>");
    if (close != std::string_view::npos) s = strip(s.substr(close + 8));
  }
  if (s.rfind("```", 0) == 0) {
    const auto newline = s.find('\n');
    s = newline == std::string_view::npos ? s.substr(3) : s.substr(newline + 1);
    s = strip(s);
    if (s.size() >= 3 && s.substr(s.size() - 3) == "```") s = strip(s.substr(0, s.size() - 3));
  }
  return s;
}

}  // namespace

std::vector<ChatMessage> build_judge_prompt(TaskType task, std::string_view question, std::string_view description,
                                            std::string_view gold_answer, std::string_view generated_answer) {
  const std::string task_name(to_string(task));
  std::string user = "task_type: " + task_name + ";\n";
  user += "question: " + std::string(question) + ";\n";
  user += "description: " + std::string(description) + ";\n";
  user += "correct_answer: " + std::string(gold_answer) + ";\n";
  user += "generated_answer: " + std::string(generated_answer);
  return {{"system", replace_all(std::string(kJudgeSystemTemplate), "{task_type}", task_name)},
          {"user", std::move(user)}};
}

JudgeVerdict parse_verdict(std::string_view raw) {
  JudgeVerdict v;
  v.raw = std::string(raw);
  json doc;
  try {
    doc = json::parse(unwrap(raw));
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::MalformedVerdict, "verdict is not JSON: " + std::string(strip(raw).substr(0, 120)));
  }
  if (!doc.is_object()) throw Error(ErrorCode::MalformedVerdict, "verdict is not a JSON object");
  if (!doc.contains("score")) throw Error(ErrorCode::MissingField, "verdict has no 'score'");
  if (!doc.contains("reason")) throw Error(ErrorCode::MissingField, "verdict has no 'reason'");
  const json& score = doc["score"];
  if (score.is_number_integer()) {
    const auto s = score.get<long long>();
    if (s != 0 && s != 1) throw Error(ErrorCode::InvalidScore, "score must be 0 or 1, got " + score.dump());
    v.score = static_cast<int>(s);
  } else {
    throw Error(ErrorCode::InvalidScore, "score must be the integer 0 or 1, got " + score.dump());
  }
  if (!doc["reason"].is_string()) throw Error(ErrorCode::MalformedVerdict, "verdict 'reason' is not a string");
  v.reason = doc["reason"].get<std::string>();
  return v;
}

std::string serialize_verdict(const JudgeVerdict& verdict) {
  return json{{"reason", verdict.reason}, {"score", verdict.score}}.dump();
}

Adjudicator::Adjudicator(ChatClient& client, AdjudicatorOptions options) : client_(client), options_(options) {}

JudgeVerdict Adjudicator::adjudicate(const SampleBundle& bundle, const AnswerRecord& answer) {
  GenerationRequest request;
  request.messages = build_judge_prompt(bundle.task_type, bundle.question, bundle.description.value_or(""),
                                        bundle.gold_answer, answer.text);
  request.temperature = 0.0;
  request.want_logprobs = false;
  request.sample_slot = "judge";
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_reasks; ++attempt) {
    const GenerationResponse response = client_.generate(request);
    try {
      JudgeVerdict v = parse_verdict(response.text);
      v.judge_model = client_.model();
      return v;
    } catch (const Error& e) {
      last_error = e.what();
      request.messages.push_back({"assistant", response.text});
      request.messages.push_back({"user", std::string(kReaskPrompt)});
    }
  }
  throw Error(ErrorCode::PersistentMalformedVerdict,
              "no valid verdict for bundle " + bundle.bundle_id + " after " +
                  std::to_string(options_.max_reasks + 1) + " attempts (" + last_error + ")");
}

std::vector<JudgeVerdict> Adjudicator::adjudicate_bundle(const SampleBundle& bundle, JudgeTarget target) {
  std::vector<JudgeVerdict> out;
  out.push_back(adjudicate(bundle, bundle.baseline));
  if (target == JudgeTarget::AllAnswers) {
    for (const auto& a : bundle.clean) out.push_back(adjudicate(bundle, a));
    for (const auto& a : bundle.noisy) out.push_back(adjudicate(bundle, a));
  }
  return out;
}

json verdict_row(const std::string& bundle_id, const JudgeVerdict& verdict, const AnswerRecord* answer) {
  json row = {{"bundle_id", bundle_id},
              {"score", verdict.score},
              {"reason", verdict.reason},
              {"judge_model", verdict.judge_model}};
  if (answer != nullptr && answer->condition != Condition::Baseline) {
    row["condition"] = to_string(answer->condition);
    row["ordinal"] = answer->ordinal;
  }
  return row;
}

}  // namespace hedge

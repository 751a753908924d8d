#include <doctest.h>

#include <random>

#include "hedge/adjudicator.hpp"
#include "hedge/error.hpp"
#include "hedge/providers.hpp"
#include "mock_endpoint.hpp"
#include "test_support.hpp"

using namespace hedge;
using hedge::testing::MockEndpoint;
using nlohmann::json;

namespace {

EndpointConfig mock_config(const MockEndpoint& mock) {
  EndpointConfig c;
  c.base_url = mock.base_url();
  c.initial_backoff = std::chrono::milliseconds(1);
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected hedge::Error");
  return ErrorCode::InvalidValue;
}

}  // namespace

TEST_CASE("judge prompt carries the rubric with the task substituted") {
  const auto event = build_judge_prompt(TaskType::EventClassification, "Identify the key event shown in the clip.",
                                        "", "goal", "header leading to goal");
  REQUIRE(event.size() == 2);
  const std::string& sys = event[0].content;
  CHECK(sys.find("You are a fair and careful evaluator") == 0);
  CHECK(sys.find("Labels count as MATCHING if they indicate the SAME event.") != std::string::npos);
  CHECK(sys.find("Paraphrasing allowed unless contradictory.") != std::string::npos);
  CHECK(sys.find("Output (STRICT JSON, no code fences)") != std::string::npos);
  CHECK(sys.find("Task type: EventClassification.") != std::string::npos);
  CHECK(sys.find("{task_type}") == std::string::npos);
  CHECK(sys.find("If task_type == \"VideoQA\":") != std::string::npos);

  const std::string& user = event[1].content;
  const auto pos = [&](const char* label) { return user.find(label); };
  CHECK(pos("task_type: EventClassification;") == 0);
  CHECK(pos("question: ") < pos("description: "));
  CHECK(pos("description: ") < pos("correct_answer: goal;"));
  CHECK(pos("correct_answer: ") < pos("generated_answer: header leading to goal"));

  const auto qa = build_judge_prompt(TaskType::VideoQA, "Who scored?", "late goal", "red 9", "the red striker");
  CHECK(qa[0].content.find("Task type: VideoQA.") != std::string::npos);
  CHECK(qa[1].content.find("description: late goal;") != std::string::npos);
}

TEST_CASE("parse_verdict accepts strict and fenced JSON") {
  const auto strict = parse_verdict(R"({"reason": "same event", "score": 1})");
  CHECK(strict.score == 1);
  CHECK(strict.reason == "same event");
  CHECK(strict.raw == R"({"reason": "same event", "score": 1})");

  CHECK(parse_verdict("```json\n{\"reason\": \"same event\", \"score\": 1}\n```").score == 1);
  CHECK(parse_verdict("```\n{\"reason\": \"r\", \"score\": 0}\n```\n").score == 0);
  CHECK(parse_verdict("  \n{\"score\": 0, \"reason\": \"different\"}\t ").score == 0);
  CHECK(parse_verdict("<think>\nlabels differ\n</think>\n{\"reason\": \"r\", \"score\": 0}").score == 0);

  CHECK(code_of([] { parse_verdict(R"({"reason": "x", "score": 2})"); }) == ErrorCode::InvalidScore);
  CHECK(code_of([] { parse_verdict(R"({"reason": "x", "score": "1"})"); }) == ErrorCode::InvalidScore);
  CHECK(code_of([] { parse_verdict(R"({"reason": "x", "score": 0.5})"); }) == ErrorCode::InvalidScore);
  CHECK(code_of([] { parse_verdict(R"({"reason": "x"})"); }) == ErrorCode::MissingField);
  CHECK(code_of([] { parse_verdict(R"({"score": 1})"); }) == ErrorCode::MissingField);
  CHECK(code_of([] { parse_verdict("score: 1"); }) == ErrorCode::MalformedVerdict);
  CHECK(code_of([] { parse_verdict("[1]"); }) == ErrorCode::MalformedVerdict);
  CHECK(code_of([] { parse_verdict(""); }) == ErrorCode::MalformedVerdict);
}

TEST_CASE("parse_verdict inverts serialize_verdict") {
  std::mt19937 rng(17);
  const std::string alphabet = "abc XYZ \"quoted\" \\ back/slash\n\t{}[]:, é ü 🙂";
  for (int trial = 0; trial < 300; ++trial) {
    JudgeVerdict v;
    v.score = static_cast<int>(rng() % 2);
    const int len = static_cast<int>(rng() % 30);
    for (int k = 0; k < len; ++k) v.reason += alphabet[rng() % alphabet.size()];
    // Random byte slicing may split a multi-byte character; keep valid UTF-8 only.
    try {
      if (!json::parse(json(v.reason).dump()).is_string()) continue;
    } catch (const json::exception&) {
      continue;
    }
    const std::string text = serialize_verdict(v);
    const auto back = parse_verdict(text);
    CHECK(back.score == v.score);
    CHECK(back.reason == v.reason);
  }
}

TEST_CASE("adjudicate caches verdicts and re-asks on malformed replies") {
  MockEndpoint mock;
  HttpTransport transport(mock_config(mock));
  ContentCache cache;
  ChatClient client(transport, cache, "judge-model");
  Adjudicator judge(client);
  const auto bundle = hedge::testing::make_uniform_bundle(1, "goal");

  const auto v = judge.adjudicate(bundle, bundle.baseline);
  CHECK(v.score == 1);
  CHECK(v.judge_model == "judge-model");
  CHECK(mock.chat_calls() == 1);
  const auto request = mock.chat_requests().back();
  CHECK(request["temperature"] == 0.0);
  CHECK_FALSE(request.contains("logprobs"));

  const auto again = judge.adjudicate(bundle, bundle.baseline);
  CHECK(mock.chat_calls() == 1);
  CHECK(again.score == v.score);
  CHECK(again.reason == v.reason);

  int served = 0;
  mock.set_chat_handler([&served](const json&) {
    ++served;
    return MockEndpoint::chat_reply(served < 3 ? "I think they match." : R"({"reason":"differs","score":0})", false);
  });
  auto other = hedge::testing::make_uniform_bundle(1, "saved shot");
  const auto recovered = judge.adjudicate(other, other.baseline);
  CHECK(recovered.score == 0);
  CHECK(served == 3);
  const auto last = mock.chat_requests().back();
  CHECK(last["messages"].size() == 6);

  mock.set_chat_handler([](const json&) { return MockEndpoint::chat_reply("not json", false); });
  auto third = hedge::testing::make_uniform_bundle(1, "corner");
  const long long before = mock.chat_calls();
  CHECK(code_of([&] { judge.adjudicate(third, third.baseline); }) == ErrorCode::PersistentMalformedVerdict);
  CHECK(mock.chat_calls() - before == 3);
}

TEST_CASE("adjudicate_bundle judges A0 by default and every answer on request") {
  MockEndpoint mock;
  HttpTransport transport(mock_config(mock));
  ContentCache cache;
  ChatClient client(transport, cache, "judge-model");
  Adjudicator judge(client);
  const auto bundle = hedge::testing::make_bundle({"a", "b", "c", "d", "e"}, {-1, -1, -1, -1, -1});
  CHECK(judge.adjudicate_bundle(bundle, JudgeTarget::Baseline).size() == 1);
  CHECK(judge.adjudicate_bundle(bundle, JudgeTarget::AllAnswers).size() == 5);
  CHECK(mock.chat_calls() == 5);

  const auto row = verdict_row(bundle.bundle_id, parse_verdict(R"({"reason":"r","score":1})"));
  CHECK(row["bundle_id"] == bundle.bundle_id);
  CHECK(row["score"] == 1);
  CHECK(row.contains("judge_model"));
  CHECK_FALSE(row.contains("condition"));
  CHECK(verdict_row("b", JudgeVerdict{}, &bundle.noisy[1])["condition"] == "noisy");
}

TEST_CASE("HTTP embedding provider caches per text") {
  MockEndpoint mock;
  HttpTransport transport(mock_config(mock));
  ContentCache cache;
  HttpEmbeddingProvider provider(transport, cache, "embedder");
  const std::vector<std::string> texts{"goal", "a goal", "goal"};
  const auto set = embed_texts(texts, provider);
  CHECK(mock.embedding_calls() == 1);
  CHECK(set.size() == 3);
  CHECK((set.vectors.row(0) - set.vectors.row(2)).norm() == 0.0);
  CHECK(std::abs(set.vectors.row(1).norm() - 1.0) < 1e-12);
  embed_texts(texts, provider);
  CHECK(mock.embedding_calls() == 1);
}

TEST_CASE("HTTP judgment provider requests every ordered pair once") {
  MockEndpoint mock;
  HttpTransport transport(mock_config(mock));
  ContentCache cache;
  HttpJudgmentProvider provider(transport, cache, "nli");
  const std::vector<std::string> texts{"goal", "goal", "foul", "corner"};
  const auto matrix = collect_pairwise_judgments(texts, provider);
  CHECK(provider.pairs_requested() == 12);
  CHECK(matrix.complete());
  CHECK(matrix.at(0, 1) == NliLabel::Entails);
  CHECK(matrix.at(0, 2) == NliLabel::Contradicts);
  const auto clusters = cluster_by_nli(matrix);
  CHECK(clusters.cluster_ids == std::vector<int>{0, 0, 1, 2});
  collect_pairwise_judgments(texts, provider);
  CHECK(provider.pairs_requested() == 12);
  CHECK(mock.classify_calls() == 1);
}

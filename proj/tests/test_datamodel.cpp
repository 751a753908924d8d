#include <doctest.h>

#include <random>

#include "hedge/datamodel.hpp"
#include "test_support.hpp"

using namespace hedge;
using hedge::testing::make_bundle;
using nlohmann::json;

namespace {

json bundle_doc(int n_clean, int n_noisy, double ll = -0.3) {
  json clean = json::array(), noisy = json::array();
  for (int i = 0; i < n_clean; ++i) clean.push_back({{"text", "goal"}, {"mean_log_likelihood", ll}, {"condition", "clean"}, {"ordinal", i}});
  for (int i = 0; i < n_noisy; ++i) noisy.push_back({{"text", "foul"}, {"mean_log_likelihood", ll}, {"condition", "noisy"}, {"ordinal", i}});
  return {{"video_id", "v1"},
          {"task_type", "EventClassification"},
          {"question", ""},
          {"gold_answer", "goal"},
          {"baseline", {{"text", "goal"}, {"mean_log_likelihood", -0.1}, {"condition", "baseline"}, {"ordinal", 0}}},
          {"clean", clean},
          {"noisy", noisy},
          {"sampling_config", to_json(SamplingConfig::for_budget(n_clean))}};
}

ErrorCode code_of(const json& doc) {
  try {
    validate_bundle(doc);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected validation failure");
  return ErrorCode::InvalidValue;
}

}  // namespace

TEST_CASE("validate_bundle accepts a balanced bundle") {
  const auto b = validate_bundle(bundle_doc(3, 3));
  CHECK(b.n() == 3);
  CHECK(b.clean.size() == 3);
  CHECK(b.noisy.size() == 3);
  CHECK(b.bundle_id.size() == 32);
}

TEST_CASE("validate_bundle error paths") {
  CHECK(code_of(bundle_doc(3, 2)) == ErrorCode::BudgetMismatch);

  auto positive = bundle_doc(3, 3);
  positive["clean"][1]["mean_log_likelihood"] = 0.2;
  CHECK(code_of(positive) == ErrorCode::PositiveLogLikelihood);

  auto missing = bundle_doc(1, 1);
  missing.erase("gold_answer");
  CHECK(code_of(missing) == ErrorCode::MissingField);

  auto blank = bundle_doc(1, 1);
  blank["noisy"][0]["text"] = "  \t ";
  CHECK(code_of(blank) == ErrorCode::EmptyText);

  auto wrong_condition = bundle_doc(1, 1);
  wrong_condition["clean"][0]["condition"] = "noisy";
  CHECK(code_of(wrong_condition) == ErrorCode::InvalidValue);

  auto ratio = bundle_doc(2, 2);
  ratio["sampling_config"]["distortion_budget"] = 1;
  CHECK(code_of(ratio) == ErrorCode::BudgetMismatch);
  ratio["sampling_config"]["samples_per_distortion"] = 2;
  CHECK_NOTHROW(validate_bundle(ratio));
}

TEST_CASE("flatten_sequence layout") {
  auto b1 = make_bundle({"a0", "a1", "n1"}, {-1, -1, -1});
  auto flat = flatten_sequence(b1);
  REQUIRE(flat.size() == 3);
  CHECK(flat[0].text == "a0");
  CHECK(flat[1].text == "a1");
  CHECK(flat[2].text == "n1");

  auto b3 = make_bundle({"a0", "a1", "a2", "a3", "n1", "n2", "n3"}, std::vector<double>(7, -1.0));
  flat = flatten_sequence(b3);
  REQUIRE(flat.size() == 7);
  for (int i = 4; i < 7; ++i) CHECK(flat[i].condition == Condition::Noisy);
  CHECK(flat[1].condition == Condition::Clean);
}

TEST_CASE("property: flatten/split identity and bit-exact JSON round trip") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ll(-12.0, 0.0);
  std::uniform_int_distribution<int> nd(1, 9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = nd(rng);
    std::vector<std::string> texts;
    std::vector<double> lls;
    for (int i = 0; i < 2 * n + 1; ++i) {
      texts.push_back("answer " + std::to_string(rng() % 4));
      lls.push_back(trial % 7 == 0 ? -0.0 : ll(rng) / 3.0);
    }
    auto b = make_bundle(texts, lls);
    b.sampling_config.seed = rng();
    b.sampling_config.sample_temperature = 0.1 + ll(rng) * -0.1;
    if (trial % 2) b.description = "desc " + std::to_string(trial);
    b.bundle_id = compute_bundle_id(b.video_id, b.task_type, b.question, b.sampling_config);

    const auto split = split_by_condition(flatten_sequence(b));
    CHECK(split.baseline == b.baseline);
    CHECK(split.clean == b.clean);
    CHECK(split.noisy == b.noisy);

    const auto decoded = validate_bundle(json::parse(to_json(b).dump()));
    CHECK(decoded == b);
  }
}

TEST_CASE("bundle_id is a content hash of identity fields") {
  const auto cfg = SamplingConfig::for_budget(4, 11);
  const auto id = compute_bundle_id("v", TaskType::VideoQA, "q", cfg);
  CHECK(id == compute_bundle_id("v", TaskType::VideoQA, "q", cfg));
  CHECK(id != compute_bundle_id("v", TaskType::EventClassification, "q", cfg));
  auto other = cfg;
  other.frame_count = 8;
  CHECK(id != compute_bundle_id("v", TaskType::VideoQA, "q", other));
}

TEST_CASE("truncate_bundle keeps prefixes and rehashes") {
  auto b = make_bundle({"a", "b", "c", "d", "e"}, {-1, -1, -1, -1, -1});
  const auto t = truncate_bundle(b, 1);
  CHECK(t.n() == 1);
  CHECK(t.sampling_config.distortion_budget == 1);
  CHECK(t.clean[0].text == "b");
  CHECK(t.noisy[0].text == "d");
  CHECK(t.bundle_id != b.bundle_id);
  CHECK_NOTHROW(check_bundle(t));
  CHECK_THROWS_AS(truncate_bundle(b, 3), Error);
}

TEST_CASE("score rows serialize with optional fields") {
  ScoreRow r{"b1", 0.5, 0.25, 0.75, Label::Hallucinated, Backend::Nli, TaskType::EventClassification};
  const auto j = to_json(r);
  CHECK(j.at("label") == 0);
  CHECK(score_row_from_json(j) == r);
  ScoreRow bare{"b2", std::nullopt, std::nullopt, std::nullopt, std::nullopt, Backend::Embedding, TaskType::VideoQA};
  CHECK_FALSE(to_json(bare).contains("label"));
  CHECK(score_row_from_json(to_json(bare)) == bare);
}

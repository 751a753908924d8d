#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hedge/error.hpp"

namespace hedge {

enum class Condition { Baseline, Clean, Noisy };
enum class TaskType { EventClassification, VideoQA };
enum class Backend { Embedding, Nli };

/// Adjudicated label. Numeric values follow the judge protocol.
enum class Label : int { Hallucinated = 0, Supported = 1 };

std::string_view to_string(Condition c) noexcept;
std::string_view to_string(TaskType t) noexcept;
std::string_view to_string(Backend b) noexcept;
Condition parse_condition(std::string_view s);
TaskType parse_task_type(std::string_view s);
Backend parse_backend(std::string_view s);

struct AnswerRecord {
  std::string text;
  double mean_log_likelihood = 0.0;
  Condition condition = Condition::Clean;
  int ordinal = 0;

  friend bool operator==(const AnswerRecord&, const AnswerRecord&) = default;
};

struct SamplingConfig {
  int n = 1;
  int distortion_budget = 1;
  int frame_count = 24;
  int max_pixels = 100352;
  double baseline_temperature = 0.0;
  double sample_temperature = 1.0;
  std::uint64_t seed = 0;
  /// Clean (and noisy) samples per unit of distortion budget; n = D * ratio.
  int samples_per_distortion = 1;

  static SamplingConfig for_budget(int distortion_budget, std::uint64_t seed = 0);

  friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

struct SampleBundle {
  std::string bundle_id;
  std::string video_id;
  TaskType task_type = TaskType::VideoQA;
  std::string question;
  std::string gold_answer;
  std::optional<std::string> description;
  AnswerRecord baseline;
  std::vector<AnswerRecord> clean;
  std::vector<AnswerRecord> noisy;
  SamplingConfig sampling_config;

  int n() const noexcept { return static_cast<int>(clean.size()); }

  friend bool operator==(const SampleBundle&, const SampleBundle&) = default;
};

struct ScoreRow {
  std::string bundle_id;
  std::optional<double> se;
  std::optional<double> radflag;
  std::optional<double> vase;
  std::optional<Label> label;
  Backend backend = Backend::Embedding;
  TaskType task_type = TaskType::VideoQA;

  friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

// -- validation and layout ---------------------------------------------------

/// Decodes and checks a bundle document. Throws hedge::Error with
/// MissingField, BudgetMismatch, EmptyText, PositiveLogLikelihood or InvalidValue.
SampleBundle validate_bundle(const nlohmann::json& raw);

/// Checks the invariants of an already-typed bundle.
void check_bundle(const SampleBundle& bundle);

/// [A0, A1..An, N1..Nn].
std::vector<AnswerRecord> flatten_sequence(const SampleBundle& bundle);

struct SplitSequence {
  AnswerRecord baseline;
  std::vector<AnswerRecord> clean;
  std::vector<AnswerRecord> noisy;
};
SplitSequence split_by_condition(const std::vector<AnswerRecord>& flat);

/// Content hash over (video_id, task_type, question, sampling_config).
std::string compute_bundle_id(std::string_view video_id, TaskType task, std::string_view question,
                              const SamplingConfig& config);

/// Keeps the first `n` clean and noisy answers; the result describes a
/// bundle sampled at distortion budget n / samples_per_distortion.
SampleBundle truncate_bundle(const SampleBundle& bundle, int n);

// -- serialization -----------------------------------------------------------

nlohmann::json to_json(const AnswerRecord& a);
nlohmann::json to_json(const SamplingConfig& c);
nlohmann::json to_json(const SampleBundle& b);
nlohmann::json to_json(const ScoreRow& r);

SamplingConfig sampling_config_from_json(const nlohmann::json& j);
ScoreRow score_row_from_json(const nlohmann::json& j);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
/// One compact JSON document per line, trailing newline.
std::string dump_jsonl(const std::vector<nlohmann::json>& rows);

std::vector<SampleBundle> read_bundles(const std::filesystem::path& path);
void write_bundles(const std::filesystem::path& path, const std::vector<SampleBundle>& bundles);

}  // namespace hedge

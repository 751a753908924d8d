#include "hedge/datamodel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hedge/hash.hpp"

namespace hedge {

using nlohmann::json;

std::string_view to_string(Condition c) noexcept {
  switch (c) {
    case Condition::Baseline: return "baseline";
    case Condition::Clean: return "clean";
    case Condition::Noisy: return "noisy";
  }
  return "clean";
}

std::string_view to_string(TaskType t) noexcept {
  return t == TaskType::EventClassification ? "EventClassification" : "VideoQA";
}

std::string_view to_string(Backend b) noexcept { return b == Backend::Embedding ? "embedding" : "nli"; }

Condition parse_condition(std::string_view s) {
  if (s == "baseline") return Condition::Baseline;
  if (s == "clean") return Condition::Clean;
  if (s == "noisy") return Condition::Noisy;
  throw Error(ErrorCode::InvalidValue, "unknown condition '" + std::string(s) + "'");
}

TaskType parse_task_type(std::string_view s) {
  if (s == "EventClassification") return TaskType::EventClassification;
  if (s == "VideoQA") return TaskType::VideoQA;
  throw Error(ErrorCode::InvalidValue, "unknown task_type '" + std::string(s) + "'");
}

Backend parse_backend(std::string_view s) {
  if (s == "embedding") return Backend::Embedding;
  if (s == "nli") return Backend::Nli;
  throw Error(ErrorCode::InvalidValue, "unknown backend '" + std::string(s) + "'");
}

SamplingConfig SamplingConfig::for_budget(int distortion_budget, std::uint64_t seed) {
  SamplingConfig c;
  c.n = distortion_budget;
  c.distortion_budget = distortion_budget;
  c.seed = seed;
  return c;
}

namespace {

const json& require(const json& obj, const char* key, std::string_view where) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
    throw Error(ErrorCode::MissingField, std::string(where) + "." + key);
  }
  return obj.at(key);
}

template <typename T>
T require_as(const json& obj, const char* key, std::string_view where) {
  const json& v = require(obj, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidValue, std::string(where) + "." + key + " has the wrong type");
  }
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch) != 0; });
}

AnswerRecord answer_from_json(const json& j, std::string_view where) {
  AnswerRecord a;
  a.text = require_as<std::string>(j, "text", where);
  a.mean_log_likelihood = require_as<double>(j, "mean_log_likelihood", where);
  a.condition = parse_condition(require_as<std::string>(j, "condition", where));
  a.ordinal = j.contains("ordinal") ? j.at("ordinal").get<int>() : 0;
  return a;
}

void check_answer(const AnswerRecord& a, Condition expected, std::string_view where) {
  if (a.condition != expected) {
    throw Error(ErrorCode::InvalidValue, std::string(where) + " has condition " +
                                             std::string(to_string(a.condition)) + ", expected " +
                                             std::string(to_string(expected)));
  }
  if (blank(a.text)) throw Error(ErrorCode::EmptyText, std::string(where) + " text is blank");
  if (std::isnan(a.mean_log_likelihood)) {
    throw Error(ErrorCode::InvalidValue, std::string(where) + " mean_log_likelihood is NaN");
  }
  if (a.mean_log_likelihood > 0.0) {
    throw Error(ErrorCode::PositiveLogLikelihood,
                std::string(where) + " mean_log_likelihood = " + std::to_string(a.mean_log_likelihood));
  }
}

}  // namespace

SamplingConfig sampling_config_from_json(const json& j) {
  constexpr std::string_view where = "sampling_config";
  SamplingConfig c;
  c.n = require_as<int>(j, "n", where);
  c.distortion_budget = require_as<int>(j, "distortion_budget", where);
  c.frame_count = require_as<int>(j, "frame_count", where);
  c.max_pixels = require_as<int>(j, "max_pixels", where);
  c.baseline_temperature = require_as<double>(j, "baseline_temperature", where);
  c.sample_temperature = require_as<double>(j, "sample_temperature", where);
  c.seed = require_as<std::uint64_t>(j, "seed", where);
  if (j.contains("samples_per_distortion")) c.samples_per_distortion = j.at("samples_per_distortion").get<int>();
  return c;
}

void check_bundle(const SampleBundle& b) {
  const SamplingConfig& c = b.sampling_config;
  if (c.n < 1 || c.distortion_budget < 1 || c.frame_count < 1 || c.max_pixels < 1 ||
      c.samples_per_distortion < 1) {
    throw Error(ErrorCode::InvalidValue, "sampling_config counts must be positive");
  }
  if (c.baseline_temperature < 0.0 || !(c.sample_temperature > 0.0)) {
    throw Error(ErrorCode::InvalidValue, "sampling_config temperatures out of range");
  }
  if (b.clean.size() != b.noisy.size()) {
    throw Error(ErrorCode::BudgetMismatch, std::to_string(b.clean.size()) + " clean vs " +
                                               std::to_string(b.noisy.size()) + " noisy answers");
  }
  if (static_cast<int>(b.clean.size()) != c.n) {
    throw Error(ErrorCode::BudgetMismatch, "sampling_config.n = " + std::to_string(c.n) + " but " +
                                               std::to_string(b.clean.size()) + " clean answers");
  }
  if (c.n != c.distortion_budget * c.samples_per_distortion) {
    throw Error(ErrorCode::BudgetMismatch, "n = " + std::to_string(c.n) + " does not match distortion_budget " +
                                               std::to_string(c.distortion_budget));
  }
  check_answer(b.baseline, Condition::Baseline, "baseline");
  for (std::size_t i = 0; i < b.clean.size(); ++i) check_answer(b.clean[i], Condition::Clean, "clean[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < b.noisy.size(); ++i) check_answer(b.noisy[i], Condition::Noisy, "noisy[" + std::to_string(i) + "]");
}

SampleBundle validate_bundle(const json& raw) {
  constexpr std::string_view where = "bundle";
  if (!raw.is_object()) throw Error(ErrorCode::InvalidValue, "bundle is not a JSON object");
  SampleBundle b;
  b.video_id = require_as<std::string>(raw, "video_id", where);
  b.task_type = parse_task_type(require_as<std::string>(raw, "task_type", where));
  b.question = require_as<std::string>(raw, "question", where);
  b.gold_answer = require_as<std::string>(raw, "gold_answer", where);
  if (raw.contains("description") && !raw.at("description").is_null()) {
    b.description = raw.at("description").get<std::string>();
  }
  b.baseline = answer_from_json(require(raw, "baseline", where), "baseline");
  for (const auto& a : require(raw, "clean", where)) b.clean.push_back(answer_from_json(a, "clean"));
  for (const auto& a : require(raw, "noisy", where)) b.noisy.push_back(answer_from_json(a, "noisy"));
  b.sampling_config = sampling_config_from_json(require(raw, "sampling_config", where));
  if (raw.contains("bundle_id") && !raw.at("bundle_id").is_null()) {
    b.bundle_id = raw.at("bundle_id").get<std::string>();
  } else {
    b.bundle_id = compute_bundle_id(b.video_id, b.task_type, b.question, b.sampling_config);
  }
  check_bundle(b);
  return b;
}

std::vector<AnswerRecord> flatten_sequence(const SampleBundle& b) {
  std::vector<AnswerRecord> flat;
  flat.reserve(1 + b.clean.size() + b.noisy.size());
  flat.push_back(b.baseline);
  flat.insert(flat.end(), b.clean.begin(), b.clean.end());
  flat.insert(flat.end(), b.noisy.begin(), b.noisy.end());
  return flat;
}

SplitSequence split_by_condition(const std::vector<AnswerRecord>& flat) {
  SplitSequence out;
  for (const auto& a : flat) {
    switch (a.condition) {
      case Condition::Baseline: out.baseline = a; break;
      case Condition::Clean: out.clean.push_back(a); break;
      case Condition::Noisy: out.noisy.push_back(a); break;
    }
  }
  return out;
}

std::string compute_bundle_id(std::string_view video_id, TaskType task, std::string_view question,
                              const SamplingConfig& config) {
  json key = {{"video_id", video_id},
              {"task_type", to_string(task)},
              {"question", question},
              {"sampling_config", to_json(config)}};
  return content_hash(key).substr(0, 32);
}

SampleBundle truncate_bundle(const SampleBundle& bundle, int n) {
  if (n < 1 || n > bundle.n()) {
    throw Error(ErrorCode::InvalidValue, "cannot truncate a bundle of n = " + std::to_string(bundle.n()) +
                                             " to n = " + std::to_string(n));
  }
  const int ratio = bundle.sampling_config.samples_per_distortion;
  if (n % ratio != 0) {
    throw Error(ErrorCode::InvalidValue, "truncated n must be a multiple of samples_per_distortion");
  }
  SampleBundle out = bundle;
  out.clean.resize(n);
  out.noisy.resize(n);
  out.sampling_config.n = n;
  out.sampling_config.distortion_budget = n / ratio;
  out.bundle_id = compute_bundle_id(out.video_id, out.task_type, out.question, out.sampling_config);
  return out;
}

json to_json(const AnswerRecord& a) {
  return {{"text", a.text},
          {"mean_log_likelihood", a.mean_log_likelihood},
          {"condition", to_string(a.condition)},
          {"ordinal", a.ordinal}};
}

json to_json(const SamplingConfig& c) {
  json j = {{"n", c.n},
            {"distortion_budget", c.distortion_budget},
            {"frame_count", c.frame_count},
            {"max_pixels", c.max_pixels},
            {"baseline_temperature", c.baseline_temperature},
            {"sample_temperature", c.sample_temperature},
            {"seed", c.seed}};
  if (c.samples_per_distortion != 1) j["samples_per_distortion"] = c.samples_per_distortion;
  return j;
}

json to_json(const SampleBundle& b) {
  json clean = json::array();
  for (const auto& a : b.clean) clean.push_back(to_json(a));
  json noisy = json::array();
  for (const auto& a : b.noisy) noisy.push_back(to_json(a));
  json j = {{"bundle_id", b.bundle_id},     {"video_id", b.video_id},
            {"task_type", to_string(b.task_type)}, {"question", b.question},
            {"gold_answer", b.gold_answer}, {"baseline", to_json(b.baseline)},
            {"clean", std::move(clean)},    {"noisy", std::move(noisy)},
            {"sampling_config", to_json(b.sampling_config)}};
  if (b.description) j["description"] = *b.description;
  return j;
}

json to_json(const ScoreRow& r) {
  json j = {{"bundle_id", r.bundle_id},
            {"backend", to_string(r.backend)},
            {"task_type", to_string(r.task_type)}};
  if (r.se) j["se"] = *r.se;
  if (r.radflag) j["radflag"] = *r.radflag;
  if (r.vase) j["vase"] = *r.vase;
  if (r.label) j["label"] = static_cast<int>(*r.label);
  return j;
}

ScoreRow score_row_from_json(const json& j) {
  constexpr std::string_view where = "score_row";
  ScoreRow r;
  r.bundle_id = require_as<std::string>(j, "bundle_id", where);
  r.backend = parse_backend(require_as<std::string>(j, "backend", where));
  if (j.contains("task_type")) r.task_type = parse_task_type(j.at("task_type").get<std::string>());
  if (j.contains("se")) r.se = j.at("se").get<double>();
  if (j.contains("radflag")) r.radflag = j.at("radflag").get<double>();
  if (j.contains("vase")) r.vase = j.at("vase").get<double>();
  if (j.contains("label")) {
    const int v = j.at("label").get<int>();
    if (v != 0 && v != 1) throw Error(ErrorCode::InvalidValue, "label must be 0 or 1");
    r.label = static_cast<Label>(v);
  }
  return r;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::InvalidValue, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::string dump_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out.push_back('\n');
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << dump_jsonl(rows);
}

std::vector<SampleBundle> read_bundles(const std::filesystem::path& path) {
  std::vector<SampleBundle> bundles;
  for (const auto& row : read_jsonl(path)) bundles.push_back(validate_bundle(row));
  return bundles;
}

void write_bundles(const std::filesystem::path& path, const std::vector<SampleBundle>& bundles) {
  std::vector<json> rows;
  rows.reserve(bundles.size());
  for (const auto& b : bundles) rows.push_back(to_json(b));
  write_jsonl(path, rows);
}

}  // namespace hedge

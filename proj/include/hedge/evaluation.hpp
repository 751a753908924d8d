#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hedge/clustering.hpp"
#include "hedge/datamodel.hpp"
#include "hedge/metrics.hpp"

namespace hedge {

/// Mann-Whitney AUC with midranks; the positive class is Label::Hallucinated.
/// Throws LengthMismatch and SingleClass.
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

struct LabeledBundle {
  SampleBundle bundle;
  Label label = Label::Hallucinated;
};

/// Baseline verdicts keyed by bundle_id from a verdict JSONL file; rows for
/// sampled answers (those carrying a condition) are skipped.
std::map<std::string, Label> read_labels(const std::filesystem::path& path);

/// Throws MissingData when a bundle has no label.
std::vector<LabeledBundle> join_labels(const std::vector<SampleBundle>& bundles,
                                       const std::map<std::string, Label>& labels);

/// Deterministic 20% validation split by hash of bundle_id.
bool in_validation_split(std::string_view bundle_id);

/// 0.00, 0.01, ..., 1.00
std::vector<double> default_tau_grid();

struct TauSearch {
  double tau = 0.0;
  double auc = 0.0;
  std::vector<std::pair<double, double>> curve;  // (tau, SE AUC)
};

/// Clusters the VideoQA bundles with the embedding backend at every grid
/// value and keeps the tau with the highest SE AUC (ties to the smallest).
TauSearch tune_tau(std::span<const LabeledBundle> validation, std::span<const double> grid,
                   EmbeddingProvider& provider, const MetricConfig& metric, int knn_k = 0);

/// Same search pooled over several groups of bundles (one per setting); each
/// group is clustered on its own and the SE scores are concatenated.
TauSearch tune_tau_pooled(std::span<const std::vector<LabeledBundle>> groups, std::span<const double> grid,
                          EmbeddingProvider& provider, const MetricConfig& metric, int knn_k = 0);

// -- sweeps -------------------------------------------------------------------

enum class SweepAxis { DistortionBudget, FrameCount, MaxPixels };
std::string_view to_string(SweepAxis axis) noexcept;
SweepAxis parse_sweep_axis(std::string_view s);

enum class TauPolicy { Fixed, PerSetting, Global };
std::string_view to_string(TauPolicy policy) noexcept;
TauPolicy parse_tau_policy(std::string_view s);

/// Markers for the best cells: the maximum of each task/backend block, or of
/// each metric row. Ties mark the first maximum in row-major order.
enum class BoldRule { BlockMax, RowMax };
std::string_view to_string(BoldRule rule) noexcept;
BoldRule parse_bold_rule(std::string_view s);

struct SweepSpec {
  SweepAxis axis = SweepAxis::DistortionBudget;
  std::vector<int> values;
  SamplingConfig fixed;
  Backend backend = Backend::Embedding;
  MetricConfig metric_config;
  TauPolicy tau_policy = TauPolicy::PerSetting;
  double tau = 0.7;
  std::vector<double> tau_grid = default_tau_grid();
  int knn_k = 0;
  BoldRule bold_rule = BoldRule::BlockMax;
};

inline constexpr std::array<std::string_view, 3> kMetricNames = {"SE", "RadFlag", "VASE"};

struct MetricBlock {
  TaskType task = TaskType::VideoQA;
  Backend backend = Backend::Embedding;
  Eigen::Matrix<double, 3, Eigen::Dynamic> auc;  // rows SE, RadFlag, VASE
  Eigen::Matrix<bool, 3, Eigen::Dynamic> bold;
};

struct ResultTable {
  SweepAxis axis = SweepAxis::DistortionBudget;
  std::vector<int> values;
  std::vector<MetricBlock> blocks;
  std::vector<double> taus;  // per column; empty for the NLI backend
};

void mark_best(ResultTable& table, BoldRule rule);

struct SweepProviders {
  EmbeddingProvider* embedder = nullptr;
  JudgmentProvider* judge = nullptr;
};

/// Bundles of `corpus` at one swept value: per item the exact configuration,
/// else a prefix of the smallest larger distortion budget. Throws MissingData.
std::vector<LabeledBundle> bundles_at(std::span<const LabeledBundle> corpus, const SweepSpec& spec, int value);

/// AUC of SE, RadFlag and VASE per task at every swept value. When tau is
/// tuned, validation bundles are excluded from the reported AUCs.
ResultTable run_sweep(const SweepSpec& spec, std::span<const LabeledBundle> corpus, const SweepProviders& providers);

/// AUC of SE, RadFlag and VASE over already-scored rows with labels.
std::array<double, 3> metric_aucs(std::span<const ScoreRow> rows);

enum class ReportFormat { Markdown, Csv };
ReportFormat parse_report_format(std::string_view s);

std::string render_report(const ResultTable& table, ReportFormat format);

/// Reads a table in the CSV report layout (task,backend,metric,<values...>).
ResultTable load_table_csv(const std::filesystem::path& path, SweepAxis axis = SweepAxis::DistortionBudget,
                           BoldRule rule = BoldRule::BlockMax);
ResultTable parse_table_csv(std::string_view text, SweepAxis axis = SweepAxis::DistortionBudget,
                            BoldRule rule = BoldRule::BlockMax);

/// "1..10", "1,2,4" or a mix such as "4,8..12".
std::vector<int> parse_int_list(std::string_view s);

}  // namespace hedge

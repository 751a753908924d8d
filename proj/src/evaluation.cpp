#include "hedge/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <optional>
#include <numeric>
#include <sstream>

#include "hedge/error.hpp"
#include "hedge/hash.hpp"

namespace hedge {

using nlohmann::json;

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(scores.size()) + " scores but " +
                                               std::to_string(labels.size()) + " labels");
  }
  const std::size_t m = scores.size();
  long long positives = 0;
  for (const Label l : labels) positives += l == Label::Hallucinated;
  const long long negatives = static_cast<long long>(m) - positives;
  if (positives == 0 || negatives == 0) throw Error(ErrorCode::SingleClass, "labels contain a single class");
  for (const double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::InvalidValue, "score is NaN");
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum of positives, so midranks stay integral.
  long long twice_rank_sum = 0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && scores[order[j]] == scores[order[i]]) ++j;
    const long long twice_midrank = static_cast<long long>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::Hallucinated) twice_rank_sum += twice_midrank;
    }
    i = j;
  }
  const long long twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * positives * negatives);
}

std::map<std::string, Label> read_labels(const std::filesystem::path& path) {
  std::map<std::string, Label> out;
  for (const auto& row : read_jsonl(path)) {
    if (row.contains("condition")) continue;
    if (!row.contains("bundle_id") || !row.contains("score")) {
      throw Error(ErrorCode::MissingField, "label row needs bundle_id and score in " + path.string());
    }
    const int score = row.at("score").get<int>();
    if (score != 0 && score != 1) throw Error(ErrorCode::InvalidScore, "label score must be 0 or 1");
    out[row.at("bundle_id").get<std::string>()] = score == 1 ? Label::Supported : Label::Hallucinated;
  }
  return out;
}

std::vector<LabeledBundle> join_labels(const std::vector<SampleBundle>& bundles,
                                       const std::map<std::string, Label>& labels) {
  std::vector<LabeledBundle> out;
  out.reserve(bundles.size());
  for (const auto& b : bundles) {
    const auto it = labels.find(b.bundle_id);
    if (it == labels.end()) throw Error(ErrorCode::MissingData, "no label for bundle " + b.bundle_id);
    out.push_back({b, it->second});
  }
  return out;
}

bool in_validation_split(std::string_view bundle_id) { return hash64(bundle_id) % 5 == 0; }

std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  return grid;
}

namespace {

struct PreparedBundle {
  const SampleBundle* bundle;
  Label label;
  Eigen::MatrixXd similarity;
};

std::vector<PreparedBundle> prepare(std::span<const LabeledBundle> items, EmbeddingProvider& provider) {
  std::vector<PreparedBundle> out;
  for (const auto& item : items) {
    if (item.bundle.task_type != TaskType::VideoQA) continue;
    const EmbeddingSet set = embed_texts(flattened_texts(item.bundle), provider, item.bundle.bundle_id);
    out.push_back({&item.bundle, item.label, set.vectors * set.vectors.transpose()});
  }
  return out;
}

TauSearch search(const std::vector<PreparedBundle>& prepared, std::span<const double> grid,
                 const MetricConfig& metric, int knn_k) {
  if (grid.empty()) throw Error(ErrorCode::InvalidValue, "tau grid is empty");
  if (prepared.empty()) throw Error(ErrorCode::MissingData, "no VideoQA bundles to tune tau on");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<Label> labels;
  for (const auto& p : prepared) labels.push_back(p.label);
  TauSearch result;
  bool first = true;
  std::vector<double> se(prepared.size());
  for (const double tau : sorted) {
    const ClusteringConfig cfg{tau, knn_k};
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      se[i] = compute_se(*prepared[i].bundle, cluster_by_similarity(prepared[i].similarity, cfg), metric);
    }
    const double auc = roc_auc(se, labels);
    result.curve.emplace_back(tau, auc);
    if (first || auc > result.auc) {
      result.tau = tau;
      result.auc = auc;
      first = false;
    }
  }
  return result;
}

}  // namespace

TauSearch tune_tau(std::span<const LabeledBundle> validation, std::span<const double> grid,
                   EmbeddingProvider& provider, const MetricConfig& metric, int knn_k) {
  return search(prepare(validation, provider), grid, metric, knn_k);
}

TauSearch tune_tau_pooled(std::span<const std::vector<LabeledBundle>> groups, std::span<const double> grid,
                          EmbeddingProvider& provider, const MetricConfig& metric, int knn_k) {
  std::vector<PreparedBundle> all;
  for (const auto& g : groups) {
    auto part = prepare(g, provider);
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  return search(all, grid, metric, knn_k);
}

// -- enums --------------------------------------------------------------------------

std::string_view to_string(SweepAxis axis) noexcept {
  switch (axis) {
    case SweepAxis::DistortionBudget: return "distortion_budget";
    case SweepAxis::FrameCount: return "frame_count";
    case SweepAxis::MaxPixels: return "max_pixels";
  }
  return "distortion_budget";
}

SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "distortion_budget") return SweepAxis::DistortionBudget;
  if (s == "frame_count") return SweepAxis::FrameCount;
  if (s == "max_pixels") return SweepAxis::MaxPixels;
  throw Error(ErrorCode::InvalidValue, "unknown sweep axis '" + std::string(s) + "'");
}

std::string_view to_string(TauPolicy policy) noexcept {
  switch (policy) {
    case TauPolicy::Fixed: return "fixed";
    case TauPolicy::PerSetting: return "per_setting";
    case TauPolicy::Global: return "global";
  }
  return "fixed";
}

TauPolicy parse_tau_policy(std::string_view s) {
  if (s == "fixed") return TauPolicy::Fixed;
  if (s == "per_setting") return TauPolicy::PerSetting;
  if (s == "global") return TauPolicy::Global;
  throw Error(ErrorCode::InvalidValue, "unknown tau policy '" + std::string(s) + "'");
}

std::string_view to_string(BoldRule rule) noexcept { return rule == BoldRule::BlockMax ? "block_max" : "row_max"; }

BoldRule parse_bold_rule(std::string_view s) {
  if (s == "block_max") return BoldRule::BlockMax;
  if (s == "row_max") return BoldRule::RowMax;
  throw Error(ErrorCode::InvalidValue, "unknown bold rule '" + std::string(s) + "'");
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  throw Error(ErrorCode::InvalidValue, "unknown report format '" + std::string(s) + "'");
}

// -- sweeps -------------------------------------------------------------------------

void mark_best(ResultTable& table, BoldRule rule) {
  for (auto& block : table.blocks) {
    const Eigen::Index cols = block.auc.cols();
    block.bold = Eigen::Matrix<bool, 3, Eigen::Dynamic>::Constant(3, cols, false);
    const auto mark_max = [&](int row_begin, int row_end) {
      int best_r = -1;
      Eigen::Index best_c = -1;
      for (int r = row_begin; r < row_end; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          const double v = block.auc(r, c);
          if (std::isnan(v)) continue;
          if (best_r < 0 || v > block.auc(best_r, best_c)) {
            best_r = r;
            best_c = c;
          }
        }
      }
      if (best_r >= 0) block.bold(best_r, best_c) = true;
    };
    if (rule == BoldRule::BlockMax) {
      mark_max(0, 3);
    } else {
      for (int r = 0; r < 3; ++r) mark_max(r, r + 1);
    }
  }
}

std::vector<LabeledBundle> bundles_at(std::span<const LabeledBundle> corpus, const SweepSpec& spec, int value) {
  int budget = spec.fixed.distortion_budget;
  int frames = spec.fixed.frame_count;
  int pixels = spec.fixed.max_pixels;
  switch (spec.axis) {
    case SweepAxis::DistortionBudget: budget = value; break;
    case SweepAxis::FrameCount: frames = value; break;
    case SweepAxis::MaxPixels: pixels = value; break;
  }

  // Items in order of first appearance, each with its candidate bundles.
  std::map<std::string, std::size_t> item_index;
  std::vector<std::vector<const LabeledBundle*>> items;
  for (const auto& lb : corpus) {
    const auto& c = lb.bundle.sampling_config;
    if (c.frame_count != frames || c.max_pixels != pixels || c.distortion_budget < budget) continue;
    const std::string key = json::array({lb.bundle.video_id, to_string(lb.bundle.task_type), lb.bundle.question}).dump();
    const auto [it, inserted] = item_index.emplace(key, items.size());
    if (inserted) items.emplace_back();
    items[it->second].push_back(&lb);
  }

  std::vector<LabeledBundle> out;
  for (const auto& candidates : items) {
    const bool has_exact = std::any_of(candidates.begin(), candidates.end(), [&](const LabeledBundle* lb) {
      return lb->bundle.sampling_config.distortion_budget == budget;
    });
    if (has_exact) {
      for (const auto* lb : candidates) {
        if (lb->bundle.sampling_config.distortion_budget == budget) out.push_back(*lb);
      }
      continue;
    }
    int smallest = std::numeric_limits<int>::max();
    for (const auto* lb : candidates) smallest = std::min(smallest, lb->bundle.sampling_config.distortion_budget);
    for (const auto* lb : candidates) {
      if (lb->bundle.sampling_config.distortion_budget != smallest) continue;
      const int n = budget * lb->bundle.sampling_config.samples_per_distortion;
      out.push_back({truncate_bundle(lb->bundle, n), lb->label});
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::MissingData, "no bundles at " + std::string(to_string(spec.axis)) + "=" +
                                            std::to_string(value));
  }
  return out;
}

std::array<double, 3> metric_aucs(std::span<const ScoreRow> rows) {
  std::array<std::vector<double>, 3> scores;
  std::vector<Label> labels;
  for (const auto& r : rows) {
    if (!r.label) throw Error(ErrorCode::MissingData, "score row " + r.bundle_id + " has no label");
    if (!r.se || !r.radflag || !r.vase) throw Error(ErrorCode::MissingData, "score row " + r.bundle_id + " is incomplete");
    scores[0].push_back(*r.se);
    scores[1].push_back(*r.radflag);
    scores[2].push_back(*r.vase);
    labels.push_back(*r.label);
  }
  return {roc_auc(scores[0], labels), roc_auc(scores[1], labels), roc_auc(scores[2], labels)};
}

namespace {

constexpr std::array<TaskType, 2> kTaskOrder = {TaskType::EventClassification, TaskType::VideoQA};

struct Column {
  double tau = std::numeric_limits<double>::quiet_NaN();
  std::map<TaskType, std::array<double, 3>> aucs;
};

std::vector<LabeledBundle> held_out(const std::vector<LabeledBundle>& bundles, bool tuned) {
  if (!tuned) return bundles;
  std::vector<LabeledBundle> out;
  for (const auto& lb : bundles) {
    if (!in_validation_split(lb.bundle.bundle_id)) out.push_back(lb);
  }
  return out;
}

std::vector<LabeledBundle> validation_part(const std::vector<LabeledBundle>& bundles) {
  std::vector<LabeledBundle> out;
  for (const auto& lb : bundles) {
    if (in_validation_split(lb.bundle.bundle_id)) out.push_back(lb);
  }
  return out;
}

Column evaluate_column(const SweepSpec& spec, const std::vector<LabeledBundle>& bundles,
                       const SweepProviders& providers, std::optional<double> global_tau) {
  Column col;
  const bool embedding = spec.backend == Backend::Embedding;
  bool tuned = false;
  if (embedding) {
    if (spec.tau_policy == TauPolicy::Fixed) {
      col.tau = spec.tau;
    } else if (spec.tau_policy == TauPolicy::Global) {
      col.tau = *global_tau;
      tuned = true;
    } else {
      col.tau = tune_tau(validation_part(bundles), spec.tau_grid, *providers.embedder, spec.metric_config, spec.knn_k)
                    .tau;
      tuned = true;
    }
  }
  const std::vector<LabeledBundle> eval = held_out(bundles, tuned);
  BundleClusterer clusterer = embedding ? BundleClusterer::embedding(*providers.embedder, {col.tau, spec.knn_k})
                                        : BundleClusterer::nli(*providers.judge);
  std::map<TaskType, std::vector<ScoreRow>> rows;
  for (const auto& lb : eval) {
    ScoreRow row = score_bundle(lb.bundle, clusterer.cluster(lb.bundle), spec.metric_config);
    row.label = lb.label;
    rows[lb.bundle.task_type].push_back(std::move(row));
  }
  for (const auto& [task, task_rows] : rows) col.aucs[task] = metric_aucs(task_rows);
  return col;
}

}  // namespace

ResultTable run_sweep(const SweepSpec& spec, std::span<const LabeledBundle> corpus, const SweepProviders& providers) {
  if (spec.values.empty()) throw Error(ErrorCode::InvalidValue, "sweep has no values");
  for (std::size_t i = 1; i < spec.values.size(); ++i) {
    if (spec.values[i] <= spec.values[i - 1]) throw Error(ErrorCode::InvalidValue, "sweep values must increase");
  }
  if (spec.backend == Backend::Embedding && providers.embedder == nullptr) {
    throw Error(ErrorCode::InvalidValue, "embedding sweep needs an embedding provider");
  }
  if (spec.backend == Backend::Nli && providers.judge == nullptr) {
    throw Error(ErrorCode::InvalidValue, "NLI sweep needs a judgment provider");
  }

  std::vector<std::vector<LabeledBundle>> settings;
  for (const int v : spec.values) settings.push_back(bundles_at(corpus, spec, v));

  std::optional<double> global_tau;
  if (spec.backend == Backend::Embedding && spec.tau_policy == TauPolicy::Global) {
    std::vector<std::vector<LabeledBundle>> groups;
    for (const auto& s : settings) groups.push_back(validation_part(s));
    global_tau = tune_tau_pooled(groups, spec.tau_grid, *providers.embedder, spec.metric_config, spec.knn_k).tau;
  }

  std::vector<std::future<Column>> futures;
  for (const auto& s : settings) {
    futures.push_back(std::async(std::launch::async, [&, global_tau] {
      return evaluate_column(spec, s, providers, global_tau);
    }));
  }
  std::vector<Column> columns;
  for (auto& f : futures) columns.push_back(f.get());

  ResultTable table;
  table.axis = spec.axis;
  table.values = spec.values;
  if (spec.backend == Backend::Embedding) {
    for (const auto& c : columns) table.taus.push_back(c.tau);
  }
  const Eigen::Index cols = static_cast<Eigen::Index>(columns.size());
  for (const TaskType task : kTaskOrder) {
    const bool anywhere = std::any_of(columns.begin(), columns.end(), [&](const Column& c) {
      return c.aucs.count(task) > 0;
    });
    if (!anywhere) continue;
    MetricBlock block;
    block.task = task;
    block.backend = spec.backend;
    block.auc.resize(3, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto it = columns[c].aucs.find(task);
      if (it == columns[c].aucs.end()) {
        throw Error(ErrorCode::MissingData, std::string(to_string(task)) + " has no bundles at " +
                                                std::string(to_string(spec.axis)) + "=" +
                                                std::to_string(spec.values[c]));
      }
      for (int r = 0; r < 3; ++r) block.auc(r, c) = it->second[r];
    }
    table.blocks.push_back(std::move(block));
  }
  mark_best(table, spec.bold_rule);
  return table;
}

// -- reports ------------------------------------------------------------------------

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

int to_int(std::string_view s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::InvalidValue, "not an integer: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string render_report(const ResultTable& table, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::Csv) {
    out << "task,backend,metric";
    for (const int v : table.values) out << ',' << v;
    out << '\n';
    for (const auto& block : table.blocks) {
      for (int r = 0; r < 3; ++r) {
        out << to_string(block.task) << ',' << to_string(block.backend) << ',' << kMetricNames[r];
        for (Eigen::Index c = 0; c < block.auc.cols(); ++c) out << ',' << fixed3(block.auc(r, c));
        out << '\n';
      }
    }
    return out.str();
  }

  out << "ROC-AUC by " << to_string(table.axis) << "\n\n";
  out << "| Task | Backend | Metric |";
  for (const int v : table.values) out << ' ' << v << " |";
  out << "\n| --- | --- | --- |";
  for (std::size_t c = 0; c < table.values.size(); ++c) out << " ---: |";
  out << '\n';
  for (const auto& block : table.blocks) {
    for (int r = 0; r < 3; ++r) {
      out << "| " << to_string(block.task) << " | " << to_string(block.backend) << " | " << kMetricNames[r] << " |";
      for (Eigen::Index c = 0; c < block.auc.cols(); ++c) {
        const bool bold = block.bold.size() > 0 && block.bold(r, c);
        out << ' ' << (bold ? "**" : "") << fixed3(block.auc(r, c)) << (bold ? "**" : "") << " |";
      }
      out << '\n';
    }
  }
  if (!table.taus.empty()) {
    out << "\ntau:";
    for (std::size_t c = 0; c < table.taus.size(); ++c) out << (c ? ", " : " ") << fixed3(table.taus[c]);
    out << '\n';
  }
  return out.str();
}

ResultTable parse_table_csv(std::string_view text, SweepAxis axis, BoldRule rule) {
  std::vector<std::string> lines;
  for (auto& line : split(text, '\n')) {
    if (!trim(line).empty()) lines.push_back(trim(line));
  }
  if (lines.empty()) throw Error(ErrorCode::MissingData, "table CSV is empty");
  const auto header = split(lines[0], ',');
  if (header.size() < 4 || header[0] != "task" || header[1] != "backend" || header[2] != "metric") {
    throw Error(ErrorCode::InvalidValue, "table CSV header must start with task,backend,metric");
  }
  ResultTable table;
  table.axis = axis;
  for (std::size_t k = 3; k < header.size(); ++k) table.values.push_back(to_int(trim(header[k])));
  const auto cols = static_cast<Eigen::Index>(table.values.size());

  std::map<std::pair<TaskType, Backend>, std::size_t> index;
  std::vector<std::array<bool, 3>> seen;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split(lines[li], ',');
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::InvalidValue, "table CSV line " + std::to_string(li + 1) + " has the wrong width");
    }
    const TaskType task = parse_task_type(trim(cells[0]));
    const Backend backend = parse_backend(trim(cells[1]));
    const auto metric = std::find(kMetricNames.begin(), kMetricNames.end(), trim(cells[2]));
    if (metric == kMetricNames.end()) throw Error(ErrorCode::InvalidValue, "unknown metric '" + cells[2] + "'");
    const int row = static_cast<int>(metric - kMetricNames.begin());
    const auto [it, inserted] = index.emplace(std::make_pair(task, backend), table.blocks.size());
    if (inserted) {
      MetricBlock block;
      block.task = task;
      block.backend = backend;
      block.auc = Eigen::Matrix<double, 3, Eigen::Dynamic>::Constant(3, cols, std::nan(""));
      table.blocks.push_back(std::move(block));
      seen.push_back({false, false, false});
    }
    seen[it->second][row] = true;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = std::stod(trim(cells[3 + c]));
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidValue, "AUC outside [0, 1]: " + cells[3 + c]);
      table.blocks[it->second].auc(row, c) = v;
    }
  }
  for (std::size_t b = 0; b < seen.size(); ++b) {
    if (!(seen[b][0] && seen[b][1] && seen[b][2])) {
      throw Error(ErrorCode::MissingData, "table block " + std::string(to_string(table.blocks[b].task)) + "/" +
                                              std::string(to_string(table.blocks[b].backend)) + " lacks a metric row");
    }
  }
  mark_best(table, rule);
  return table;
}

ResultTable load_table_csv(const std::filesystem::path& path, SweepAxis axis, BoldRule rule) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_table_csv(buffer.str(), axis, rule);
}

std::vector<int> parse_int_list(std::string_view s) {
  std::vector<int> out;
  for (const auto& raw : split(s, ',')) {
    const std::string token = trim(raw);
    if (token.empty()) throw Error(ErrorCode::InvalidValue, "empty entry in list '" + std::string(s) + "'");
    const auto dots = token.find("..");
    if (dots == std::string::npos) {
      out.push_back(to_int(token));
      continue;
    }
    const int lo = to_int(token.substr(0, dots));
    const int hi = to_int(token.substr(dots + 2));
    if (hi < lo) throw Error(ErrorCode::InvalidValue, "descending range '" + token + "'");
    for (int v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

}  // namespace hedge

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "hedge/adjudicator.hpp"
#include "hedge/cache.hpp"
#include "hedge/clustering.hpp"
#include "hedge/datamodel.hpp"
#include "hedge/error.hpp"
#include "hedge/evaluation.hpp"
#include "hedge/hash.hpp"
#include "hedge/http.hpp"
#include "hedge/metrics.hpp"
#include "hedge/perturbation.hpp"
#include "hedge/providers.hpp"
#include "hedge/sampling.hpp"
#include "hedge/synthetic.hpp"

namespace hedge::cli {

using nlohmann::json;
namespace fs = std::filesystem;

json to_json(const RunManifest& m) {
  return {{"command_line", m.command_line}, {"config", m.config},         {"tool_version", m.tool_version},
          {"inputs", m.input_hashes},       {"outputs", m.output_hashes}, {"timings_ms", m.timings_ms},
          {"counters", m.counters}};
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
}

class Run {
 public:
  RunManifest manifest;
  fs::path manifest_path;

  void input(const fs::path& p) { manifest.input_hashes[p.string()] = sha256_hex(read_file(p)); }
  void output(const fs::path& p) { outputs_.push_back(p); }

  template <typename F>
  auto stage(const std::string& name, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    const auto record = [&] {
      const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
      manifest.timings_ms[name] += elapsed.count();
    };
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      record();
    } else {
      auto result = f();
      record();
      return result;
    }
  }

  void finish() {
    for (const auto& p : outputs_) {
      if (!fs::exists(p)) throw Error(ErrorCode::IoError, "expected output " + p.string() + " was not written");
      manifest.output_hashes[p.string()] = sha256_hex(read_file(p));
    }
    write_text(manifest_path, to_json(manifest).dump(2) + "\n");
  }

 private:
  std::vector<fs::path> outputs_;
};

std::string upper_snake(std::string s) {
  for (auto& c : s) c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string quote_arg(const std::string& a) {
  if (!a.empty() && a.find_first_of(" \t\"'\\$") == std::string::npos) return a;
  std::string q = "'";
  for (const char c : a) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

void require_flag(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::UsageError, std::string(flag) + " is required");
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads; the first
/// exception is rethrown after all workers stop.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// "lo:hi:step" or a comma list; empty means the default grid.
std::vector<double> parse_tau_grid(const std::string& s) {
  if (s.empty()) return default_tau_grid();
  std::vector<double> out;
  try {
    if (s.find(':') != std::string::npos) {
      double lo = 0, hi = 0, step = 0;
      char c1 = 0, c2 = 0;
      std::istringstream in(s);
      if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0) || hi < lo) {
        throw Error(ErrorCode::InvalidValue, "tau grid '" + s + "' is not lo:hi:step");
      }
      const auto count = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
      for (int i = 0; i <= count; ++i) out.push_back(std::round((lo + i * step) * 1e12) / 1e12);
    } else {
      std::istringstream in(s);
      for (std::string item; std::getline(in, item, ',');) out.push_back(std::stod(item));
    }
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::InvalidValue, "tau grid '" + s + "' is not a number list");
  }
  return out;
}

json recipe_json(const PerturbationRecipe& r) {
  return {{"brightness", r.brightness},
          {"contrast", r.contrast},
          {"saturation", r.saturation},
          {"hue_shift_degrees", r.hue_shift_degrees},
          {"noise_strength", r.noise_strength},
          {"seed", r.seed}};
}

// -- shared flag groups ------------------------------------------------------

struct ProviderFlags {
  std::string backend = "embedding";
  double tau = 0.7;
  int knn_k = 0;
  std::string provider = "surrogate";
  std::string embeddings;
  std::string judgments;
  std::string endpoint;
  std::string api_key;
  std::string embedding_model = "text-embedding";
  std::string nli_model = "nli";
  std::string cache_dir;
  int max_inflight = 4;
};

void add_provider_flags(CLI::App* app, ProviderFlags& f, bool with_backend = true) {
  if (with_backend) {
    app->add_option("--backend", f.backend, "Clustering backend")->check(CLI::IsMember({"embedding", "nli"}));
  }
  app->add_option("--tau", f.tau, "Cosine threshold of the embedding backend");
  app->add_option("--knn-k", f.knn_k, "Keep only the k most similar neighbours (0 keeps all)");
  app->add_option("--provider", f.provider, "Where embeddings or NLI judgments come from")
      ->check(CLI::IsMember({"surrogate", "file", "http"}));
  app->add_option("--embeddings", f.embeddings, "Embedding JSONL for --provider file");
  app->add_option("--judgments", f.judgments, "NLI judgment JSONL for --provider file");
  app->add_option("--endpoint", f.endpoint, "Base URL for --provider http")->envname("HEDGE_ENDPOINT");
  app->add_option("--api-key", f.api_key, "Bearer token")->envname("HEDGE_API_KEY");
  app->add_option("--embedding-model", f.embedding_model, "Embedding model name");
  app->add_option("--nli-model", f.nli_model, "NLI classifier model name");
  app->add_option("--cache-dir", f.cache_dir, "Content-addressed cache directory")->envname("HEDGE_CACHE_DIR");
  app->add_option("--max-inflight", f.max_inflight, "Concurrent endpoint requests");
}

struct Providers {
  std::unique_ptr<HttpTransport> transport;
  std::unique_ptr<ContentCache> cache;
  std::unique_ptr<EmbeddingProvider> embedder;
  std::unique_ptr<JudgmentProvider> judge;

  SweepProviders view() const { return {embedder.get(), judge.get()}; }

  void record(Run& run) const {
    if (transport) run.manifest.counters["endpoint_requests"] = transport->requests_sent();
  }
};

Providers make_providers(const ProviderFlags& f, Backend backend, Run& run) {
  Providers p;
  if (f.provider == "surrogate") {
    if (backend == Backend::Embedding) {
      p.embedder = std::make_unique<OneHotEmbeddingProvider>();
    } else {
      p.judge = std::make_unique<ExactMatchJudgmentProvider>();
    }
  } else if (f.provider == "file") {
    if (backend == Backend::Embedding) {
      require_flag(f.embeddings, "--embeddings");
      run.input(f.embeddings);
      p.embedder = std::make_unique<FileEmbeddingProvider>(f.embeddings);
    } else {
      require_flag(f.judgments, "--judgments");
      run.input(f.judgments);
      p.judge = std::make_unique<FileJudgmentProvider>(f.judgments);
    }
  } else {
    require_flag(f.endpoint, "--endpoint");
    EndpointConfig config;
    config.base_url = f.endpoint;
    config.api_key = f.api_key;
    config.max_inflight = f.max_inflight;
    p.transport = std::make_unique<HttpTransport>(with_env_credentials(config));
    p.cache = std::make_unique<ContentCache>(resolve_cache_dir(f.cache_dir));
    if (backend == Backend::Embedding) {
      p.embedder = std::make_unique<HttpEmbeddingProvider>(*p.transport, *p.cache, f.embedding_model);
    } else {
      p.judge = std::make_unique<HttpJudgmentProvider>(*p.transport, *p.cache, f.nli_model);
    }
  }
  return p;
}

struct MetricFlags {
  double alpha = 1.0;
  std::string mode = "as_written";
  bool include_baseline = false;

  MetricConfig config() const {
    MetricConfig c;
    c.alpha = alpha;
    c.distribution_mode = parse_distribution_mode(mode);
    c.include_baseline_in_clean = include_baseline;
    return c;
  }
};

void add_metric_flags(CLI::App* app, MetricFlags& f) {
  app->add_option("--alpha", f.alpha, "VASE amplification factor");
  app->add_option("--distribution-mode", f.mode, "How log-likelihoods become cluster probabilities")
      ->check(CLI::IsMember({"as_written", "mass_normalized"}));
  app->add_flag("--include-baseline", f.include_baseline, "Count the baseline answer in the clean distribution");
}

std::vector<SampleBundle> load_bundles(const std::string& path, Run& run) {
  require_flag(path, "--bundles");
  run.input(path);
  return run.stage("read", [&] { return read_bundles(path); });
}

std::map<std::string, Label> load_labels(const std::string& path, Run& run) {
  require_flag(path, "--labels");
  run.input(path);
  return run.stage("read", [&] { return read_labels(path); });
}

ReportFormat output_format(const std::string& flag, const fs::path& out) {
  if (flag != "auto") return parse_report_format(flag);
  return out.extension() == ".csv" ? ReportFormat::Csv : ReportFormat::Markdown;
}

// -- subcommands -------------------------------------------------------------

struct Flags {
  std::string manifest;

  struct {
    int items = 200;
    std::string mix = "grounded:0.5,fragile:0.5";
    std::uint64_t seed = 0;
    int n = 10;
    std::string task = "VideoQA";
    std::string out;
  } synth;

  struct {
    std::string items, out;
    std::string endpoint, api_key, model, cache_dir;
    int budget = 10;
    std::uint64_t seed = 0;
    int frame_count = 24;
    int max_pixels = 100352;
    double baseline_temperature = 0.0;
    double sample_temperature = 1.0;
    std::string transport = "clip";
    bool no_system = false;
    bool no_seed = false;
    std::string variant_dir;
    std::string ffmpeg = "ffmpeg";
    int noise_strength = kDefaultNoiseStrength;
    int max_inflight = 4;
    int max_tokens = 0;
  } sample;

  struct {
    std::uint64_t seed = 0;
    int ordinal = -1;
    int noise_strength = kDefaultNoiseStrength;
    int frame_count = 24;
    int max_pixels = 100352;
    int width = 1920;
    int height = 1080;
    std::string in, variant, ffmpeg = "ffmpeg", out;
    bool execute = false;
  } preview;

  struct {
    std::string bundles, out;
    ProviderFlags provider;
  } cluster;

  struct {
    std::string bundles, clusters, out;
    ProviderFlags provider;
    MetricFlags metric;
  } score;

  struct {
    std::string bundles, out;
    bool skip = false;
    std::string labels_from;
    std::string endpoint, api_key, model, cache_dir;
    std::string target = "baseline";
    int max_reasks = 2;
    int max_inflight = 4;
    int max_tokens = 0;
  } judge;

  struct {
    std::string bundles, labels, out;
    std::string grid;
    std::string split = "validation";
    ProviderFlags provider;
    MetricFlags metric;
  } tune;

  struct {
    std::vector<std::string> scores;
    std::string labels, bundles, out;
    std::string values;
    std::string axis = "distortion_budget";
    int budget = 10;
    int frame_count = 24;
    int max_pixels = 100352;
    std::string tau_policy = "per_setting";
    std::string tau_grid;
    std::string format = "auto";
    std::string bold_rule = "block_max";
    ProviderFlags provider;
    MetricFlags metric;
  } evaluate;

  struct {
    std::string table, out;
    std::string axis = "distortion_budget";
    std::string format = "auto";
    std::string bold_rule = "block_max";
  } report;
};

void run_synth(Flags& f, Run& run) {
  auto& s = f.synth;
  require_flag(s.out, "--out");
  const ProfileMix mix = parse_mix(s.mix);
  std::vector<TaskType> tasks;
  if (s.task == "all") {
    tasks = {TaskType::EventClassification, TaskType::VideoQA};
  } else {
    tasks = {parse_task_type(s.task)};
  }
  std::vector<LabeledBundle> suite;
  run.stage("generate", [&] {
    for (const TaskType task : tasks) {
      const std::uint64_t seed = tasks.size() == 1 ? s.seed : s.seed ^ hash64(to_string(task));
      auto part = regime_suite(s.items, mix, seed, {s.n, task});
      suite.insert(suite.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
  });
  run.stage("write", [&] { write_suite(s.out, suite); });
  run.output(fs::path(s.out) / "bundles.jsonl");
  run.output(fs::path(s.out) / "labels.jsonl");
  run.manifest.counters["bundles"] = suite.size();
}

void run_sample(Flags& f, Run& run, std::ostream& out) {
  auto& s = f.sample;
  require_flag(s.items, "--items");
  require_flag(s.out, "--out");
  require_flag(s.endpoint, "--endpoint");
  require_flag(s.model, "--model");
  run.input(s.items);
  std::vector<SampleItem> items;
  for (const auto& row : read_jsonl(s.items)) items.push_back(sample_item_from_json(row));

  EndpointConfig endpoint;
  endpoint.base_url = s.endpoint;
  endpoint.api_key = s.api_key;
  endpoint.model = s.model;
  endpoint.max_inflight = s.max_inflight;
  HttpTransport transport(with_env_credentials(endpoint));
  const fs::path cache_dir = resolve_cache_dir(s.cache_dir);
  ContentCache cache(cache_dir);
  GenerationOptions generation;
  if (s.max_tokens > 0) generation.max_tokens = s.max_tokens;
  ChatClient client(transport, cache, s.model, generation);
  SubprocessVideoProcessor processor;

  SamplerOptions options;
  options.include_system = !s.no_system;
  options.transport = s.transport == "frames" ? VideoTransport::Frames : VideoTransport::Clip;
  if (!s.variant_dir.empty()) {
    options.variant_dir = s.variant_dir;
  } else if (!cache_dir.empty()) {
    options.variant_dir = cache_dir / "variants";
  }
  options.ffmpeg.ffmpeg_path = s.ffmpeg;
  options.noise_strength = s.noise_strength;
  options.max_inflight = s.max_inflight;
  options.send_seed = !s.no_seed;
  Sampler sampler(client, processor, options);

  SamplingConfig config = SamplingConfig::for_budget(s.budget, s.seed);
  config.frame_count = s.frame_count;
  config.max_pixels = s.max_pixels;
  config.baseline_temperature = s.baseline_temperature;
  config.sample_temperature = s.sample_temperature;

  std::vector<SampleBundle> bundles;
  run.stage("sample", [&] {
    for (const auto& item : items) bundles.push_back(sampler.sample_bundle(item, config));
  });
  run.stage("write", [&] { write_bundles(s.out, bundles); });
  run.output(s.out);
  run.manifest.counters["endpoint_requests"] = transport.requests_sent();
  run.manifest.counters["bundles"] = bundles.size();
  out << bundles.size() << " bundles, " << transport.requests_sent() << " endpoint requests\n";
}

void run_preview(Flags& f, Run& run, std::ostream& out) {
  auto& p = f.preview;
  require_flag(p.out, "--out");
  const std::uint64_t seed = p.ordinal >= 0 ? derive_variant_seed(p.seed, p.ordinal) : p.seed;
  const PerturbationRecipe recipe = sample_recipe(seed, p.noise_strength);
  const FramePolicy policy = make_frame_policy(p.frame_count, p.max_pixels, p.width, p.height);
  CommandOptions options;
  options.ffmpeg_path = p.ffmpeg;
  const std::string in = p.in.empty() ? "input.mp4" : p.in;
  const std::string variant = p.variant.empty() ? "variant.mp4" : p.variant;
  const auto argv = recipe_to_command(recipe, policy, in, variant, options);
  const json doc = {{"recipe", recipe_json(recipe)},
                    {"policy",
                     {{"frame_count", policy.frame_count},
                      {"max_pixels", policy.max_pixels},
                      {"target_width", policy.target_width},
                      {"target_height", policy.target_height}}},
                    {"filtergraph", command_filtergraph(recipe, policy, options)},
                    {"command", argv}};
  write_text(p.out, doc.dump(2) + "\n");
  run.output(p.out);
  std::string line;
  for (const auto& a : argv) line += (line.empty() ? "" : " ") + quote_arg(a);
  out << line << "\n";
  if (p.execute) {
    require_flag(p.in, "--in");
    require_flag(p.variant, "--variant");
    run.input(p.in);
    run.stage("render", [&] { SubprocessVideoProcessor().run(argv); });
    run.output(p.variant);
  }
}

void run_cluster(Flags& f, Run& run) {
  auto& c = f.cluster;
  require_flag(c.out, "--out");
  const auto bundles = load_bundles(c.bundles, run);
  const Backend backend = parse_backend(c.provider.backend);
  Providers providers = make_providers(c.provider, backend, run);
  BundleClusterer clusterer = backend == Backend::Embedding
                                  ? BundleClusterer::embedding(*providers.embedder, {c.provider.tau, c.provider.knn_k})
                                  : BundleClusterer::nli(*providers.judge);
  std::vector<json> rows;
  run.stage("cluster", [&] {
    for (const auto& b : bundles) rows.push_back(to_json(clusterer.cluster(b), b.bundle_id));
  });
  run.stage("write", [&] { write_jsonl(c.out, rows); });
  run.output(c.out);
  providers.record(run);
}

void run_score(Flags& f, Run& run) {
  auto& s = f.score;
  require_flag(s.out, "--out");
  const auto bundles = load_bundles(s.bundles, run);
  const MetricConfig metric = s.metric.config();
  std::map<std::string, ClusterAssignment> precomputed;
  Providers providers;
  std::optional<BundleClusterer> clusterer;
  if (!s.clusters.empty()) {
    run.input(s.clusters);
    for (const auto& row : read_jsonl(s.clusters)) {
      precomputed[row.at("bundle_id").get<std::string>()] = cluster_assignment_from_json(row);
    }
  } else {
    const Backend backend = parse_backend(s.provider.backend);
    providers = make_providers(s.provider, backend, run);
    clusterer = backend == Backend::Embedding
                    ? BundleClusterer::embedding(*providers.embedder, {s.provider.tau, s.provider.knn_k})
                    : BundleClusterer::nli(*providers.judge);
  }
  std::vector<json> rows;
  run.stage("score", [&] {
    for (const auto& b : bundles) {
      ClusterAssignment assignment;
      if (clusterer) {
        assignment = clusterer->cluster(b);
      } else {
        const auto it = precomputed.find(b.bundle_id);
        if (it == precomputed.end()) throw Error(ErrorCode::MissingData, "no clusters for bundle " + b.bundle_id);
        assignment = it->second;
      }
      rows.push_back(to_json(score_bundle(b, assignment, metric)));
    }
  });
  run.stage("write", [&] { write_jsonl(s.out, rows); });
  run.output(s.out);
  providers.record(run);
}

void run_judge(Flags& f, Run& run) {
  auto& j = f.judge;
  require_flag(j.out, "--out");
  const auto bundles = load_bundles(j.bundles, run);
  std::vector<json> rows;
  if (j.skip) {
    require_flag(j.labels_from, "--labels-from");
    run.input(j.labels_from);
    std::set<std::string> wanted, covered;
    for (const auto& b : bundles) wanted.insert(b.bundle_id);
    for (auto& row : read_jsonl(j.labels_from)) {
      const std::string id = row.at("bundle_id").get<std::string>();
      if (!wanted.count(id)) continue;
      if (!row.contains("condition")) covered.insert(id);
      rows.push_back(std::move(row));
    }
    for (const auto& id : wanted) {
      if (!covered.count(id)) throw Error(ErrorCode::MissingData, "no label for bundle " + id + " in " + j.labels_from);
    }
  } else {
    require_flag(j.endpoint, "--endpoint");
    require_flag(j.model, "--model");
    EndpointConfig endpoint;
    endpoint.base_url = j.endpoint;
    endpoint.api_key = j.api_key;
    endpoint.model = j.model;
    endpoint.max_inflight = j.max_inflight;
    HttpTransport transport(with_env_credentials(endpoint));
    ContentCache cache(resolve_cache_dir(j.cache_dir));
    GenerationOptions generation;
    if (j.max_tokens > 0) generation.max_tokens = j.max_tokens;
    ChatClient client(transport, cache, j.model, generation);
    Adjudicator adjudicator(client, {j.max_reasks});
    const JudgeTarget target = j.target == "all" ? JudgeTarget::AllAnswers : JudgeTarget::Baseline;
    std::vector<std::vector<JudgeVerdict>> verdicts(bundles.size());
    run.stage("judge", [&] {
      parallel_for(bundles.size(), j.max_inflight,
                   [&](std::size_t i) { verdicts[i] = adjudicator.adjudicate_bundle(bundles[i], target); });
    });
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      const auto flat = flatten_sequence(bundles[i]);
      for (std::size_t k = 0; k < verdicts[i].size(); ++k) {
        rows.push_back(verdict_row(bundles[i].bundle_id, verdicts[i][k], &flat[k]));
      }
    }
    run.manifest.counters["endpoint_requests"] = transport.requests_sent();
  }
  run.stage("write", [&] { write_jsonl(j.out, rows); });
  run.output(j.out);
}

void run_tune(Flags& f, Run& run) {
  auto& t = f.tune;
  require_flag(t.out, "--out");
  const auto bundles = load_bundles(t.bundles, run);
  auto labeled = join_labels(bundles, load_labels(t.labels, run));
  if (t.split == "validation") {
    std::erase_if(labeled, [](const LabeledBundle& lb) { return !in_validation_split(lb.bundle.bundle_id); });
  }
  Providers providers = make_providers(t.provider, Backend::Embedding, run);
  const auto grid = parse_tau_grid(t.grid);
  const TauSearch search = run.stage(
      "tune", [&] { return tune_tau(labeled, grid, *providers.embedder, t.metric.config(), t.provider.knn_k); });
  json curve = json::array();
  for (const auto& [tau, auc] : search.curve) curve.push_back({tau, auc});
  const json doc = {{"tau", search.tau}, {"auc", search.auc}, {"bundles", labeled.size()}, {"curve", curve}};
  write_text(t.out, doc.dump(2) + "\n");
  run.output(t.out);
  providers.record(run);
}

ResultTable table_from_scores(const std::vector<std::string>& files, const std::vector<int>& values,
                              const std::map<std::string, Label>& labels, SweepAxis axis, Run& run) {
  using Key = std::pair<Backend, TaskType>;
  std::vector<std::map<Key, std::array<double, 3>>> columns;
  std::set<Key> keys;
  for (const auto& file : files) {
    run.input(file);
    std::map<Key, std::vector<ScoreRow>> groups;
    for (const auto& row : read_jsonl(file)) {
      ScoreRow r = score_row_from_json(row);
      const auto it = labels.find(r.bundle_id);
      if (it == labels.end()) throw Error(ErrorCode::MissingData, "no label for bundle " + r.bundle_id);
      r.label = it->second;
      groups[{r.backend, r.task_type}].push_back(std::move(r));
    }
    auto& column = columns.emplace_back();
    for (const auto& [key, rows] : groups) {
      column[key] = metric_aucs(rows);
      keys.insert(key);
    }
  }
  ResultTable table;
  table.axis = axis;
  table.values = values;
  for (const auto& key : keys) {
    MetricBlock block;
    block.backend = key.first;
    block.task = key.second;
    block.auc.resize(3, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto it = columns[c].find(key);
      if (it == columns[c].end()) {
        throw Error(ErrorCode::MissingData, std::string(to_string(key.second)) + "/" +
                                                std::string(to_string(key.first)) + " is missing from " + files[c]);
      }
      for (int r = 0; r < 3; ++r) block.auc(r, static_cast<Eigen::Index>(c)) = it->second[r];
    }
    table.blocks.push_back(std::move(block));
  }
  return table;
}

void run_evaluate(Flags& f, Run& run) {
  auto& e = f.evaluate;
  require_flag(e.out, "--out");
  const SweepAxis axis = parse_sweep_axis(e.axis);
  const BoldRule rule = parse_bold_rule(e.bold_rule);
  ResultTable table;
  if (!e.scores.empty()) {
    std::vector<int> values;
    if (e.values.empty()) {
      for (std::size_t i = 0; i < e.scores.size(); ++i) values.push_back(static_cast<int>(i) + 1);
    } else {
      values = parse_int_list(e.values);
    }
    if (values.size() != e.scores.size()) {
      throw Error(ErrorCode::UsageError, "--values must name one column per --scores file");
    }
    const auto labels = load_labels(e.labels, run);
    table = run.stage("evaluate", [&] { return table_from_scores(e.scores, values, labels, axis, run); });
    mark_best(table, rule);
  } else {
    require_flag(e.values, "--values");
    const auto bundles = load_bundles(e.bundles, run);
    const auto labeled = join_labels(bundles, load_labels(e.labels, run));
    SweepSpec spec;
    spec.axis = axis;
    spec.values = parse_int_list(e.values);
    spec.fixed = SamplingConfig::for_budget(e.budget, 0);
    spec.fixed.frame_count = e.frame_count;
    spec.fixed.max_pixels = e.max_pixels;
    spec.backend = parse_backend(e.provider.backend);
    spec.metric_config = e.metric.config();
    spec.tau_policy = parse_tau_policy(e.tau_policy);
    spec.tau = e.provider.tau;
    spec.tau_grid = parse_tau_grid(e.tau_grid);
    spec.knn_k = e.provider.knn_k;
    spec.bold_rule = rule;
    Providers providers = make_providers(e.provider, spec.backend, run);
    table = run.stage("evaluate", [&] { return run_sweep(spec, labeled, providers.view()); });
    providers.record(run);
  }
  const std::string text = render_report(table, output_format(e.format, e.out));
  write_text(e.out, text);
  run.output(e.out);
}

void run_report(Flags& f, Run& run) {
  auto& r = f.report;
  require_flag(r.table, "--table");
  require_flag(r.out, "--out");
  run.input(r.table);
  const ResultTable table = load_table_csv(r.table, parse_sweep_axis(r.axis), parse_bold_rule(r.bold_rule));
  write_text(r.out, render_report(table, output_format(r.format, r.out)));
  run.output(r.out);
}

// -- option tables -----------------------------------------------------------

void define_synth(CLI::App* app, Flags& f) {
  auto& s = f.synth;
  app->add_option("--items", s.items, "Items per task");
  app->add_option("--mix", s.mix, "Archetype weights, e.g. grounded:0.5,fragile:0.5");
  app->add_option("--seed", s.seed, "Suite seed");
  app->add_option("--n", s.n, "Distortion budget of every bundle");
  app->add_option("--task", s.task, "VideoQA, EventClassification or all")
      ->check(CLI::IsMember({"VideoQA", "EventClassification", "all"}));
  app->add_option("--out", s.out, "Output directory for bundles.jsonl and labels.jsonl");
}

void define_sample(CLI::App* app, Flags& f) {
  auto& s = f.sample;
  app->add_option("--items", s.items, "Item JSONL (video, task_type, question, gold_answer, ...)");
  app->add_option("--out", s.out, "Bundle JSONL to write");
  app->add_option("--endpoint", s.endpoint, "Chat completions base URL")->envname("HEDGE_ENDPOINT");
  app->add_option("--api-key", s.api_key, "Bearer token")->envname("HEDGE_API_KEY");
  app->add_option("--model", s.model, "Model served by the endpoint");
  app->add_option("--cache-dir", s.cache_dir, "Content-addressed cache directory")->envname("HEDGE_CACHE_DIR");
  app->add_option("--budget", s.budget, "Distortion budget n");
  app->add_option("--seed", s.seed, "Sampling seed");
  app->add_option("--frame-count", s.frame_count, "Frames per clip");
  app->add_option("--max-pixels", s.max_pixels, "Per-frame pixel budget");
  app->add_option("--baseline-temperature", s.baseline_temperature, "Temperature of the baseline answer");
  app->add_option("--sample-temperature", s.sample_temperature, "Temperature of clean and noisy samples");
  app->add_option("--transport", s.transport, "Send the clip or extracted frames")
      ->check(CLI::IsMember({"clip", "frames"}));
  app->add_flag("--no-system", s.no_system, "Omit the system prompt");
  app->add_flag("--no-seed", s.no_seed, "Do not send per-request seeds");
  app->add_option("--variant-dir", s.variant_dir, "Where noisy variants are rendered");
  app->add_option("--ffmpeg", s.ffmpeg, "Video processor executable");
  app->add_option("--noise-strength", s.noise_strength, "Noise filter amplitude");
  app->add_option("--max-inflight", s.max_inflight, "Concurrent endpoint requests");
  app->add_option("--max-tokens", s.max_tokens, "Generation limit (0 leaves it to the server)");
}

void define_preview(CLI::App* app, Flags& f) {
  auto& p = f.preview;
  app->add_option("--seed", p.seed, "Recipe seed, or bundle seed with --ordinal");
  app->add_option("--ordinal", p.ordinal, "Noisy ordinal whose variant seed is derived from --seed");
  app->add_option("--noise-strength", p.noise_strength, "Noise filter amplitude");
  app->add_option("--frame-count", p.frame_count, "Frames per clip");
  app->add_option("--max-pixels", p.max_pixels, "Per-frame pixel budget");
  app->add_option("--width", p.width, "Source width");
  app->add_option("--height", p.height, "Source height");
  app->add_option("--in", p.in, "Source clip");
  app->add_option("--variant", p.variant, "Rendered variant path");
  app->add_option("--ffmpeg", p.ffmpeg, "Video processor executable");
  app->add_flag("--execute", p.execute, "Run the command");
  app->add_option("--out", p.out, "Preview JSON to write");
}

void define_cluster(CLI::App* app, Flags& f) {
  app->add_option("--bundles", f.cluster.bundles, "Bundle JSONL");
  app->add_option("--out", f.cluster.out, "Cluster assignment JSONL to write");
  add_provider_flags(app, f.cluster.provider);
}

void define_score(CLI::App* app, Flags& f) {
  app->add_option("--bundles", f.score.bundles, "Bundle JSONL");
  app->add_option("--clusters", f.score.clusters, "Precomputed cluster JSONL; clusters inline when absent");
  app->add_option("--out", f.score.out, "Score JSONL to write");
  add_provider_flags(app, f.score.provider);
  add_metric_flags(app, f.score.metric);
}

void define_judge(CLI::App* app, Flags& f) {
  auto& j = f.judge;
  app->add_option("--bundles", j.bundles, "Bundle JSONL");
  app->add_option("--out", j.out, "Verdict JSONL to write");
  app->add_flag("--skip", j.skip, "Copy existing labels instead of calling a judge");
  app->add_option("--labels-from", j.labels_from, "Label JSONL used with --skip");
  app->add_option("--endpoint", j.endpoint, "Judge chat completions base URL")->envname("HEDGE_JUDGE_ENDPOINT");
  app->add_option("--api-key", j.api_key, "Bearer token")->envname("HEDGE_API_KEY");
  app->add_option("--model", j.model, "Judge model");
  app->add_option("--cache-dir", j.cache_dir, "Content-addressed cache directory")->envname("HEDGE_CACHE_DIR");
  app->add_option("--target", j.target, "Judge the baseline answer or every answer")
      ->check(CLI::IsMember({"baseline", "all"}));
  app->add_option("--max-reasks", j.max_reasks, "Corrective re-asks after a malformed verdict");
  app->add_option("--max-inflight", j.max_inflight, "Concurrent endpoint requests");
  app->add_option("--max-tokens", j.max_tokens, "Generation limit (0 leaves it to the server)");
}

void define_tune(CLI::App* app, Flags& f) {
  auto& t = f.tune;
  app->add_option("--bundles", t.bundles, "Bundle JSONL");
  app->add_option("--labels", t.labels, "Verdict JSONL");
  app->add_option("--out", t.out, "Result JSON to write");
  app->add_option("--grid", t.grid, "lo:hi:step or a comma list (default 0:1:0.01)");
  app->add_option("--split", t.split, "Tune on the validation split or on all bundles")
      ->check(CLI::IsMember({"validation", "all"}));
  add_provider_flags(app, t.provider, false);
  add_metric_flags(app, t.metric);
}

void define_evaluate(CLI::App* app, Flags& f) {
  auto& e = f.evaluate;
  app->add_option("--scores", e.scores, "Score JSONL, one per column (repeatable)");
  app->add_option("--labels", e.labels, "Verdict JSONL");
  app->add_option("--bundles", e.bundles, "Bundle JSONL for a sweep");
  app->add_option("--values", e.values, "Column values, e.g. 1..10");
  app->add_option("--axis", e.axis, "Swept axis")
      ->check(CLI::IsMember({"distortion_budget", "frame_count", "max_pixels"}));
  app->add_option("--budget", e.budget, "Distortion budget when another axis is swept");
  app->add_option("--frame-count", e.frame_count, "Frame count when another axis is swept");
  app->add_option("--max-pixels", e.max_pixels, "Pixel budget when another axis is swept");
  app->add_option("--tau-policy", e.tau_policy, "fixed, per_setting or global")
      ->check(CLI::IsMember({"fixed", "per_setting", "global"}));
  app->add_option("--tau-grid", e.tau_grid, "lo:hi:step or a comma list (default 0:1:0.01)");
  app->add_option("--format", e.format, "markdown, csv or auto (by extension)")
      ->check(CLI::IsMember({"auto", "markdown", "md", "csv"}));
  app->add_option("--bold-rule", e.bold_rule, "block_max or row_max")->check(CLI::IsMember({"block_max", "row_max"}));
  app->add_option("--out", e.out, "Table to write");
  add_provider_flags(app, e.provider);
  add_metric_flags(app, e.metric);
}

void define_report(CLI::App* app, Flags& f) {
  auto& r = f.report;
  app->add_option("--table", r.table, "Table CSV (task,backend,metric,values...)");
  app->add_option("--axis", r.axis, "Axis named in the header")
      ->check(CLI::IsMember({"distortion_budget", "frame_count", "max_pixels"}));
  app->add_option("--format", r.format, "markdown, csv or auto (by extension)")
      ->check(CLI::IsMember({"auto", "markdown", "md", "csv"}));
  app->add_option("--bold-rule", r.bold_rule, "block_max or row_max")->check(CLI::IsMember({"block_max", "row_max"}));
  app->add_option("--out", r.out, "Report to write");
}

json option_snapshot(const CLI::App* sub) {
  json config = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "api-key") continue;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      config[name] = results.size() == 1 && opt->get_expected_max() <= 1 ? json(results.front()) : json(results);
    } else {
      config[name] = opt->get_default_str();
    }
  }
  return config;
}

std::string primary_output(const std::string& name, const Flags& f) {
  if (name == "synth") return f.synth.out.empty() ? std::string() : (fs::path(f.synth.out) / "manifest.json").string();
  const std::map<std::string, std::string> outs = {
      {"sample", f.sample.out},   {"perturb-preview", f.preview.out}, {"cluster", f.cluster.out},
      {"score", f.score.out},     {"judge", f.judge.out},             {"tune-tau", f.tune.out},
      {"evaluate", f.evaluate.out}, {"report", f.report.out}};
  const auto it = outs.find(name);
  return it == outs.end() || it->second.empty() ? std::string() : it->second + ".manifest.json";
}

void print_error(std::ostream& err, const std::string& command, std::string_view code, const std::string& message) {
  err << json{{"error", {{"command", command}, {"code", code}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags flags;
  CLI::App app("Vision-amplified hallucination scoring for video-language models", "hedge");
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "", "TOML run file; a [subcommand] table holds that subcommand's flags");
  app.option_defaults()->always_capture_default();

  struct Command {
    const char* name;
    const char* help;
    void (*define)(CLI::App*, Flags&);
  };
  const Command commands[] = {
      {"synth", "Generate a labeled synthetic suite", define_synth},
      {"sample", "Sample answer bundles from a chat endpoint", define_sample},
      {"perturb-preview", "Show the recipe and processor command of one noisy variant", define_preview},
      {"cluster", "Cluster the answers of every bundle", define_cluster},
      {"score", "Compute SE, RadFlag and VASE per bundle", define_score},
      {"judge", "Label baseline answers with an adjudicator model", define_judge},
      {"tune-tau", "Pick the embedding threshold that maximizes SE ROC-AUC", define_tune},
      {"evaluate", "ROC-AUC tables from score files or a configuration sweep", define_evaluate},
      {"report", "Render a table CSV as markdown or CSV", define_report},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--manifest", flags.manifest, "Manifest path (default: <out>.manifest.json)");
    c.define(sub, flags);
    for (CLI::Option* opt : sub->get_options()) {
      if (opt->get_lnames().empty() || opt->get_lnames().front() == "help" || !opt->get_envname().empty()) continue;
      opt->envname("HEDGE_" + upper_snake(c.name) + "_" + upper_snake(opt->get_lnames().front()));
    }
  }

  std::string command = "hedge";
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, command, to_string(ErrorCode::UsageError), e.what());
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  command = sub->get_name();
  try {
    Run run;
    run.manifest.config = option_snapshot(sub);
    std::string line = "hedge";
    for (const auto& a : args) line += " " + quote_arg(a);
    run.manifest.command_line = line;
    run.manifest_path = flags.manifest.empty() ? primary_output(command, flags) : flags.manifest;
    if (run.manifest_path.empty()) throw Error(ErrorCode::UsageError, "--out is required");

    if (command == "synth") run_synth(flags, run);
    if (command == "sample") run_sample(flags, run, out);
    if (command == "perturb-preview") run_preview(flags, run, out);
    if (command == "cluster") run_cluster(flags, run);
    if (command == "score") run_score(flags, run);
    if (command == "judge") run_judge(flags, run);
    if (command == "tune-tau") run_tune(flags, run);
    if (command == "evaluate") run_evaluate(flags, run);
    if (command == "report") run_report(flags, run);
    run.finish();
    return 0;
  } catch (const Error& e) {
    print_error(err, command, to_string(e.code()), e.what());
    return e.code() == ErrorCode::UsageError ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    print_error(err, command, to_string(ErrorCode::IoError), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, command, to_string(ErrorCode::InvalidValue), e.what());
    return 1;
  }
}

}  // namespace hedge::cli

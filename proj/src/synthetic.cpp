#include "hedge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "hedge/error.hpp"
#include "hedge/hash.hpp"
#include "hedge/perturbation.hpp"

namespace hedge {

using nlohmann::json;

namespace {

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Box-Muller, one value per call.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  int below(int bound) { return std::min(bound - 1, static_cast<int>(uniform() * bound)); }

 private:
  std::mt19937_64 gen_;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(Archetype a) noexcept {
  switch (a) {
    case Archetype::Grounded: return "grounded";
    case Archetype::ConfidentHallucinator: return "confident_hallucinator";
    case Archetype::FragileGrounding: return "fragile_grounding";
    case Archetype::Uncertain: return "uncertain";
  }
  return "grounded";
}

Archetype parse_archetype(std::string_view s) {
  if (s == "grounded") return Archetype::Grounded;
  if (s == "confident_hallucinator" || s == "confident") return Archetype::ConfidentHallucinator;
  if (s == "fragile_grounding" || s == "fragile") return Archetype::FragileGrounding;
  if (s == "uncertain") return Archetype::Uncertain;
  throw Error(ErrorCode::InvalidValue, "unknown archetype '" + std::string(s) + "'");
}

ResponderProfile canonical_profile(Archetype archetype) {
  ResponderProfile p;
  p.archetype = archetype;
  switch (archetype) {
    case Archetype::Grounded:
      p.clean_concentration = p.noisy_concentration = 0.95;
      p.label = Label::Supported;
      break;
    case Archetype::ConfidentHallucinator:
      p.clean_concentration = p.noisy_concentration = 0.95;
      p.label = Label::Hallucinated;
      break;
    case Archetype::FragileGrounding:
      p.clean_concentration = 0.95;
      p.noisy_concentration = 0.2;
      p.label = Label::Hallucinated;
      break;
    case Archetype::Uncertain:
      p.clean_concentration = p.noisy_concentration = 0.4;
      p.label = Label::Hallucinated;
      break;
  }
  return p;
}

void check_profile(const ResponderProfile& p) {
  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(p.clean_concentration) || !unit(p.noisy_concentration)) {
    throw Error(ErrorCode::InvalidValue, "concentrations must lie in [0, 1]");
  }
  if (p.hypothesis_pool_size < 1) throw Error(ErrorCode::InvalidValue, "hypothesis pool must be positive");
  if (!(p.loglik_mean <= 0.0)) throw Error(ErrorCode::InvalidValue, "loglik_mean must be <= 0");
  if (!(p.loglik_spread >= 0.0)) throw Error(ErrorCode::InvalidValue, "loglik_spread must be >= 0");
}

LabeledBundle simulate_bundle(const ResponderProfile& profile, int n, std::uint64_t seed, const SyntheticItem& item) {
  check_profile(profile);
  if (n < 1) throw Error(ErrorCode::InvalidValue, "n must be positive");
  Stream rng(seed);
  const auto draw = [&](double concentration) {
    if (profile.hypothesis_pool_size == 1 || rng.uniform() < concentration) return std::string("hypothesis-0");
    return "hypothesis-" + std::to_string(1 + rng.below(profile.hypothesis_pool_size - 1));
  };
  const auto loglik = [&] { return std::min(0.0, profile.loglik_mean + profile.loglik_spread * rng.normal()); };

  SampleBundle b;
  if (item.video_id.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synthetic-%016llx", static_cast<unsigned long long>(seed));
    b.video_id = buf;
  } else {
    b.video_id = item.video_id;
  }
  b.task_type = item.task_type;
  b.question = item.task_type == TaskType::VideoQA ? "Which hypothesis does the clip support?" : "";
  b.gold_answer = "hypothesis-0";
  b.sampling_config = SamplingConfig::for_budget(n, seed);
  b.baseline = {draw(profile.clean_concentration), 0.0, Condition::Baseline, 0};
  for (int k = 0; k < n; ++k) b.clean.push_back({draw(profile.clean_concentration), 0.0, Condition::Clean, k});
  for (int k = 0; k < n; ++k) b.noisy.push_back({draw(profile.noisy_concentration), 0.0, Condition::Noisy, k});
  b.baseline.mean_log_likelihood = loglik();
  for (auto& a : b.clean) a.mean_log_likelihood = loglik();
  for (auto& a : b.noisy) a.mean_log_likelihood = loglik();
  b.bundle_id = compute_bundle_id(b.video_id, b.task_type, b.question, b.sampling_config);
  return {std::move(b), profile.label};
}

ProfileMix parse_mix(std::string_view spec) {
  ProfileMix mix;
  double total = 0.0;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string entry = trim(spec.substr(start, comma == std::string_view::npos ? spec.npos : comma - start));
    const auto colon = entry.find(':');
    if (entry.empty() || colon == std::string::npos) {
      throw Error(ErrorCode::InvalidValue, "mix entries look like name:weight, got '" + entry + "'");
    }
    const double weight = std::stod(entry.substr(colon + 1));
    if (!(weight >= 0.0)) throw Error(ErrorCode::InvalidValue, "mix weight must be non-negative");
    mix.emplace_back(canonical_profile(parse_archetype(trim(entry.substr(0, colon)))), weight);
    total += weight;
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidValue, "mix weights sum to " + std::to_string(total) + ", not 1");
  }
  return mix;
}

std::vector<LabeledBundle> regime_suite(int num_items, const ProfileMix& mix, std::uint64_t seed,
                                        const SuiteOptions& options) {
  if (num_items < 1) throw Error(ErrorCode::InvalidValue, "suite needs at least one item");
  if (mix.empty()) throw Error(ErrorCode::InvalidValue, "mix is empty");
  double total = 0.0;
  for (const auto& [profile, w] : mix) total += w;
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidValue, "mix weights must sum to 1");

  // Largest-remainder allocation of items to profiles.
  std::vector<int> counts(mix.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t k = 0; k < mix.size(); ++k) {
    const double exact = mix[k].second * num_items;
    counts[k] = static_cast<int>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - counts[k], k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < num_items; ++r, ++assigned) ++counts[remainders[r % remainders.size()].second];

  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < mix.size(); ++k) order.insert(order.end(), counts[k], k);
  Stream shuffle(mix64(seed ^ 0x6a09e667f3bcc909ULL));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(static_cast<int>(i))]);

  std::vector<LabeledBundle> suite;
  suite.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%06zu", i);
    SyntheticItem item{options.task_type, id};
    suite.push_back(simulate_bundle(mix[order[i]].first, options.n, derive_variant_seed(seed, static_cast<int>(i)),
                                    item));
  }
  return suite;
}

void write_suite(const std::filesystem::path& dir, const std::vector<LabeledBundle>& suite) {
  std::filesystem::create_directories(dir);
  std::vector<SampleBundle> bundles;
  std::vector<json> labels;
  for (const auto& lb : suite) {
    bundles.push_back(lb.bundle);
    labels.push_back({{"bundle_id", lb.bundle.bundle_id},
                      {"score", static_cast<int>(lb.label)},
                      {"reason", "synthetic ground truth"},
                      {"judge_model", "synthetic"}});
  }
  write_bundles(dir / "bundles.jsonl", bundles);
  write_jsonl(dir / "labels.jsonl", labels);
}

}  // namespace hedge

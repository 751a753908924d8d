#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hedge/datamodel.hpp"
#include "hedge/evaluation.hpp"

namespace hedge {

enum class Archetype { Grounded, ConfidentHallucinator, FragileGrounding, Uncertain };

std::string_view to_string(Archetype a) noexcept;
/// Also accepts the short forms "fragile" and "confident".
Archetype parse_archetype(std::string_view s);

struct ResponderProfile {
  Archetype archetype = Archetype::Grounded;
  double clean_concentration = 1.0;  // P(clean answer repeats the dominant hypothesis)
  double noisy_concentration = 1.0;
  int hypothesis_pool_size = 8;
  double loglik_mean = -0.5;
  double loglik_spread = 0.2;
  Label label = Label::Supported;
};

/// Preset used by the regime suites.
ResponderProfile canonical_profile(Archetype archetype);

/// Throws InvalidValue for concentrations outside [0, 1], a pool below 1,
/// a positive loglik_mean or a negative spread.
void check_profile(const ResponderProfile& profile);

struct SyntheticItem {
  TaskType task_type = TaskType::VideoQA;
  std::string video_id;  // empty: derived from the seed
};

/// Texts are "hypothesis-k"; hypothesis-0 is dominant. The baseline and clean
/// answers use the clean concentration, noisy answers the noisy one, and
/// log-likelihoods are N(mean, spread) clipped at 0.
LabeledBundle simulate_bundle(const ResponderProfile& profile, int n, std::uint64_t seed,
                              const SyntheticItem& item = {});

using ProfileMix = std::vector<std::pair<ResponderProfile, double>>;

/// "grounded:0.5,fragile:0.5" with canonical profiles. Weights must sum to 1.
ProfileMix parse_mix(std::string_view spec);

struct SuiteOptions {
  int n = 10;
  TaskType task_type = TaskType::VideoQA;
};

/// Item counts follow the weights (largest remainder); item order and every
/// bundle are a pure function of the seed.
std::vector<LabeledBundle> regime_suite(int num_items, const ProfileMix& mix, std::uint64_t seed,
                                        const SuiteOptions& options = {});

/// Writes bundles.jsonl and labels.jsonl (verdict rows, judge_model "synthetic").
void write_suite(const std::filesystem::path& dir, const std::vector<LabeledBundle>& suite);

}  // namespace hedge

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hedge {

/// Photometric distortion applied to one noisy variant of a clip.
struct PerturbationRecipe {
  double brightness = 0.0;         // additive, U(-0.2, 0.2)
  double contrast = 1.0;           // multiplicative, U(0.8, 1.2)
  double saturation = 1.0;         // multiplicative, U(0.95, 1.05)
  double hue_shift_degrees = 0.0;  // U(-0.02, 0.02) * 360
  int noise_strength = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const PerturbationRecipe&, const PerturbationRecipe&) = default;
};

struct FramePolicy {
  int frame_count = 24;
  int max_pixels = 100352;
  int target_width = 416;
  int target_height = 234;
};

namespace ranges {
inline constexpr double kBrightnessLo = -0.2, kBrightnessHi = 0.2;
inline constexpr double kContrastLo = 0.8, kContrastHi = 1.2;
inline constexpr double kSaturationLo = 0.95, kSaturationHi = 1.05;
inline constexpr double kHueLo = -0.02 * 360.0, kHueHi = 0.02 * 360.0;
}  // namespace ranges

inline constexpr int kDefaultNoiseStrength = 20;

/// Deterministic in `seed`; every parameter is uniform over its range.
PerturbationRecipe sample_recipe(std::uint64_t seed, int noise_strength = kDefaultNoiseStrength);

/// Seed of the noisy variant with the given ordinal: seed XOR mix64(ordinal).
std::uint64_t derive_variant_seed(std::uint64_t seed, int ordinal) noexcept;

/// eq -> hue -> noise -> scale.
std::string filtergraph(const PerturbationRecipe& recipe, const FramePolicy& policy);

struct CommandOptions {
  std::string ffmpeg_path = "ffmpeg";
  /// Passes all_seed to the noise filter so reruns reproduce the same pixels.
  bool seed_noise = true;
};

/// The filtergraph as passed to the processor, seeded per the options. Throws
/// InvalidValue when the policy target exceeds its pixel budget.
std::string command_filtergraph(const PerturbationRecipe& recipe, const FramePolicy& policy,
                                const CommandOptions& options = {});

/// Throws InvalidPath for an empty path or one that is not valid UTF-8.
void check_media_path(const std::string& path, const char* what);

/// Argument vector for the external processor; nothing is executed.
std::vector<std::string> recipe_to_command(const PerturbationRecipe& recipe, const FramePolicy& policy,
                                           const std::string& in_path, const std::string& out_path,
                                           const CommandOptions& options = {});

/// Largest aspect-preserving multiple (aw*k, ah*k) with aw*ah*k^2 <= max_pixels.
std::pair<int, int> resolution_for_budget(int source_width, int source_height, long long max_pixels);

FramePolicy make_frame_policy(int frame_count, int max_pixels, int source_width = 1920, int source_height = 1080);

/// Center-of-bin indices floor((j + 0.5) * total / n), j = 0..n-1.
std::vector<int> uniform_frame_indices(int total_frames, int n);

/// Shortest decimal form that round-trips ("0", "1", "3.6").
std::string format_number(double v);

}  // namespace hedge

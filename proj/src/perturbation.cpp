#include "hedge/perturbation.hpp"

#include <charconv>
#include <numeric>
#include <random>

#include "hedge/error.hpp"
#include "hedge/hash.hpp"

namespace hedge {

namespace {

// mt19937_64's output sequence is fixed by the standard; the mapping to
// [0, 1) is done here so recipes are identical across standard libraries.
double unit_uniform(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& gen, double lo, double hi) { return lo + (hi - lo) * unit_uniform(gen); }

bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int extra = 0;
    if (c < 0x80) extra = 0;
    else if ((c >> 5) == 0x6) extra = 1;
    else if ((c >> 4) == 0xe) extra = 2;
    else if ((c >> 3) == 0x1e) extra = 3;
    else return false;
    if (i + extra >= s.size()) return false;
    for (int k = 1; k <= extra; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    }
    i += extra + 1;
  }
  return true;
}

void check_path(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::InvalidPath, std::string(what) + " is empty");
  if (!valid_utf8(path)) throw Error(ErrorCode::InvalidPath, std::string(what) + " is not valid UTF-8");
}

}  // namespace

std::string format_number(double v) {
  if (v == 0.0) return "0";  // also folds -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

PerturbationRecipe sample_recipe(std::uint64_t seed, int noise_strength) {
  std::mt19937_64 gen(seed);
  PerturbationRecipe r;
  r.brightness = uniform(gen, ranges::kBrightnessLo, ranges::kBrightnessHi);
  r.contrast = uniform(gen, ranges::kContrastLo, ranges::kContrastHi);
  r.saturation = uniform(gen, ranges::kSaturationLo, ranges::kSaturationHi);
  r.hue_shift_degrees = uniform(gen, ranges::kHueLo, ranges::kHueHi);
  r.noise_strength = noise_strength;
  r.seed = seed;
  return r;
}

std::uint64_t derive_variant_seed(std::uint64_t seed, int ordinal) noexcept {
  return seed ^ mix64(static_cast<std::uint64_t>(ordinal));
}

std::string filtergraph(const PerturbationRecipe& r, const FramePolicy& p) {
  std::string g;
  g += "eq=brightness=" + format_number(r.brightness) + ":contrast=" + format_number(r.contrast) +
       ":saturation=" + format_number(r.saturation);
  g += ",hue=h=" + format_number(r.hue_shift_degrees);
  g += ",noise=alls=" + std::to_string(r.noise_strength) + ":allf=t";
  g += ",scale=" + std::to_string(p.target_width) + ":" + std::to_string(p.target_height);
  return g;
}

std::string command_filtergraph(const PerturbationRecipe& recipe, const FramePolicy& policy,
                                const CommandOptions& options) {
  if (policy.target_width < 1 || policy.target_height < 1 ||
      static_cast<long long>(policy.target_width) * policy.target_height > policy.max_pixels) {
    throw Error(ErrorCode::InvalidValue, "frame policy target exceeds its pixel budget");
  }
  std::string graph = filtergraph(recipe, policy);
  if (options.seed_noise) {
    // Insert the noise seed right after the noise amplitude.
    const std::string key = ":allf=t";
    graph.insert(graph.find(key) + key.size(), ":all_seed=" + std::to_string(recipe.seed & 0x7fffffff));
  }
  return graph;
}

void check_media_path(const std::string& path, const char* what) { check_path(path, what); }

std::vector<std::string> recipe_to_command(const PerturbationRecipe& recipe, const FramePolicy& policy,
                                           const std::string& in_path, const std::string& out_path,
                                           const CommandOptions& options) {
  check_path(in_path, "input path");
  check_path(out_path, "output path");
  return {options.ffmpeg_path, "-y", "-hide_banner", "-loglevel", "error", "-i", in_path,
          "-vf", command_filtergraph(recipe, policy, options), "-an", out_path};
}

std::pair<int, int> resolution_for_budget(int source_width, int source_height, long long max_pixels) {
  if (source_width < 1 || source_height < 1) {
    throw Error(ErrorCode::InvalidValue, "source dimensions must be positive");
  }
  const int g = std::gcd(source_width, source_height);
  const long long aw = source_width / g;
  const long long ah = source_height / g;
  const long long unit = aw * ah;
  long long k = 0;
  while (unit * (k + 1) * (k + 1) <= max_pixels) ++k;
  if (k < 1) {
    throw Error(ErrorCode::BudgetTooSmall, "budget " + std::to_string(max_pixels) + " below aspect unit " +
                                               std::to_string(aw) + "x" + std::to_string(ah));
  }
  return {static_cast<int>(aw * k), static_cast<int>(ah * k)};
}

FramePolicy make_frame_policy(int frame_count, int max_pixels, int source_width, int source_height) {
  if (frame_count < 1) throw Error(ErrorCode::InvalidValue, "frame_count must be positive");
  const auto [w, h] = resolution_for_budget(source_width, source_height, max_pixels);
  return {frame_count, max_pixels, w, h};
}

std::vector<int> uniform_frame_indices(int total_frames, int n) {
  if (total_frames < 1 || n < 1) throw Error(ErrorCode::InvalidValue, "frame counts must be positive");
  if (n > total_frames) {
    throw Error(ErrorCode::NotEnoughFrames,
                std::to_string(n) + " frames requested from a clip of " + std::to_string(total_frames));
  }
  std::vector<int> idx(n);
  for (int j = 0; j < n; ++j) {
    // Integer form of floor((j + 0.5) * total / n).
    idx[j] = static_cast<int>(((2LL * j + 1) * total_frames) / (2LL * n));
  }
  return idx;
}

}  // namespace hedge

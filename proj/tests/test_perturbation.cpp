#include <doctest.h>

#include <algorithm>
#include <set>

#include "hedge/error.hpp"
#include "hedge/perturbation.hpp"

using namespace hedge;

namespace {

bool contains(const std::vector<std::string>& argv, const std::string& needle) {
  return std::any_of(argv.begin(), argv.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("sample_recipe is deterministic and in range") {
  CHECK(sample_recipe(42) == sample_recipe(42));
  CHECK_FALSE(sample_recipe(42) == sample_recipe(43));
  for (std::uint64_t seed = 0; seed < 5000; ++seed) {
    const auto r = sample_recipe(seed * 0x9e3779b97f4a7c15ULL);
    REQUIRE(r.brightness >= -0.2);
    REQUIRE(r.brightness <= 0.2);
    REQUIRE(r.contrast >= 0.8);
    REQUIRE(r.contrast <= 1.2);
    REQUIRE(r.saturation >= 0.95);
    REQUIRE(r.saturation <= 1.05);
    REQUIRE(r.hue_shift_degrees >= -7.2);
    REQUIRE(r.hue_shift_degrees <= 7.2);
  }
}

TEST_CASE("contrast Monte-Carlo mean matches the uniform mean") {
  // Mean of U(0.8, 1.2) is 1.0; the standard error over 1e4 draws is ~1.2e-3.
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += sample_recipe(derive_variant_seed(99, i)).contrast;
  CHECK(sum / 10000.0 == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("variant seeds are distinct per ordinal") {
  std::set<std::uint64_t> seeds;
  for (int i = 0; i < 1000; ++i) seeds.insert(derive_variant_seed(12345, i));
  CHECK(seeds.size() == 1000);
}

TEST_CASE("recipe_to_command builds an argv with ordered filters") {
  PerturbationRecipe identity{0.0, 1.0, 1.0, 0.0, 0, 0};
  const FramePolicy policy{24, 100352, 416, 234};
  const auto argv = recipe_to_command(identity, policy, "in.mp4", "out.mp4");
  CHECK(argv.front() == "ffmpeg");
  CHECK(contains(argv, "eq=brightness=0:contrast=1:saturation=1"));
  CHECK(contains(argv, "scale=416:234"));
  CHECK(argv.back() == "out.mp4");

  const auto vf = std::find(argv.begin(), argv.end(), "-vf");
  REQUIRE(vf != argv.end());
  const std::string& graph = *(vf + 1);
  const auto eq = graph.find("eq=");
  const auto hue = graph.find("hue=");
  const auto noise = graph.find("noise=");
  const auto scale = graph.find("scale=");
  CHECK(eq < hue);
  CHECK(hue < noise);
  CHECK(noise < scale);
  CHECK(graph.find("allf=t") != std::string::npos);

  PerturbationRecipe hue_only = identity;
  hue_only.hue_shift_degrees = 3.6;
  CHECK(contains(recipe_to_command(hue_only, policy, "a", "b"), "hue=h=3.6"));

  CommandOptions custom;
  custom.ffmpeg_path = "/opt/ffmpeg/bin/ffmpeg";
  CHECK(recipe_to_command(identity, policy, "a", "b", custom).front() == "/opt/ffmpeg/bin/ffmpeg");
}

TEST_CASE("recipe_to_command rejects bad paths") {
  const FramePolicy policy{24, 100352, 416, 234};
  PerturbationRecipe r;
  CHECK_THROWS_WITH_AS(recipe_to_command(r, policy, "", "out.mp4"), doctest::Contains("InvalidPath"), Error);
  CHECK_THROWS_WITH_AS(recipe_to_command(r, policy, "in.mp4", std::string("\xff\xfe", 2)),
                       doctest::Contains("InvalidPath"), Error);
  CHECK_NOTHROW(recipe_to_command(r, policy, "vidéo.mp4", "out.mp4"));
}

TEST_CASE("resolution_for_budget reproduces the pixel-budget table") {
  using P = std::pair<int, int>;
  CHECK(resolution_for_budget(1920, 1080, 10000) == P{128, 72});
  CHECK(resolution_for_budget(1920, 1080, 40000) == P{256, 144});
  CHECK(resolution_for_budget(1920, 1080, 100352) == P{416, 234});
  CHECK(resolution_for_budget(1920, 1080, 160000) == P{528, 297});
  CHECK(resolution_for_budget(1920, 1080, 250000) == P{656, 369});
  CHECK_THROWS_WITH_AS(resolution_for_budget(1920, 1080, 100), doctest::Contains("BudgetTooSmall"), Error);
}

TEST_CASE("property: resolution_for_budget is monotone and within budget") {
  const std::pair<int, int> sources[] = {{1920, 1080}, {1280, 720}, {640, 480}, {1000, 999}, {7, 3}};
  for (auto [w, h] : sources) {
    long long prev_area = 0;
    for (long long budget = 21; budget < 400000; budget = budget * 11 / 10 + 1) {
      std::pair<int, int> res;
      try {
        res = resolution_for_budget(w, h, budget);
      } catch (const Error&) {
        continue;
      }
      const long long area = 1LL * res.first * res.second;
      CHECK(area <= budget);
      CHECK(area >= prev_area);
      CHECK(1LL * res.first * h == 1LL * res.second * w);
      prev_area = area;
    }
  }
}

TEST_CASE("uniform_frame_indices center-of-bin rule") {
  CHECK(uniform_frame_indices(10, 5) == std::vector<int>{1, 3, 5, 7, 9});
  CHECK(uniform_frame_indices(4, 4) == std::vector<int>{0, 1, 2, 3});
  const auto idx = uniform_frame_indices(240, 24);
  REQUIRE(idx.size() == 24);
  CHECK(idx.front() == 5);
  CHECK(idx.back() == 235);
  for (std::size_t j = 1; j < idx.size(); ++j) CHECK(idx[j] - idx[j - 1] == 10);
  CHECK_THROWS_WITH_AS(uniform_frame_indices(3, 4), doctest::Contains("NotEnoughFrames"), Error);
}

TEST_CASE("property: frame indices strictly increasing and in range") {
  for (int total = 1; total <= 120; ++total) {
    for (int n = 1; n <= total; ++n) {
      const auto idx = uniform_frame_indices(total, n);
      REQUIRE(static_cast<int>(idx.size()) == n);
      REQUIRE(idx.front() >= 0);
      REQUIRE(idx.back() < total);
      for (int j = 1; j < n; ++j) REQUIRE(idx[j] > idx[j - 1]);
      // Matches the floating-point definition.
      for (int j = 0; j < n; ++j) REQUIRE(idx[j] == static_cast<int>((j + 0.5) * total / n));
    }
  }
}

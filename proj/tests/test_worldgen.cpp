// Copyright 2026 The OASIS Engine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "oasis/error.hpp"
#include "oasis/worldgen.hpp"

namespace oasis {
namespace {

constexpr int kPedestrian = static_cast<int>(SceneClass::kPedestrian);

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) s += std::abs(a.rgb[i] - b.rgb[i]);
  return s / static_cast<double>(a.rgb.size());
}

std::array<double, 3> channel_means(const Image& img) {
  std::array<double, 3> m{};
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    for (std::size_t k = 0; k < 3; ++k) m[k] += img.rgb[p * 3 + k];
  }
  for (double& v : m) v /= static_cast<double>(img.pixels());
  return m;
}

Image gradient_image() {
  Image img(6, 7);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    img.rgb[i] = static_cast<double>((i * 37) % 101) / 100.0;
  }
  return img;
}

WorldConfig small_world() {
  WorldConfig cfg;
  cfg.train_frames = 20;
  cfg.frames_per_subsequence = 10;
  cfg.source_memory = 8;
  return cfg;
}

TEST(Render, DeterministicAndWellFormed) {
  const DomainSpec spec{Environment::kHarbor, Condition::kRain, 1.0};
  const LabeledFrame a = render(spec, 17, 99);
  const LabeledFrame b = render(spec, 17, 99);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask.labels, b.mask.labels);
  EXPECT_EQ(a.image.height, 48u);
  EXPECT_EQ(a.image.width, 64u);
  EXPECT_EQ(a.mask.labels.size(), a.image.pixels());
  for (int v : a.mask.labels) {
    EXPECT_GE(v, 0);
    EXPECT_LT(v, kNumClasses);
  }
  for (double v : a.image.rgb) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_NE(render(spec, 17, 100).image, a.image);
}

TEST(Render, DroppedPedestriansNeverAppear) {
  const std::vector<int> dropped{kPedestrian};
  int present_without_dropout = 0;
  for (int t = 0; t < 100; ++t) {
    const DomainSpec spec{Environment::kDowntown, Condition::kClear, 1.0};
    const LabeledFrame f = render(spec, t, 5, 48, 64, dropped);
    EXPECT_EQ(std::count(f.mask.labels.begin(), f.mask.labels.end(), kPedestrian), 0);
    const LabeledFrame g = render(spec, t, 5);
    present_without_dropout +=
        std::count(g.mask.labels.begin(), g.mask.labels.end(), kPedestrian) > 0;
  }
  EXPECT_GT(present_without_dropout, 0);
}

TEST(Render, ConsecutiveFramesAreCloserThanIndependentOnes) {
  std::mt19937_64 rng(11);
  double consecutive = 0.0, independent = 0.0;
  for (int i = 0; i < 100; ++i) {
    const DomainSpec spec{static_cast<Environment>(rng() % kNumEnvironments),
                          static_cast<Condition>(rng() % kNumConditions), 1.0};
    const std::uint64_t seed = rng();
    const int t = static_cast<int>(rng() % 1000);
    const Image a = render(spec, t, seed).image;
    consecutive += mean_abs_diff(a, render(spec, t + 1, seed).image);
    const DomainSpec other{static_cast<Environment>(rng() % kNumEnvironments),
                           static_cast<Condition>(rng() % kNumConditions), 1.0};
    independent += mean_abs_diff(a, render(other, static_cast<int>(rng() % 1000), rng()).image);
  }
  EXPECT_LT(consecutive, independent);
  EXPECT_LT(consecutive / 100.0, 0.5 * independent / 100.0);
}

TEST(Render, ConditionsNeverMoveObjectBoundaries) {
  for (int t = 0; t < 20; ++t) {
    const Mask base = render({Environment::kSuburb, Condition::kClear, 1.0}, t, 3).mask;
    for (int c = 1; c < kNumConditions; ++c) {
      const DomainSpec spec{Environment::kSuburb, static_cast<Condition>(c), 1.0};
      EXPECT_EQ(render(spec, t, 3).mask.labels, base.labels) << condition_name(spec.condition);
    }
  }
}

TEST(Render, SeverityMonotonicallyWidensChannelMeanGap) {
  for (int c = 1; c < kNumConditions; ++c) {
    double previous = -1.0;
    for (double severity : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      double gap = 0.0;
      for (int t = 0; t < 10; ++t) {
        const auto src = channel_means(render({Environment::kBoulevard, Condition::kClear, 1.0}, t, 8).image);
        const auto dst = channel_means(
            render({Environment::kBoulevard, static_cast<Condition>(c), severity}, t, 8).image);
        gap += std::hypot(src[0] - dst[0], src[1] - dst[1], src[2] - dst[2]);
      }
      if (severity == 0.0) EXPECT_EQ(gap, 0.0);
      EXPECT_GT(gap, previous) << condition_name(static_cast<Condition>(c)) << " at " << severity;
      previous = gap;
    }
  }
}

TEST(DrTransform, NeutralSettingsLeaveImageUnchanged) {
  const Image img = gradient_image();
  EXPECT_EQ(apply_dr_transform(img, DrTransform::kIdentity, {0.3, 0.3, 0.3}), img);
  EXPECT_EQ(apply_dr_transform(img, DrTransform::kBrightness, {1.0, 1.0, 1.0}), img);
  std::mt19937_64 rng(1);
  EXPECT_EQ(apply_dr_transform(img, DrTransform::kIdentity, rng), img);
}

TEST(DrTransform, GrayscaleReplicatesLuminance) {
  std::mt19937_64 rng(2);
  const Image out = apply_dr_transform(gradient_image(), DrTransform::kGrayscale, rng);
  for (std::size_t p = 0; p < out.pixels(); ++p) {
    EXPECT_EQ(out.rgb[p * 3], out.rgb[p * 3 + 1]);
    EXPECT_EQ(out.rgb[p * 3], out.rgb[p * 3 + 2]);
  }
}

TEST(DrTransform, RandomIntensitiesStayInRange) {
  const Image flat(4, 4, 0.5);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const double f = apply_dr_transform(flat, DrTransform::kBrightness, rng).rgb[0] / 0.5;
    EXPECT_GE(f, 0.2 - 1e-12);
    EXPECT_LE(f, 1.8 + 1e-12);
    const Image dark(4, 4, 0.0);
    const Image shifted = apply_dr_transform(dark, DrTransform::kRgbShift, rng);
    for (double v : shifted.rgb) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 120.0 / 255.0 + 1e-12);
    }
  }
}

TEST(DrTransform, OutputIsClampedAndUnknownIdsThrow) {
  const Image out = apply_dr_transform(Image(3, 3, 0.9), DrTransform::kBrightness, {1.8, 1.8, 1.8});
  for (double v : out.rgb) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(apply_dr_transform(Image(2, 2), static_cast<DrTransform>(9), {1.0, 1.0, 1.0}), Error);
  EXPECT_THROW(parse_dr_transform("blur"), Error);
  EXPECT_EQ(parse_dr_transform("rgb_shift"), DrTransform::kRgbShift);
}

TEST(Randomize, DrawsDistinctTransforms) {
  std::mt19937_64 rng(4);
  for (int k = 1; k <= kNumDrTransforms; ++k) {
    for (int i = 0; i < 50; ++i) {
      const auto ts = sample_dr_transforms(k, rng);
      ASSERT_EQ(static_cast<int>(ts.size()), k);
      EXPECT_EQ(std::set<DrTransform>(ts.begin(), ts.end()).size(), ts.size());
    }
  }
  EXPECT_THROW(sample_dr_transforms(0, rng), Error);
  EXPECT_THROW(sample_dr_transforms(7, rng), Error);
}

TEST(Randomize, ReproducibleFromSeed) {
  const Image img = gradient_image();
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(randomize(img, 3, a), randomize(img, 3, b));
}

TEST(Randomize, EachTransformAppearsWithFrequencyKOverSix) {
  std::mt19937_64 rng(2026);
  std::array<int, kNumDrTransforms> hits{};
  constexpr int kDraws = 600;
  for (int i = 0; i < kDraws; ++i) {
    for (DrTransform t : sample_dr_transforms(2, rng)) ++hits[static_cast<std::size_t>(t)];
  }
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / kDraws, 2.0 / 6.0, 0.05);
}

TEST(Benchmark, EpisodeShapeAndDomainSplit) {
  const WorldConfig cfg = small_world();
  const Benchmark b = make_benchmark(cfg, 7);
  EXPECT_EQ(static_cast<int>(b.train_set.size()), cfg.train_frames);
  EXPECT_EQ(static_cast<int>(b.source_memory.size()), cfg.source_memory);
  ASSERT_EQ(static_cast<int>(b.val_episodes.size()), cfg.val_episodes);
  ASSERT_EQ(static_cast<int>(b.deploy_episodes.size()), cfg.deploy_episodes);

  std::set<std::pair<Environment, Condition>> val_pairs, deploy_pairs;
  for (const auto& ep : b.val_episodes) {
    EXPECT_EQ(ep.frame_count(), cfg.subsequences * cfg.frames_per_subsequence);
    for (const auto& s : ep.subsequences) {
      val_pairs.insert({s.domain.environment, s.domain.condition});
      EXPECT_TRUE(is_val_environment(s.domain.environment));
    }
  }
  for (const auto& ep : b.deploy_episodes) {
    EXPECT_EQ(ep.frame_count(), cfg.subsequences * cfg.frames_per_subsequence);
    for (const auto& s : ep.subsequences) {
      deploy_pairs.insert({s.domain.environment, s.domain.condition});
      EXPECT_FALSE(is_val_environment(s.domain.environment));
      EXPECT_FALSE(is_train_environment(s.domain.environment));
      EXPECT_FALSE(is_val_condition(s.domain.condition));
      EXPECT_NE(s.domain.condition, Condition::kClear);
    }
  }
  for (const auto& p : deploy_pairs) EXPECT_EQ(val_pairs.count(p), 0u);
  for (const auto& f : b.train_set) {
    EXPECT_TRUE(is_train_environment(f.domain.environment));
    EXPECT_EQ(f.domain.condition, Condition::kClear);
  }
}

TEST(Benchmark, DeployHasPedestrianAbsenceThenReappearance) {
  const WorldConfig cfg = small_world();
  bool found = false;
  for (const auto& ep : make_deploy_episodes(cfg, 7)) {
    int absent_run = 0, longest = 0;
    bool reappears = false;
    for (int f = 0; f < ep.frame_count(); ++f) {
      const Mask m = render_episode_frame(ep, f, cfg.height, cfg.width).mask;
      const bool present = std::count(m.labels.begin(), m.labels.end(), kPedestrian) > 0;
      if (present) {
        if (absent_run >= 2 * cfg.frames_per_subsequence) reappears = true;
        absent_run = 0;
      } else {
        longest = std::max(longest, ++absent_run);
      }
    }
    if (reappears && longest >= 2 * cfg.frames_per_subsequence) found = true;
  }
  EXPECT_TRUE(found);
}

TEST(Benchmark, RegenerationIsBitIdentical) {
  const WorldConfig cfg = small_world();
  const Benchmark a = make_benchmark(cfg, 13);
  const Benchmark b = make_benchmark(cfg, 13);
  EXPECT_EQ(episode_manifest(a.val_episodes), episode_manifest(b.val_episodes));
  EXPECT_EQ(episode_manifest(a.deploy_episodes), episode_manifest(b.deploy_episodes));
  for (std::size_t i = 0; i < a.train_set.size(); ++i) {
    EXPECT_EQ(a.train_set[i].image, b.train_set[i].image);
    EXPECT_EQ(a.train_set[i].mask.labels, b.train_set[i].mask.labels);
  }
  const auto& ep = a.deploy_episodes[1];
  for (int f = 0; f < ep.frame_count(); f += 7) {
    EXPECT_EQ(render_episode_frame(ep, f, 48, 64).image,
              render_episode_frame(b.deploy_episodes[1], f, 48, 64).image);
  }
  EXPECT_NE(episode_manifest(make_benchmark(cfg, 14).val_episodes),
            episode_manifest(a.val_episodes));
}

TEST(EpisodeSpec, LocateMapsFramesToSubsequences) {
  const EpisodeSpec ep = make_val_episodes(small_world(), 1).front();
  EXPECT_EQ(ep.locate(0), (std::pair<std::size_t, int>{0, 0}));
  EXPECT_EQ(ep.locate(13), (std::pair<std::size_t, int>{1, 3}));
  EXPECT_EQ(ep.locate(39), (std::pair<std::size_t, int>{3, 9}));
  EXPECT_THROW(ep.locate(40), Error);
}

TEST(Netpbm, RoundTripsAtEightBits) {
  const auto dir = std::filesystem::temp_directory_path() / "oasis_test_netpbm";
  std::filesystem::create_directories(dir);
  const LabeledFrame f = render({Environment::kOldTown, Condition::kDusk, 1.0}, 4, 21);
  write_ppm(f.image, dir / "f.ppm");
  write_pgm(f.mask, dir / "f.pgm");
  const Image img = read_ppm(dir / "f.ppm");
  ASSERT_EQ(img.height, f.image.height);
  ASSERT_EQ(img.width, f.image.width);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) EXPECT_NEAR(img.rgb[i], f.image.rgb[i], 0.5 / 255.0 + 1e-12);
  EXPECT_EQ(read_pgm(dir / "f.pgm").labels, f.mask.labels);
  EXPECT_THROW(read_pgm(dir / "f.ppm"), Error);
  EXPECT_THROW(read_ppm(dir / "missing.ppm"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace oasis

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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "oasis/image.hpp"

namespace oasis {

inline constexpr int kNumClasses = 8;

enum class SceneClass : int {
  kSky = 0,
  kRoad = 1,
  kSidewalk = 2,
  kBuilding = 3,
  kVegetation = 4,
  kPole = 5,
  kCar = 6,
  kPedestrian = 7,
};

std::string_view class_name(int class_id);

/// Layout families. Train uses the first two, val the next two, deploy the last
/// two; the partition is what makes deploy domains held out.
enum class Environment : int {
  kBoulevard = 0,
  kSuburb = 1,
  kOldTown = 2,
  kHarbor = 3,
  kDowntown = 4,
  kIndustrial = 5,
};
inline constexpr int kNumEnvironments = 6;

enum class Condition : int {
  kClear = 0,
  kDusk = 1,
  kOvercast = 2,
  kNight = 3,
  kFog = 4,
  kRain = 5,
  kWinter = 6,
};
inline constexpr int kNumConditions = 7;

std::string_view environment_name(Environment e);
std::string_view condition_name(Condition c);
Environment parse_environment(std::string_view name);
Condition parse_condition(std::string_view name);

struct DomainSpec {
  Environment environment = Environment::kBoulevard;
  Condition condition = Condition::kClear;
  /// Scales the condition transform; 0 is the clear appearance.
  double severity = 1.0;
  bool operator==(const DomainSpec&) const = default;
};

struct LabeledFrame {
  Image image;
  Mask mask;
  int classes = kNumClasses;
  DomainSpec domain;
};

struct SubSequence {
  DomainSpec domain;
  int frame_count = 0;
  std::uint64_t seed = 0;
  std::vector<int> dropped_classes;
};

struct EpisodeSpec {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<SubSequence> subsequences;

  int frame_count() const;
  /// Sub-sequence index and local frame index for a global frame index.
  std::pair<std::size_t, int> locate(int frame) const;
};

struct WorldConfig {
  std::size_t height = 48;
  std::size_t width = 64;
  int train_frames = 2000;
  int val_episodes = 4;
  int deploy_episodes = 4;
  int subsequences = 4;
  int frames_per_subsequence = 100;
  double severity = 1.0;
  int source_memory = 64;
};

/// Renders frame `t` of a scene stream. Pure function of its arguments.
LabeledFrame render(const DomainSpec& spec, int t, std::uint64_t seed,
                    std::size_t height = 48, std::size_t width = 64,
                    const std::vector<int>& dropped_classes = {});

LabeledFrame render_episode_frame(const EpisodeSpec& episode, int frame,
                                  std::size_t height, std::size_t width);

/// Photometric condition transform applied on top of a clear render.
void apply_condition(Image& image, Condition condition, double severity,
                     std::uint64_t noise_seed);

enum class DrTransform : int {
  kIdentity = 0,
  kBrightness = 1,
  kColor = 2,
  kContrast = 3,
  kRgbShift = 4,
  kGrayscale = 5,
};
inline constexpr int kNumDrTransforms = 6;

DrTransform parse_dr_transform(std::string_view name);
std::string_view dr_transform_name(DrTransform t);

/// Applies one augmentation with an explicit intensity: a scale factor for
/// brightness/color/contrast, a per-channel offset triple for rgb_shift
/// (already in unit range), ignored otherwise.
Image apply_dr_transform(const Image& image, DrTransform transform,
                         const std::array<double, 3>& intensity);

/// Draws the intensity for `transform` from its documented range and applies it.
Image apply_dr_transform(const Image& image, DrTransform transform,
                         std::mt19937_64& rng);

/// K distinct transforms, sampled without replacement, in the sampled order.
std::vector<DrTransform> sample_dr_transforms(int k, std::mt19937_64& rng);
Image randomize(const Image& image, int k, std::mt19937_64& rng);

struct Benchmark {
  std::vector<LabeledFrame> train_set;
  std::vector<EpisodeSpec> val_episodes;
  std::vector<EpisodeSpec> deploy_episodes;
  /// Held-out labeled source frames (same family as train) for replay and
  /// style references.
  std::vector<LabeledFrame> source_memory;
};

std::vector<EpisodeSpec> make_val_episodes(const WorldConfig& cfg, std::uint64_t seed);
std::vector<EpisodeSpec> make_deploy_episodes(const WorldConfig& cfg, std::uint64_t seed);
std::vector<LabeledFrame> make_train_set(const WorldConfig& cfg, std::uint64_t seed);
std::vector<LabeledFrame> make_source_memory(const WorldConfig& cfg, std::uint64_t seed);
Benchmark make_benchmark(const WorldConfig& cfg, std::uint64_t seed);

bool is_train_environment(Environment e);
bool is_val_environment(Environment e);
bool is_val_condition(Condition c);

void write_ppm(const Image& image, const std::filesystem::path& path);
void write_pgm(const Mask& mask, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);
Mask read_pgm(const std::filesystem::path& path);

/// Plain-text manifest, one sub-sequence per line.
std::string episode_manifest(const std::vector<EpisodeSpec>& episodes);

}  // namespace oasis

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

#include <cstdint>
#include <deque>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oasis/image.hpp"
#include "oasis/segnet.hpp"
#include "oasis/worldgen.hpp"

namespace oasis {

enum class StrategyKind : int {
  kNA,
  kNBn,
  kCBn,
  kNTent,
  kCTent,
  kNPl,
  kCPl,
  kCTentSr,
  kCPlSr,
  kClassRTent,
  kClassRPl,
  kOracleRTent,
  kOracleRPl,
  kNStRandom,
  kNStNn,
};
inline constexpr int kNumStrategies = 15;

std::string_view strategy_name(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);
std::vector<StrategyKind> all_strategies();

bool is_tent(StrategyKind kind);
bool is_pl(StrategyKind kind);
bool is_bn(StrategyKind kind);
bool is_style(StrategyKind kind);
/// Adaptation restarts from the pre-trained model on every frame.
bool is_naive(StrategyKind kind);
bool uses_source_replay(StrategyKind kind);
bool is_class_reset(StrategyKind kind);
bool is_oracle_reset(StrategyKind kind);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kNA;
  double learning_rate = 0.0;
  int adapt_iters = 1;
  double bn_momentum = 0.1;
  double sr_weight = 0.0;
  int sr_batch = 1;
  int reset_window = 1;
  double reset_threshold = 1.0;
  double sgd_momentum = 0.9;
  double weight_decay = 5e-4;

  /// Tuned values for `kind`; fields the strategy does not use keep the
  /// neutral defaults above.
  static StrategyConfig defaults(StrategyKind kind);
  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  bool operator==(const StrategyConfig&) const = default;
};

/// Held-out labeled source frames and their pooled pre-trained features.
struct SourceMemory {
  std::vector<LabeledFrame> frames;
  std::vector<std::vector<double>> features;

  bool empty() const { return frames.empty(); }
};

template <typename T>
SourceMemory build_source_memory(std::vector<LabeledFrame> frames, const SegNet<T>& theta0);

/// Class counts of the pre-trained and the running model over the last K+1
/// frames, current frame included.
struct ResetState {
  std::deque<int> theta0_counts;
  std::deque<int> current_counts;

  void push(int theta0_count, int current_count, int window);
  /// sum(theta0_counts) - sum(current_counts).
  double psi() const;
  /// After a reset the running model is the pre-trained one again, so its past
  /// counts are the pre-trained counts.
  void on_reset() { current_counts = theta0_counts; }
  void clear() {
    theta0_counts.clear();
    current_counts.clear();
  }
};

/// The class-count reset rule on explicit windows.
double class_reset_psi(std::span<const int> theta0_counts, std::span<const int> current_counts);
bool class_reset_decision(std::span<const int> theta0_counts,
                          std::span<const int> current_counts, double threshold);

template <typename T>
struct AdaptState {
  SegNet<T> current;
  std::shared_ptr<const SegNet<T>> theta0;
  Sgd<T> optimizer;
  ResetState reset;
  std::shared_ptr<const SourceMemory> memory;
  std::uint64_t seed = 0;
  std::mt19937_64 rng;
};

template <typename T>
AdaptState<T> make_adapt_state(std::shared_ptr<const SegNet<T>> theta0,
                               std::shared_ptr<const SourceMemory> memory, std::uint64_t seed);

/// One frame as the adapter sees it. Ground truth is only read by the oracle
/// reset. `theta0_prediction` optionally supplies the pre-trained model's
/// prediction on this frame to skip recomputing it.
struct FrameInput {
  const Image* image = nullptr;
  const Mask* ground_truth = nullptr;
  const Mask* theta0_prediction = nullptr;
  int classes = kNumClasses;
};

struct StepResult {
  Mask prediction;
  bool reset_fired = false;
  /// Value of the reset metric that was compared against the threshold.
  double psi = 0.0;
};

/// -sum p log max(p, 1e-12) over a [C,H,W] or [1,C,H,W] map.
template <typename T>
double entropy_loss(const Tensor<T>& probs);
/// Per-pixel argmax, ties to the lowest class.
template <typename T>
Mask pseudo_label(const Tensor<T>& probs, std::size_t height, std::size_t width);
/// Mean per-pixel cross-entropy of `probs` against `labels`.
template <typename T>
double pl_loss(const Tensor<T>& probs, const Mask& labels);

/// Runs `cfg.kind` on one frame and advances `state`.
template <typename T>
StepResult adapt_step(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg);

template <typename T>
StepResult step_tent(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg);
template <typename T>
StepResult step_pl(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg);
template <typename T>
StepResult step_bn(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg);
/// Applies the reset rule of `cfg.kind` before adaptation; returns whether the
/// running model was overwritten with the pre-trained one.
template <typename T>
bool reset_check(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg,
                 double* psi = nullptr);

enum class StyleMode { kRandom, kNearest };

/// Index of the style reference for `content`.
template <typename T>
std::size_t select_style(const Image& content, const SourceMemory& memory, StyleMode mode,
                         const SegNet<T>& theta0, std::uint64_t seed);
/// Matches each channel's mean and standard deviation to `style`, then clamps
/// to [0, 1].
Image match_channel_statistics(const Image& content, const Image& style);
template <typename T>
Image style_match(const Image& content, const SourceMemory& memory, StyleMode mode,
                  const SegNet<T>& theta0, std::uint64_t seed);

/// Cosine similarity; 0 when either vector is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// 64-bit FNV-1a over the image bytes, mixed with `seed`.
std::uint64_t content_hash(const Image& image, std::uint64_t seed);

}  // namespace oasis

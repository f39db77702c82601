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
#include <functional>
#include <vector>

#include "oasis/segnet.hpp"
#include "oasis/worldgen.hpp"

namespace oasis {

struct PretrainConfig {
  int epochs = 6;
  OptimizerConfig optimizer{2.5e-4, 0.9, 5e-4, ParamScope::kAll};
  /// Momentum of the running-statistics bookkeeping during training.
  double bn_momentum = 0.1;
  NetShape net;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
};

/// Batch-size-1 supervised training on `train`. dr_k = 0 is plain ERM; dr_k > 0
/// composes dr_k random photometric transforms on every sample.
template <typename T>
SegNet<T> pretrain(const std::vector<LabeledFrame>& train, const PretrainConfig& cfg,
                   int dr_k, std::uint64_t seed,
                   const std::function<void(const EpochLog&)>& on_epoch = {});

/// Mean per-pixel cross-entropy of `model` on labeled frames (running stats).
template <typename T>
double evaluate_loss(SegNet<T>& model, const std::vector<LabeledFrame>& frames);

}  // namespace oasis

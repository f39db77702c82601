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

#include <memory>

#include "oasis/pretrain.hpp"
#include "oasis/worldgen.hpp"

namespace oasis::testing {

// A reduced world: 24x32 frames, short episodes.
inline WorldConfig tiny_world() {
  WorldConfig w;
  w.height = 24;
  w.width = 32;
  w.train_frames = 300;
  w.val_episodes = 2;
  w.deploy_episodes = 2;
  w.subsequences = 3;
  w.frames_per_subsequence = 12;
  w.source_memory = 16;
  return w;
}

// A converged ERM model on the tiny world, built once per process.
inline std::shared_ptr<const SegNet<double>> tiny_model() {
  static const std::shared_ptr<const SegNet<double>> net = [] {
    PretrainConfig cfg;
    cfg.epochs = 16;
    cfg.optimizer.learning_rate = 2e-3;
    cfg.net.width = 8;
    return std::make_shared<const SegNet<double>>(
        pretrain<double>(make_train_set(tiny_world(), 5), cfg, 0, 5));
  }();
  return net;
}

}  // namespace oasis::testing

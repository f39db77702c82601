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

#include "oasis/pretrain.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace oasis {

template <typename T>
SegNet<T> pretrain(const std::vector<LabeledFrame>& train, const PretrainConfig& cfg,
                   int dr_k, std::uint64_t seed,
                   const std::function<void(const EpochLog&)>& on_epoch) {
  if (cfg.epochs < 0) throw Error(ErrorKind::kConfig, "epochs must be >= 0");
  SegNet<T> model = SegNet<T>::initialize(cfg.net, seed);
  model.set_snapshot_id(dr_k == 0 ? "erm" : "dr" + std::to_string(dr_k));
  if (cfg.epochs == 0 || train.empty()) return model;

  std::mt19937_64 rng(seed ^ (0x5eedull * static_cast<std::uint64_t>(dr_k + 1)));
  Sgd<T> opt;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const T clamp = static_cast<T>(1e-12);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      const LabeledFrame& f = train[idx];
      const Image img = dr_k > 0 ? randomize(f.image, dr_k, rng) : f.image;
      Tape<T> tape;
      const ForwardPass<T> pass =
          forward(tape, model, image_to_tensor<T>(img), BnSetting::batch_only(cfg.bn_momentum));
      const auto loss = tape.cross_entropy_mean(pass.probs, f.mask.labels, clamp);
      const double l = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(l)) {
        throw Error(ErrorKind::kNumeric, "training loss diverged at epoch " +
                                             std::to_string(epoch));
      }
      total += l;
      model.zero_grad();
      tape.backward(loss);
      opt.step(model, cfg.optimizer);
    }
    if (on_epoch) on_epoch({epoch, total / static_cast<double>(train.size())});
  }
  model.drop_grads();
  return model;
}

template <typename T>
double evaluate_loss(SegNet<T>& model, const std::vector<LabeledFrame>& frames) {
  double total = 0.0;
  for (const LabeledFrame& f : frames) {
    Tape<T> tape;
    const ForwardPass<T> pass =
        forward(tape, model, image_to_tensor<T>(f.image), BnSetting::use_running(),
                Trainable::kNone);
    total += static_cast<double>(
        tape.value(tape.cross_entropy_mean(pass.probs, f.mask.labels, static_cast<T>(1e-12)))[0]);
  }
  return frames.empty() ? 0.0 : total / static_cast<double>(frames.size());
}

template SegNet<float> pretrain<float>(const std::vector<LabeledFrame>&, const PretrainConfig&,
                                       int, std::uint64_t,
                                       const std::function<void(const EpochLog&)>&);
template SegNet<double> pretrain<double>(const std::vector<LabeledFrame>&, const PretrainConfig&,
                                         int, std::uint64_t,
                                         const std::function<void(const EpochLog&)>&);
template double evaluate_loss<float>(SegNet<float>&, const std::vector<LabeledFrame>&);
template double evaluate_loss<double>(SegNet<double>&, const std::vector<LabeledFrame>&);

}  // namespace oasis

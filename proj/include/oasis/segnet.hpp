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
#include <filesystem>
#include <string>
#include <vector>

#include "oasis/image.hpp"
#include "oasis/tape.hpp"
#include "oasis/tensor.hpp"

namespace oasis {

inline constexpr double kBnEps = 1e-5;

/// How batch-norm layers pick the statistics they normalize with.
enum class BnMode {
  kUseRunning,  // stored running statistics
  kMix,         // mix the sample's statistics into the stored ones first
  kBatchOnly,   // the current sample's statistics only
};

struct BnSetting {
  BnMode mode = BnMode::kUseRunning;
  /// kMix: mixing weight of the sample statistics. kBatchOnly: if positive,
  /// running statistics track the batch statistics with this momentum
  /// (training-time bookkeeping).
  double momentum = 0.0;

  static BnSetting use_running() { return {BnMode::kUseRunning, 0.0}; }
  static BnSetting mix(double alpha) { return {BnMode::kMix, alpha}; }
  static BnSetting batch_only(double track = 0.0) { return {BnMode::kBatchOnly, track}; }
};

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [Cout]
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = static_cast<T>(kBnEps);
};

struct NetShape {
  std::size_t in_channels = 3;
  std::size_t width = 16;
  std::size_t classes = 8;
  bool operator==(const NetShape&) const = default;
};

enum class ParamScope { kAll, kBnAffineOnly };

/// Which parameters a forward pass records as differentiable.
enum class Trainable { kNone, kBnAffineOnly, kAll };

inline Trainable trainable_for(ParamScope scope) {
  return scope == ParamScope::kAll ? Trainable::kAll : Trainable::kBnAffineOnly;
}

struct OptimizerConfig {
  double learning_rate = 2.5e-4;
  double sgd_momentum = 0.9;
  double weight_decay = 5e-4;
  ParamScope scope = ParamScope::kAll;
};

/// conv3x3(3->W)+BN+ReLU, conv3x3(W->W)+BN+ReLU, conv1x1(W->C).
template <typename T>
class SegNet {
 public:
  SegNet() = default;
  static SegNet initialize(const NetShape& shape, std::uint64_t seed);

  const NetShape& shape() const { return shape_; }
  std::uint64_t init_seed() const { return init_seed_; }
  const std::string& snapshot_id() const { return snapshot_id_; }
  void set_snapshot_id(std::string id) { snapshot_id_ = std::move(id); }

  ConvLayer<T>& conv(std::size_t i) { return convs_.at(i); }
  const ConvLayer<T>& conv(std::size_t i) const { return convs_.at(i); }
  BatchNormLayer<T>& bn(std::size_t i) { return bns_.at(i); }
  const BatchNormLayer<T>& bn(std::size_t i) const { return bns_.at(i); }
  std::size_t bn_count() const { return bns_.size(); }

  /// Every trainable tensor in a fixed order, paired with a stable name.
  std::vector<std::pair<std::string, Tensor<T>*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor<T>*>> named_parameters() const;
  std::vector<Tensor<T>*> parameters(ParamScope scope);
  std::size_t parameter_count() const;

  void zero_grad();
  void drop_grads();

  /// Bit-exact comparison of parameters, statistics and identity.
  bool same_state(const SegNet& other) const;

  template <typename U>
  SegNet<U> cast() const;

 private:
  template <typename U>
  friend class SegNet;
  template <typename U>
  friend void write_checkpoint(const SegNet<U>&, const std::filesystem::path&,
                               const std::string&);
  template <typename U>
  friend SegNet<U> read_checkpoint(const std::filesystem::path&);

  NetShape shape_;
  std::uint64_t init_seed_ = 0;
  std::string snapshot_id_ = "theta0";
  std::vector<ConvLayer<T>> convs_;
  std::vector<BatchNormLayer<T>> bns_;
};

template <typename T>
struct ForwardPass {
  typename Tape<T>::Var logits;
  typename Tape<T>::Var probs;
  /// Post-ReLU activations of the second block, [1, W, H, W].
  typename Tape<T>::Var features;
};

/// Converts an interleaved RGB image into a [1,3,H,W] tensor.
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

/// Runs the network on `tape`. kMix mutates the model's running statistics
/// layer by layer before normalizing with them.
template <typename T>
ForwardPass<T> forward(Tape<T>& tape, SegNet<T>& model, const Tensor<T>& input,
                       const BnSetting& bn, Trainable trainable = Trainable::kAll);

/// Per-pixel class distribution [C, H, W] (batch axis dropped). Never modifies
/// `model`; statistics-mixing modes act on a private copy.
template <typename T>
Tensor<T> predict_probs(const SegNet<T>& model, const Image& image, const BnSetting& bn);

/// Second-block activations averaged over space, one value per channel.
template <typename T>
std::vector<double> pooled_features(const SegNet<T>& model, const Image& image);

/// Per-pixel argmax of a [1,C,H,W] or [C,H,W] probability map; ties go to the
/// lowest class index.
template <typename T>
Mask argmax_mask(const Tensor<T>& probs, std::size_t height, std::size_t width);

/// Mixes this image's per-layer statistics into the running statistics with
/// momentum alpha.
template <typename T>
void update_bn_stats(SegNet<T>& model, const Image& image, double alpha);

/// Momentum SGD with velocity buffers keyed by parameter position.
template <typename T>
class Sgd {
 public:
  /// Applies one update to every tensor in cfg.scope; throws if a tensor in
  /// scope has no gradient.
  void step(SegNet<T>& model, const OptimizerConfig& cfg);
  void reset() { velocity_.clear(); }

 private:
  std::vector<std::vector<T>> velocity_;
  ParamScope scope_ = ParamScope::kAll;
};

template <typename T>
SegNet<T> snapshot(const SegNet<T>& model) {
  return model;
}

/// Overwrites `model` with `snap`; shapes must agree.
template <typename T>
void restore(SegNet<T>& model, const SegNet<T>& snap);

template <typename T>
void write_checkpoint(const SegNet<T>& model, const std::filesystem::path& path,
                      const std::string& provenance);
template <typename T>
SegNet<T> read_checkpoint(const std::filesystem::path& path);
/// The provenance string stored by write_checkpoint.
std::string checkpoint_provenance(const std::filesystem::path& path);

}  // namespace oasis

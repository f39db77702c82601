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

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "oasis/tensor.hpp"

namespace oasis {

/// Per-channel mean and biased variance of a [B,C,H,W] activation.
template <typename T>
struct ChannelStats {
  std::vector<T> mean;
  std::vector<T> var;
};

template <typename T>
ChannelStats<T> channel_stats(const Tensor<T>& x);

/// Records primitive operations during a forward pass and replays them in
/// reverse to accumulate gradients.
///
/// Values produced on the tape live inside it. Tensors registered through
/// `parameter()` are referenced, not copied: `backward()` adds into their
/// gradient slots, so they must outlive the tape's last `backward()` call.
template <typename T>
class Tape {
 public:
  class Var {
   public:
    Var() = default;
    std::size_t index() const { return index_; }
    bool operator==(const Var&) const = default;

   private:
    friend class Tape;
    explicit Var(std::size_t index) : index_(index) {}
    std::size_t index_ = static_cast<std::size_t>(-1);
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Tensor<T> value);
  /// A trainable parameter receives gradients in its slot on backward(); a
  /// frozen one behaves like an input.
  Var parameter(Tensor<T>& param, bool trainable = true);
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  const Tensor<T>& value(Var v) const;
  /// Gradient of the last backward pass with respect to `v`.
  std::span<const T> grad(Var v) const;

  /// Same-size cross-correlation: input [B,Cin,H,W], weight [Cout,Cin,k,k],
  /// bias [Cout], k odd, padding (k-1)/2.
  Var conv2d(Var input, Var weight, Var bias);
  Var relu(Var input);
  /// gamma * (x - mean) / sqrt(var + eps) + beta with statistics held fixed.
  Var batch_norm_fixed(Var input, Var gamma, Var beta,
                       std::span<const T> mean, std::span<const T> var, T eps);
  /// Batch-norm using the input's own per-channel statistics, differentiated
  /// through the statistics. Writes the statistics used to `stats` if given.
  Var batch_norm_batch(Var input, Var gamma, Var beta, T eps,
                       ChannelStats<T>* stats = nullptr);
  Var softmax_channels(Var logits);
  /// -sum p log(max(p, clamp)) over every element.
  Var entropy_sum(Var probs, T clamp);
  /// Mean over pixels of -log(max(p[label], clamp)); probs is [1,C,H,W].
  Var cross_entropy_mean(Var probs, std::span<const int> labels, T clamp);
  Var sum(Var input);
  /// sum_i weights[i] * input[i].
  Var weighted_sum(Var input, std::span<const T> weights);
  Var add(Var a, Var b);
  Var scale(Var input, T factor);

  void backward(Var loss);
  /// Drops recorded operations; parameter data is untouched.
  void clear();

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(Var v) const { return nodes_.at(v.index_).op; }
  /// Node indices in the order the last backward() visited them.
  const std::vector<std::size_t>& last_backward_order() const {
    return visit_order_;
  }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    std::vector<T> grad;
    Tensor<T>* external = nullptr;
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var push(std::string op, Tensor<T> value,
           std::function<void(Tape&, std::size_t)> backward,
           std::initializer_list<std::size_t> inputs);
  bool needs_grad(std::size_t index) const { return nodes_[index].requires_grad; }
  Node& node(Var v);
  const Node& node(Var v) const;
  std::vector<T>& grad_buffer(std::size_t index);

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
  // Write target for gradients of inputs that do not require them.
  std::vector<T> sink_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace oasis

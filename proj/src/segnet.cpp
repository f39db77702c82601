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

#include "oasis/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace oasis {
namespace {

constexpr char kCheckpointMagic[8] = {'O', 'A', 'S', 'I', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
ConvLayer<T> make_conv(std::size_t cin, std::size_t cout, std::size_t k,
                       std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> w(cout * cin * k * k);
  for (T& v : w) v = static_cast<T>(dist(rng));
  return {Tensor<T>({cout, cin, k, k}, std::move(w)), Tensor<T>({cout})};
}

template <typename T>
BatchNormLayer<T> make_bn(std::size_t channels) {
  BatchNormLayer<T> bn;
  bn.gamma = Tensor<T>({channels}, T{1});
  bn.beta = Tensor<T>({channels}, T{0});
  bn.running_mean.assign(channels, T{0});
  bn.running_var.assign(channels, T{1});
  return bn;
}

void check_finite_layer(bool ok, std::size_t layer, const char* where) {
  if (!ok) {
    throw Error(ErrorKind::kNumeric, "non-finite activation at layer " +
                                         std::to_string(layer) + " (" + where + ")");
  }
}

// Little-endian host layout is assumed for the binary checkpoint.
class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename U>
  void pod(U v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename T>
  void values(std::span<const T> v) {
    pod<std::uint64_t>(v.size());
    for (T x : v) pod<double>(static_cast<double>(x));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <typename U>
  U pod() {
    U v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (!is_) throw Error(ErrorKind::kIo, "checkpoint truncated");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 20)) throw Error(ErrorKind::kIo, "checkpoint string too long");
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (!is_) throw Error(ErrorKind::kIo, "checkpoint truncated");
    return s;
  }
  template <typename T>
  std::vector<T> values(std::size_t expected) {
    const auto n = pod<std::uint64_t>();
    if (n != expected) {
      throw Error(ErrorKind::kShape, "checkpoint tensor has " + std::to_string(n) +
                                         " values, expected " + std::to_string(expected));
    }
    std::vector<T> out(n);
    for (T& v : out) v = static_cast<T>(pod<double>());
    return out;
  }

 private:
  std::istream& is_;
};

}  // namespace

template <typename T>
SegNet<T> SegNet<T>::initialize(const NetShape& shape, std::uint64_t seed) {
  if (shape.classes < 2 || shape.width == 0 || shape.in_channels == 0) {
    throw Error(ErrorKind::kConfig, "network needs >= 2 classes and non-zero widths");
  }
  SegNet<T> net;
  net.shape_ = shape;
  net.init_seed_ = seed;
  std::mt19937_64 rng(seed);
  net.convs_.push_back(make_conv<T>(shape.in_channels, shape.width, 3, rng));
  net.convs_.push_back(make_conv<T>(shape.width, shape.width, 3, rng));
  net.convs_.push_back(make_conv<T>(shape.width, shape.classes, 1, rng));
  net.bns_.push_back(make_bn<T>(shape.width));
  net.bns_.push_back(make_bn<T>(shape.width));
  return net;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> SegNet<T>::named_parameters() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.emplace_back("conv" + std::to_string(i) + ".weight", &convs_[i].weight);
    out.emplace_back("conv" + std::to_string(i) + ".bias", &convs_[i].bias);
    if (i < bns_.size()) {
      out.emplace_back("bn" + std::to_string(i) + ".gamma", &bns_[i].gamma);
      out.emplace_back("bn" + std::to_string(i) + ".beta", &bns_[i].beta);
    }
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> SegNet<T>::named_parameters()
    const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (auto& [name, ptr] : const_cast<SegNet*>(this)->named_parameters()) {
    out.emplace_back(name, ptr);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>*> SegNet<T>::parameters(ParamScope scope) {
  std::vector<Tensor<T>*> out;
  if (scope == ParamScope::kBnAffineOnly) {
    for (auto& bn : bns_) {
      out.push_back(&bn.gamma);
      out.push_back(&bn.beta);
    }
    return out;
  }
  for (auto& [name, ptr] : named_parameters()) out.push_back(ptr);
  return out;
}

template <typename T>
std::size_t SegNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, ptr] : named_parameters()) n += ptr->size();
  return n;
}

template <typename T>
void SegNet<T>::zero_grad() {
  for (auto& [name, ptr] : named_parameters()) ptr->zero_grad();
}

template <typename T>
void SegNet<T>::drop_grads() {
  for (auto& [name, ptr] : named_parameters()) ptr->drop_grad();
}

template <typename T>
bool SegNet<T>::same_state(const SegNet& other) const {
  if (!(shape_ == other.shape_) || snapshot_id_ != other.snapshot_id_ ||
      init_seed_ != other.init_seed_ || convs_.size() != other.convs_.size() ||
      bns_.size() != other.bns_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    if (!convs_[i].weight.same_values(other.convs_[i].weight) ||
        !convs_[i].bias.same_values(other.convs_[i].bias)) {
      return false;
    }
  }
  for (std::size_t i = 0; i < bns_.size(); ++i) {
    const auto& a = bns_[i];
    const auto& b = other.bns_[i];
    if (!a.gamma.same_values(b.gamma) || !a.beta.same_values(b.beta) ||
        a.running_mean != b.running_mean || a.running_var != b.running_var ||
        a.eps != b.eps) {
      return false;
    }
  }
  return true;
}

template <typename T>
template <typename U>
SegNet<U> SegNet<T>::cast() const {
  SegNet<U> out;
  out.shape_ = shape_;
  out.init_seed_ = init_seed_;
  out.snapshot_id_ = snapshot_id_;
  for (const auto& c : convs_) {
    out.convs_.push_back({c.weight.template cast<U>(), c.bias.template cast<U>()});
  }
  for (const auto& b : bns_) {
    BatchNormLayer<U> nb;
    nb.gamma = b.gamma.template cast<U>();
    nb.beta = b.beta.template cast<U>();
    nb.running_mean.assign(b.running_mean.begin(), b.running_mean.end());
    nb.running_var.assign(b.running_var.begin(), b.running_var.end());
    nb.eps = static_cast<U>(b.eps);
    out.bns_.push_back(std::move(nb));
  }
  return out;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  const std::size_t plane = image.pixels();
  Tensor<T> t({1, 3, image.height, image.width});
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      t[c * plane + p] = static_cast<T>(image.rgb[p * 3 + c]);
    }
  }
  return t;
}

template <typename T>
ForwardPass<T> forward(Tape<T>& tape, SegNet<T>& model, const Tensor<T>& input,
                       const BnSetting& bn, Trainable trainable) {
  const bool train_conv = trainable == Trainable::kAll;
  const bool train_bn = trainable != Trainable::kNone;
  if (input.rank() != 4 || input.shape()[1] != model.shape().in_channels) {
    throw Error(ErrorKind::kShape, "network input must be [B," +
                                       std::to_string(model.shape().in_channels) +
                                       ",H,W], got " + shape_to_string(input.shape()));
  }
  if (!(bn.momentum >= 0.0 && bn.momentum <= 1.0)) {
    throw Error(ErrorKind::kConfig, "bn momentum must lie in [0, 1]");
  }
  auto h = tape.input(input);
  for (std::size_t l = 0; l < 2; ++l) {
    ConvLayer<T>& conv = model.conv(l);
    BatchNormLayer<T>& norm = model.bn(l);
    h = tape.conv2d(h, tape.parameter(conv.weight, train_conv),
                     tape.parameter(conv.bias, train_conv));
    check_finite_layer(tape.value(h).all_finite(), l, "conv");
    auto gamma = tape.parameter(norm.gamma, train_bn);
    auto beta = tape.parameter(norm.beta, train_bn);
    const T a = static_cast<T>(bn.momentum);
    auto mix_into = [&](const ChannelStats<T>& st) {
      for (std::size_t c = 0; c < st.mean.size(); ++c) {
        norm.running_mean[c] = (T{1} - a) * norm.running_mean[c] + a * st.mean[c];
        norm.running_var[c] = (T{1} - a) * norm.running_var[c] + a * st.var[c];
      }
    };
    if (bn.mode == BnMode::kBatchOnly) {
      ChannelStats<T> st;
      h = tape.batch_norm_batch(h, gamma, beta, norm.eps, &st);
      if (bn.momentum > 0.0) mix_into(st);
    } else {
      if (bn.mode == BnMode::kMix) mix_into(channel_stats(tape.value(h)));
      h = tape.batch_norm_fixed(h, gamma, beta, norm.running_mean, norm.running_var,
                                norm.eps);
    }
    check_finite_layer(tape.value(h).all_finite(), l, "batch_norm");
    h = tape.relu(h);
  }
  const auto features = h;
  ConvLayer<T>& head = model.conv(2);
  auto logits = tape.conv2d(h, tape.parameter(head.weight, train_conv),
                            tape.parameter(head.bias, train_conv));
  check_finite_layer(tape.value(logits).all_finite(), 2, "conv");
  auto probs = tape.softmax_channels(logits);
  return {logits, probs, features};
}

namespace {

// Runs an inference pass. Modes that write running statistics work on a copy
// so the caller's model is never touched.
template <typename T, typename Fn>
auto with_inference_pass(const SegNet<T>& model, const Image& image, const BnSetting& bn,
                         Fn&& fn) {
  const bool writes = bn.mode == BnMode::kMix ||
                      (bn.mode == BnMode::kBatchOnly && bn.momentum > 0.0);
  SegNet<T> scratch;
  SegNet<T>* target = const_cast<SegNet<T>*>(&model);
  if (writes) {
    scratch = model;
    target = &scratch;
  }
  Tape<T> tape;
  const ForwardPass<T> pass =
      forward(tape, *target, image_to_tensor<T>(image), bn, Trainable::kNone);
  return fn(tape, pass);
}

}  // namespace

template <typename T>
Tensor<T> predict_probs(const SegNet<T>& model, const Image& image, const BnSetting& bn) {
  return with_inference_pass(model, image, bn, [](Tape<T>& tape, const ForwardPass<T>& pass) {
    const Tensor<T>& p = tape.value(pass.probs);
    const Shape& s = p.shape();
    return Tensor<T>({s[1], s[2], s[3]}, std::vector<T>(p.data().begin(), p.data().end()));
  });
}

template <typename T>
std::vector<double> pooled_features(const SegNet<T>& model, const Image& image) {
  return with_inference_pass(
      model, image, BnSetting::use_running(), [](Tape<T>& tape, const ForwardPass<T>& pass) {
        const Tensor<T>& f = tape.value(pass.features);
        const std::size_t c = f.dim(1), plane = f.dim(2) * f.dim(3);
        std::vector<double> out(c, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(f[ch * plane + i]);
          out[ch] = acc / static_cast<double>(plane);
        }
        return out;
      });
}

template <typename T>
Mask argmax_mask(const Tensor<T>& probs, std::size_t height, std::size_t width) {
  const std::size_t plane = height * width;
  if (plane == 0 || probs.size() % plane != 0) {
    throw Error(ErrorKind::kShape, "probability map " + shape_to_string(probs.shape()) +
                                       " does not match " + std::to_string(height) +
                                       "x" + std::to_string(width));
  }
  const std::size_t classes = probs.size() / plane;
  Mask mask(height, width);
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    T best_v = probs[p];
    for (std::size_t c = 1; c < classes; ++c) {
      const T v = probs[c * plane + p];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    mask.labels[p] = static_cast<int>(best);
  }
  return mask;
}

template <typename T>
void update_bn_stats(SegNet<T>& model, const Image& image, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::kConfig, "bn momentum must lie in [0, 1]");
  }
  Tape<T> tape;
  forward(tape, model, image_to_tensor<T>(image), BnSetting::mix(alpha), Trainable::kNone);
}

template <typename T>
void Sgd<T>::step(SegNet<T>& model, const OptimizerConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !(cfg.weight_decay >= 0.0)) {
    throw Error(ErrorKind::kConfig, "learning rate and weight decay must be >= 0");
  }
  std::vector<Tensor<T>*> params = model.parameters(cfg.scope);
  if (velocity_.size() != params.size() || scope_ != cfg.scope) {
    velocity_.assign(params.size(), {});
    scope_ = cfg.scope;
  }
  const T lr = static_cast<T>(cfg.learning_rate);
  const T mom = static_cast<T>(cfg.sgd_momentum);
  const T decay = static_cast<T>(cfg.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    if (!p.has_grad()) {
      throw Error(ErrorKind::kState, "missing gradient for a parameter in scope");
    }
    std::span<const T> g = std::as_const(p).grad();
    std::vector<T>& v = velocity_[i];
    if (v.size() != p.size()) v.assign(p.size(), T{0});
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mom * v[j] + g[j];
      p[j] -= lr * v[j] + lr * decay * p[j];
    }
    if (!p.all_finite()) {
      throw Error(ErrorKind::kNumeric, "parameter update produced non-finite values");
    }
  }
}

template <typename T>
void restore(SegNet<T>& model, const SegNet<T>& snap) {
  if (!(model.shape() == snap.shape())) {
    throw Error(ErrorKind::kShape, "snapshot shape does not match model");
  }
  model = snap;
}

template <typename T>
void write_checkpoint(const SegNet<T>& model, const std::filesystem::path& path,
                      const std::string& provenance) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  Writer w(os);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.pod(kCheckpointVersion);
  w.str(provenance);
  w.str(model.snapshot_id_);
  w.pod<std::uint64_t>(model.init_seed_);
  w.pod<std::uint64_t>(model.shape_.in_channels);
  w.pod<std::uint64_t>(model.shape_.width);
  w.pod<std::uint64_t>(model.shape_.classes);
  for (auto& [name, ptr] : model.named_parameters()) {
    w.str(name);
    w.pod<std::uint64_t>(ptr->rank());
    for (std::size_t d : ptr->shape()) w.pod<std::uint64_t>(d);
    w.values(ptr->data());
  }
  for (const auto& bn : model.bns_) {
    w.values(std::span<const T>(bn.running_mean));
    w.values(std::span<const T>(bn.running_var));
    w.pod<double>(static_cast<double>(bn.eps));
  }
  if (!os) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

template <typename T>
SegNet<T> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::kIo, path.string() + " is not a checkpoint");
  }
  Reader r(is);
  if (const auto version = r.pod<std::uint32_t>(); version != kCheckpointVersion) {
    throw Error(ErrorKind::kIo, "unsupported checkpoint version " + std::to_string(version));
  }
  r.str();  // provenance
  const std::string id = r.str();
  const auto seed = r.pod<std::uint64_t>();
  NetShape shape;
  shape.in_channels = r.pod<std::uint64_t>();
  shape.width = r.pod<std::uint64_t>();
  shape.classes = r.pod<std::uint64_t>();
  SegNet<T> net = SegNet<T>::initialize(shape, seed);
  net.snapshot_id_ = id;
  for (auto& [name, ptr] : net.named_parameters()) {
    if (r.str() != name) throw Error(ErrorKind::kIo, "checkpoint tensor order mismatch");
    const auto rank = r.pod<std::uint64_t>();
    Shape s(rank);
    for (auto& d : s) d = r.pod<std::uint64_t>();
    if (s != ptr->shape()) {
      throw Error(ErrorKind::kShape, "checkpoint shape " + shape_to_string(s) + " for " +
                                         name + " does not match " +
                                         shape_to_string(ptr->shape()));
    }
    *ptr = Tensor<T>(s, r.values<T>(ptr->size()));
  }
  for (auto& bn : net.bns_) {
    bn.running_mean = r.values<T>(bn.running_mean.size());
    bn.running_var = r.values<T>(bn.running_var.size());
    bn.eps = static_cast<T>(r.pod<double>());
  }
  return net;
}

std::string checkpoint_provenance(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::kIo, path.string() + " is not a checkpoint");
  }
  Reader r(is);
  if (const auto version = r.pod<std::uint32_t>(); version != kCheckpointVersion) {
    throw Error(ErrorKind::kIo, "unsupported checkpoint version " + std::to_string(version));
  }
  return r.str();
}

#define OASIS_INSTANTIATE_SEGNET(T)                                                 \
  template class SegNet<T>;                                                         \
  template Tensor<T> image_to_tensor<T>(const Image&);                              \
  template ForwardPass<T> forward<T>(Tape<T>&, SegNet<T>&, const Tensor<T>&,        \
                                     const BnSetting&, Trainable);                       \
  template Tensor<T> predict_probs<T>(const SegNet<T>&, const Image&, const BnSetting&);  \
  template std::vector<double> pooled_features<T>(const SegNet<T>&, const Image&);         \
  template Mask argmax_mask<T>(const Tensor<T>&, std::size_t, std::size_t);         \
  template void update_bn_stats<T>(SegNet<T>&, const Image&, double);               \
  template class Sgd<T>;                                                            \
  template void restore<T>(SegNet<T>&, const SegNet<T>&);                           \
  template void write_checkpoint<T>(const SegNet<T>&, const std::filesystem::path&, \
                                    const std::string&);                            \
  template SegNet<T> read_checkpoint<T>(const std::filesystem::path&);

OASIS_INSTANTIATE_SEGNET(float)
OASIS_INSTANTIATE_SEGNET(double)
template SegNet<float> SegNet<double>::cast<float>() const;
template SegNet<double> SegNet<float>::cast<double>() const;
template SegNet<double> SegNet<double>::cast<double>() const;
template SegNet<float> SegNet<float>::cast<float>() const;

}  // namespace oasis

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

#include "oasis/adapt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numeric>

#include "oasis/metrics.hpp"

namespace oasis {
namespace {

constexpr double kProbClamp = 1e-12;

struct StrategyInfo {
  StrategyKind kind;
  std::string_view name;
};

constexpr std::array<StrategyInfo, kNumStrategies> kStrategies{{
    {StrategyKind::kNA, "NA"},
    {StrategyKind::kNBn, "N-BN"},
    {StrategyKind::kCBn, "C-BN"},
    {StrategyKind::kNTent, "N-TENT"},
    {StrategyKind::kCTent, "C-TENT"},
    {StrategyKind::kNPl, "N-PL"},
    {StrategyKind::kCPl, "C-PL"},
    {StrategyKind::kCTentSr, "C-TENT-SR"},
    {StrategyKind::kCPlSr, "C-PL-SR"},
    {StrategyKind::kClassRTent, "Class-R-TENT"},
    {StrategyKind::kClassRPl, "Class-R-PL"},
    {StrategyKind::kOracleRTent, "Oracle-R-TENT"},
    {StrategyKind::kOracleRPl, "Oracle-R-PL"},
    {StrategyKind::kNStRandom, "N-ST-random"},
    {StrategyKind::kNStNn, "N-ST-NN"},
}};

template <typename T>
Mask predict_mask(const SegNet<T>& model, const Image& image, const BnSetting& bn) {
  return argmax_mask(predict_probs(model, image, bn), image.height, image.width);
}

template <typename T>
Mask theta0_mask(const AdaptState<T>& state, const FrameInput& frame) {
  if (frame.theta0_prediction) return *frame.theta0_prediction;
  return predict_mask(*state.theta0, *frame.image, BnSetting::use_running());
}

void require_frame(const FrameInput& frame) {
  if (!frame.image) throw Error(ErrorKind::kState, "frame has no image");
}

template <typename T>
void require_state(const AdaptState<T>& state) {
  if (!state.theta0) throw Error(ErrorKind::kState, "adaptation state has no pre-trained model");
}

// Adds gamma * mean source cross-entropy over sr_batch replayed frames.
template <typename T>
typename Tape<T>::Var add_source_replay(Tape<T>& tape, typename Tape<T>::Var loss,
                                        AdaptState<T>& state, const StrategyConfig& cfg,
                                        Trainable trainable) {
  if (!state.memory || state.memory->empty()) {
    throw Error(ErrorKind::kState, std::string(strategy_name(cfg.kind)) +
                                       " needs a non-empty source memory");
  }
  const auto& frames = state.memory->frames;
  std::uniform_int_distribution<std::size_t> pick(0, frames.size() - 1);
  const T weight = static_cast<T>(cfg.sr_weight / cfg.sr_batch);
  for (int b = 0; b < cfg.sr_batch; ++b) {
    const LabeledFrame& src = frames[pick(state.rng)];
    const ForwardPass<T> pass = forward(tape, state.current, image_to_tensor<T>(src.image),
                                        BnSetting::use_running(), trainable);
    const auto ce =
        tape.cross_entropy_mean(pass.probs, src.mask.labels, static_cast<T>(kProbClamp));
    loss = tape.add(loss, tape.scale(ce, weight));
  }
  return loss;
}

// Shared body of the gradient strategies; `objective` builds the per-frame
// loss from the forward pass.
template <typename T, typename Objective>
StepResult gradient_step(AdaptState<T>& state, const FrameInput& frame,
                         const StrategyConfig& cfg, ParamScope scope, Objective&& objective) {
  require_frame(frame);
  require_state(state);
  cfg.validate();
  StepResult result;
  if (is_class_reset(cfg.kind) || is_oracle_reset(cfg.kind)) {
    result.reset_fired = reset_check(state, frame, cfg, &result.psi);
  }
  if (is_naive(cfg.kind)) {
    state.current = *state.theta0;
    state.optimizer.reset();
  }
  const OptimizerConfig opt{cfg.learning_rate, cfg.sgd_momentum, cfg.weight_decay, scope};
  const Trainable trainable = trainable_for(scope);
  const Tensor<T> input = image_to_tensor<T>(*frame.image);
  for (int it = 0; it < cfg.adapt_iters; ++it) {
    Tape<T> tape;
    const ForwardPass<T> pass =
        forward(tape, state.current, input, BnSetting::use_running(), trainable);
    auto loss = objective(tape, pass);
    if (uses_source_replay(cfg.kind)) loss = add_source_replay(tape, loss, state, cfg, trainable);
    state.current.drop_grads();
    tape.backward(loss);
    state.optimizer.step(state.current, opt);
  }
  state.current.drop_grads();
  result.prediction = predict_mask(state.current, *frame.image, BnSetting::use_running());
  return result;
}

}  // namespace

std::string_view strategy_name(StrategyKind kind) {
  for (const auto& s : kStrategies) {
    if (s.kind == kind) return s.name;
  }
  throw Error(ErrorKind::kConfig, "unknown strategy kind");
}

StrategyKind parse_strategy(std::string_view name) {
  for (const auto& s : kStrategies) {
    if (s.name == name) return s.kind;
  }
  throw Error(ErrorKind::kConfig, "unknown strategy '" + std::string(name) + "'");
}

std::vector<StrategyKind> all_strategies() {
  std::vector<StrategyKind> out;
  for (const auto& s : kStrategies) out.push_back(s.kind);
  return out;
}

bool is_tent(StrategyKind k) {
  return k == StrategyKind::kNTent || k == StrategyKind::kCTent ||
         k == StrategyKind::kCTentSr || k == StrategyKind::kClassRTent ||
         k == StrategyKind::kOracleRTent;
}

bool is_pl(StrategyKind k) {
  return k == StrategyKind::kNPl || k == StrategyKind::kCPl || k == StrategyKind::kCPlSr ||
         k == StrategyKind::kClassRPl || k == StrategyKind::kOracleRPl;
}

bool is_bn(StrategyKind k) { return k == StrategyKind::kNBn || k == StrategyKind::kCBn; }

bool is_style(StrategyKind k) {
  return k == StrategyKind::kNStRandom || k == StrategyKind::kNStNn;
}

bool is_naive(StrategyKind k) {
  return k == StrategyKind::kNA || k == StrategyKind::kNBn || k == StrategyKind::kNTent ||
         k == StrategyKind::kNPl || is_style(k);
}

bool uses_source_replay(StrategyKind k) {
  return k == StrategyKind::kCTentSr || k == StrategyKind::kCPlSr;
}

bool is_class_reset(StrategyKind k) {
  return k == StrategyKind::kClassRTent || k == StrategyKind::kClassRPl;
}

bool is_oracle_reset(StrategyKind k) {
  return k == StrategyKind::kOracleRTent || k == StrategyKind::kOracleRPl;
}

StrategyConfig StrategyConfig::defaults(StrategyKind kind) {
  StrategyConfig c;
  c.kind = kind;
  switch (kind) {
    case StrategyKind::kNTent:
    case StrategyKind::kOracleRTent:
      c.learning_rate = 1.0;
      break;
    case StrategyKind::kCTent:
      c.learning_rate = 0.01;
      break;
    case StrategyKind::kCTentSr:
      c.learning_rate = 0.01;
      c.sr_weight = 1.0;
      break;
    case StrategyKind::kClassRTent:
      c.learning_rate = 0.1;
      break;
    case StrategyKind::kNPl:
    case StrategyKind::kCPl:
    case StrategyKind::kClassRPl:
    case StrategyKind::kOracleRPl:
      c.learning_rate = 1e-4;
      break;
    case StrategyKind::kCPlSr:
      c.learning_rate = 1e-4;
      c.sr_weight = 2.0;
      break;
    default:
      break;
  }
  if (is_oracle_reset(kind)) c.reset_threshold = 0.0;
  return c;
}

void StrategyConfig::validate() const {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::kConfig, std::string(strategy_name(kind)) + ": " + what);
  };
  if (!(std::isfinite(learning_rate) && learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (adapt_iters < 1) fail("adapt_iters must be >= 1");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) fail("bn_momentum must lie in [0, 1]");
  if (!(std::isfinite(sr_weight) && sr_weight >= 0.0)) fail("sr_weight must be >= 0");
  if (sr_batch < 1) fail("sr_batch must be >= 1");
  if (reset_window < 0) fail("reset_window must be >= 0");
  if (!std::isfinite(reset_threshold)) fail("reset_threshold must be finite");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) fail("sgd_momentum must lie in [0, 1)");
  if (!(std::isfinite(weight_decay) && weight_decay >= 0.0)) fail("weight_decay must be >= 0");
}

template <typename T>
SourceMemory build_source_memory(std::vector<LabeledFrame> frames, const SegNet<T>& theta0) {
  SourceMemory m;
  m.frames = std::move(frames);
  m.features.reserve(m.frames.size());
  for (const auto& f : m.frames) m.features.push_back(pooled_features(theta0, f.image));
  return m;
}

void ResetState::push(int theta0_count, int current_count, int window) {
  theta0_counts.push_back(theta0_count);
  current_counts.push_back(current_count);
  const std::size_t keep = static_cast<std::size_t>(std::max(window, 0)) + 1;
  while (theta0_counts.size() > keep) theta0_counts.pop_front();
  while (current_counts.size() > keep) current_counts.pop_front();
}

double ResetState::psi() const {
  const long a = std::accumulate(theta0_counts.begin(), theta0_counts.end(), 0L);
  const long b = std::accumulate(current_counts.begin(), current_counts.end(), 0L);
  return static_cast<double>(a - b);
}

double class_reset_psi(std::span<const int> theta0_counts, std::span<const int> current_counts) {
  if (theta0_counts.size() != current_counts.size()) {
    throw Error(ErrorKind::kShape, "class-count windows differ in length");
  }
  long diff = 0;
  for (std::size_t i = 0; i < theta0_counts.size(); ++i) {
    diff += theta0_counts[i] - current_counts[i];
  }
  return static_cast<double>(diff);
}

bool class_reset_decision(std::span<const int> theta0_counts,
                          std::span<const int> current_counts, double threshold) {
  return class_reset_psi(theta0_counts, current_counts) > threshold;
}

template <typename T>
AdaptState<T> make_adapt_state(std::shared_ptr<const SegNet<T>> theta0,
                               std::shared_ptr<const SourceMemory> memory, std::uint64_t seed) {
  if (!theta0) throw Error(ErrorKind::kState, "adaptation needs a pre-trained model");
  AdaptState<T> s;
  s.current = *theta0;
  s.theta0 = std::move(theta0);
  s.memory = std::move(memory);
  s.seed = seed;
  s.rng.seed(seed);
  return s;
}

template <typename T>
double entropy_loss(const Tensor<T>& probs) {
  double acc = 0;
  for (T v : probs.data()) {
    const double p = static_cast<double>(v);
    acc -= p * std::log(std::max(p, kProbClamp));
  }
  return acc;
}

template <typename T>
Mask pseudo_label(const Tensor<T>& probs, std::size_t height, std::size_t width) {
  return argmax_mask(probs, height, width);
}

template <typename T>
double pl_loss(const Tensor<T>& probs, const Mask& labels) {
  const std::size_t plane = labels.labels.size();
  if (plane == 0 || probs.size() % plane != 0) {
    throw Error(ErrorKind::kShape, "probability map " + shape_to_string(probs.shape()) +
                                       " does not match the label mask");
  }
  const std::size_t classes = probs.size() / plane;
  double acc = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    const int c = labels.labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= classes) {
      throw Error(ErrorKind::kShape, "label " + std::to_string(c) + " out of range");
    }
    const double p = static_cast<double>(probs[static_cast<std::size_t>(c) * plane + i]);
    acc -= std::log(std::max(p, kProbClamp));
  }
  return acc / static_cast<double>(plane);
}

template <typename T>
bool reset_check(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg,
                 double* psi_out) {
  require_frame(frame);
  require_state(state);
  double psi = 0.0;
  if (is_class_reset(cfg.kind)) {
    const int c0 = count_classes(theta0_mask(state, frame), frame.classes);
    const int cc = count_classes(
        predict_mask(state.current, *frame.image, BnSetting::use_running()), frame.classes);
    state.reset.push(c0, cc, cfg.reset_window);
    psi = state.reset.psi();
  } else if (is_oracle_reset(cfg.kind)) {
    if (!frame.ground_truth) {
      throw Error(ErrorKind::kState, std::string(strategy_name(cfg.kind)) +
                                         " requires ground truth for every frame");
    }
    const double m0 = frame_miou(theta0_mask(state, frame), *frame.ground_truth, frame.classes);
    const double mc =
        frame_miou(predict_mask(state.current, *frame.image, BnSetting::use_running()),
                   *frame.ground_truth, frame.classes);
    psi = m0 - mc;
  } else {
    throw Error(ErrorKind::kConfig, std::string(strategy_name(cfg.kind)) +
                                        " has no reset rule");
  }
  if (psi_out) *psi_out = psi;
  if (!(psi > cfg.reset_threshold)) return false;
  state.current = *state.theta0;
  state.optimizer.reset();
  state.reset.on_reset();
  return true;
}

template <typename T>
StepResult step_tent(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg) {
  if (!is_tent(cfg.kind)) {
    throw Error(ErrorKind::kConfig, std::string(strategy_name(cfg.kind)) + " is not a TENT variant");
  }
  return gradient_step(state, frame, cfg, ParamScope::kBnAffineOnly,
                       [](Tape<T>& tape, const ForwardPass<T>& pass) {
                         // Average entropy per pixel.
                         const Shape& s = tape.value(pass.probs).shape();
                         const T inv_pixels = T{1} / static_cast<T>(s[2] * s[3]);
                         return tape.scale(
                             tape.entropy_sum(pass.probs, static_cast<T>(kProbClamp)),
                             inv_pixels);
                       });
}

template <typename T>
StepResult step_pl(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg) {
  if (!is_pl(cfg.kind)) {
    throw Error(ErrorKind::kConfig, std::string(strategy_name(cfg.kind)) + " is not a PL variant");
  }
  return gradient_step(state, frame, cfg, ParamScope::kAll,
                       [&](Tape<T>& tape, const ForwardPass<T>& pass) {
                         const Mask labels = pseudo_label(tape.value(pass.probs),
                                                          frame.image->height,
                                                          frame.image->width);
                         return tape.cross_entropy_mean(pass.probs, labels.labels,
                                                        static_cast<T>(kProbClamp));
                       });
}

template <typename T>
StepResult step_bn(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg) {
  require_frame(frame);
  require_state(state);
  cfg.validate();
  if (!is_bn(cfg.kind)) {
    throw Error(ErrorKind::kConfig, std::string(strategy_name(cfg.kind)) + " is not a BN variant");
  }
  if (cfg.kind == StrategyKind::kNBn) state.current = *state.theta0;
  Tape<T> tape;
  const ForwardPass<T> pass = forward(tape, state.current, image_to_tensor<T>(*frame.image),
                                      BnSetting::mix(cfg.bn_momentum), Trainable::kNone);
  StepResult result;
  result.prediction = argmax_mask(tape.value(pass.probs), frame.image->height, frame.image->width);
  if (cfg.kind == StrategyKind::kNBn) state.current = *state.theta0;
  return result;
}

template <typename T>
StepResult adapt_step(AdaptState<T>& state, const FrameInput& frame, const StrategyConfig& cfg) {
  require_frame(frame);
  require_state(state);
  if (is_tent(cfg.kind)) return step_tent(state, frame, cfg);
  if (is_pl(cfg.kind)) return step_pl(state, frame, cfg);
  if (is_bn(cfg.kind)) return step_bn(state, frame, cfg);
  StepResult result;
  if (cfg.kind == StrategyKind::kNA) {
    result.prediction = theta0_mask(state, frame);
    return result;
  }
  // Style transfer toward a source reference, then the frozen model.
  if (!state.memory || state.memory->empty()) {
    throw Error(ErrorKind::kState, "style transfer needs a non-empty source memory");
  }
  const StyleMode mode = cfg.kind == StrategyKind::kNStNn ? StyleMode::kNearest : StyleMode::kRandom;
  const Image styled = style_match(*frame.image, *state.memory, mode, *state.theta0, state.seed);
  result.prediction = predict_mask(*state.theta0, styled, BnSetting::use_running());
  return result;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kShape, "feature lengths differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::uint64_t content_hash(const Image& image, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  mix(&image.height, sizeof(image.height));
  mix(&image.width, sizeof(image.width));
  mix(image.rgb.data(), image.rgb.size() * sizeof(double));
  return h;
}

template <typename T>
std::size_t select_style(const Image& content, const SourceMemory& memory, StyleMode mode,
                         const SegNet<T>& theta0, std::uint64_t seed) {
  if (memory.empty()) throw Error(ErrorKind::kState, "style memory is empty");
  if (mode == StyleMode::kRandom) {
    std::mt19937_64 rng(content_hash(content, seed));
    return std::uniform_int_distribution<std::size_t>(0, memory.frames.size() - 1)(rng);
  }
  if (memory.features.size() != memory.frames.size()) {
    throw Error(ErrorKind::kState, "style memory has no precomputed features");
  }
  const std::vector<double> f = pooled_features(theta0, content);
  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t i = 0; i < memory.features.size(); ++i) {
    const double s = cosine_similarity(f, memory.features[i]);
    if (s > best_sim) {
      best_sim = s;
      best = i;
    }
  }
  return best;
}

Image match_channel_statistics(const Image& content, const Image& style) {
  const std::size_t nc = content.pixels(), ns = style.pixels();
  if (nc == 0 || ns == 0) throw Error(ErrorKind::kShape, "empty image in style matching");
  auto stats = [](const Image& im, std::size_t c) {
    const std::size_t n = im.pixels();
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += im.rgb[i * 3 + c];
    m /= static_cast<double>(n);
    double v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = im.rgb[i * 3 + c] - m;
      v += d * d;
    }
    return std::pair{m, std::sqrt(v / static_cast<double>(n))};
  };
  Image out = content;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto [mc, sc] = stats(content, c);
    const auto [ms, ss] = stats(style, c);
    const double scale = sc > 0.0 ? ss / sc : 0.0;
    const double shift = ms - mc * scale;
    for (std::size_t i = 0; i < nc; ++i) {
      double& v = out.rgb[i * 3 + c];
      v = std::clamp(v * scale + shift, 0.0, 1.0);
    }
  }
  return out;
}

template <typename T>
Image style_match(const Image& content, const SourceMemory& memory, StyleMode mode,
                  const SegNet<T>& theta0, std::uint64_t seed) {
  const std::size_t idx = select_style(content, memory, mode, theta0, seed);
  return match_channel_statistics(content, memory.frames[idx].image);
}

#define OASIS_INSTANTIATE_ADAPT(T)                                                          \
  template SourceMemory build_source_memory<T>(std::vector<LabeledFrame>, const SegNet<T>&); \
  template AdaptState<T> make_adapt_state<T>(std::shared_ptr<const SegNet<T>>,              \
                                             std::shared_ptr<const SourceMemory>,           \
                                             std::uint64_t);                                \
  template double entropy_loss<T>(const Tensor<T>&);                                        \
  template Mask pseudo_label<T>(const Tensor<T>&, std::size_t, std::size_t);                \
  template double pl_loss<T>(const Tensor<T>&, const Mask&);                                \
  template bool reset_check<T>(AdaptState<T>&, const FrameInput&, const StrategyConfig&,    \
                               double*);                                                    \
  template StepResult step_tent<T>(AdaptState<T>&, const FrameInput&,                       \
                                   const StrategyConfig&);                                  \
  template StepResult step_pl<T>(AdaptState<T>&, const FrameInput&, const StrategyConfig&); \
  template StepResult step_bn<T>(AdaptState<T>&, const FrameInput&, const StrategyConfig&); \
  template StepResult adapt_step<T>(AdaptState<T>&, const FrameInput&,                      \
                                    const StrategyConfig&);                                 \
  template std::size_t select_style<T>(const Image&, const SourceMemory&, StyleMode,        \
                                       const SegNet<T>&, std::uint64_t);                    \
  template Image style_match<T>(const Image&, const SourceMemory&, StyleMode,               \
                                const SegNet<T>&, std::uint64_t);

OASIS_INSTANTIATE_ADAPT(float)
OASIS_INSTANTIATE_ADAPT(double)

#undef OASIS_INSTANTIATE_ADAPT

}  // namespace oasis

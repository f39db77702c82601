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
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "oasis/adapt.hpp"
#include "oasis/error.hpp"
#include "oasis/metrics.hpp"

namespace oasis {
namespace {

using testing::tiny_model;
using testing::tiny_world;

std::vector<LabeledFrame> deploy_frames(int count, int episode = 0) {
  const WorldConfig w = tiny_world();
  const EpisodeSpec ep = make_deploy_episodes(w, 5)[static_cast<std::size_t>(episode)];
  std::vector<LabeledFrame> out;
  for (int f = 0; f < count; ++f) {
    out.push_back(render_episode_frame(ep, f % ep.frame_count(), w.height, w.width));
  }
  return out;
}

std::shared_ptr<const SourceMemory> memory() {
  static const auto m = std::make_shared<const SourceMemory>(
      build_source_memory(make_source_memory(tiny_world(), 5), *tiny_model()));
  return m;
}

AdaptState<double> fresh_state(std::uint64_t seed = 1) {
  return make_adapt_state<double>(tiny_model(), memory(), seed);
}

FrameInput input(const LabeledFrame& f, bool with_gt = true) {
  FrameInput in;
  in.image = &f.image;
  in.ground_truth = with_gt ? &f.mask : nullptr;
  return in;
}

Mask na_prediction(const Image& image) {
  return argmax_mask(predict_probs(*tiny_model(), image, BnSetting::use_running()),
                     image.height, image.width);
}

double miou_of(const SegNet<double>& net, const LabeledFrame& f) {
  const Mask p = argmax_mask(predict_probs(net, f.image, BnSetting::use_running()),
                             f.image.height, f.image.width);
  return frame_miou(p, f.mask, kNumClasses);
}

Tensor<double> prob_map(std::size_t classes, std::size_t pixels,
                        const std::vector<double>& values) {
  Tensor<double> t({1, classes, 1, pixels});
  std::copy(values.begin(), values.end(), t.data().begin());
  return t;
}

bool non_bn_affine_equal(const SegNet<double>& a, const SegNet<double>& b) {
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first.find("gamma") != std::string::npos ||
        pa[i].first.find("beta") != std::string::npos) {
      continue;
    }
    if (!std::equal(pa[i].second->data().begin(), pa[i].second->data().end(),
                    pb[i].second->data().begin())) {
      return false;
    }
  }
  for (std::size_t l = 0; l < a.bn_count(); ++l) {
    if (a.bn(l).running_mean != b.bn(l).running_mean) return false;
    if (a.bn(l).running_var != b.bn(l).running_var) return false;
  }
  return true;
}

TEST(StrategyConfig, DefaultsMatchPublishedHyperparameters) {
  using K = StrategyKind;
  auto d = [](K k) { return StrategyConfig::defaults(k); };
  EXPECT_EQ(d(K::kNBn).bn_momentum, 0.1);
  EXPECT_EQ(d(K::kNTent).learning_rate, 1.0);
  EXPECT_EQ(d(K::kCTent).learning_rate, 0.01);
  EXPECT_EQ(d(K::kCTentSr).learning_rate, 0.01);
  EXPECT_EQ(d(K::kCTentSr).sr_weight, 1.0);
  EXPECT_EQ(d(K::kClassRTent).learning_rate, 0.1);
  EXPECT_EQ(d(K::kClassRTent).reset_window, 1);
  EXPECT_EQ(d(K::kClassRTent).reset_threshold, 1.0);
  EXPECT_EQ(d(K::kOracleRTent).learning_rate, 1.0);
  EXPECT_EQ(d(K::kOracleRTent).reset_threshold, 0.0);
  EXPECT_EQ(d(K::kOracleRPl).reset_threshold, 0.0);
  for (K k : {K::kNPl, K::kCPl, K::kCPlSr, K::kClassRPl, K::kOracleRPl}) {
    EXPECT_EQ(d(k).learning_rate, 1e-4) << strategy_name(k);
  }
  EXPECT_EQ(d(K::kCPlSr).sr_weight, 2.0);
  EXPECT_EQ(d(K::kClassRPl).reset_window, 1);
  EXPECT_EQ(d(K::kClassRPl).reset_threshold, 1.0);
  for (K k : all_strategies()) {
    EXPECT_EQ(d(k).adapt_iters, 1);
    EXPECT_EQ(parse_strategy(strategy_name(k)), k);
    EXPECT_NO_THROW(d(k).validate());
  }
  EXPECT_EQ(all_strategies().size(), static_cast<std::size_t>(kNumStrategies));
}

TEST(StrategyConfig, RejectsInvalidFields) {
  StrategyConfig c = StrategyConfig::defaults(StrategyKind::kCPl);
  c.adapt_iters = 0;
  EXPECT_THROW(c.validate(), Error);
  c = StrategyConfig::defaults(StrategyKind::kCPl);
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = StrategyConfig::defaults(StrategyKind::kCBn);
  c.bn_momentum = 1.5;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(parse_strategy("X-PL"), Error);
}

TEST(EntropyLoss, UniformAndOneHot) {
  const std::size_t pixels = 9;
  EXPECT_NEAR(entropy_loss(prob_map(4, pixels, std::vector<double>(4 * pixels, 0.25))),
              pixels * std::log(4.0), 1e-12);
  std::vector<double> one_hot(4 * pixels, 0.0);
  for (std::size_t p = 0; p < pixels; ++p) one_hot[(p % 4) * pixels + p] = 1.0;
  EXPECT_LE(entropy_loss(prob_map(4, pixels, one_hot)), 1e-10 * pixels);
}

TEST(EntropyLoss, MatchesExtendedPrecisionSum) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 2 + rng() % 7, n = 1 + rng() % 40;
    std::vector<double> v(c * n);
    for (std::size_t p = 0; p < n; ++p) {
      double s = 0;
      for (std::size_t k = 0; k < c; ++k) s += (v[k * n + p] = std::pow(u(rng), 3));
      for (std::size_t k = 0; k < c; ++k) v[k * n + p] /= s;
    }
    long double direct = 0;
    for (double p : v) direct -= p * std::log(std::max<long double>(p, 1e-12L));
    const double got = entropy_loss(prob_map(c, n, v));
    EXPECT_NEAR(got, static_cast<double>(direct), 1e-10 * static_cast<double>(direct));
  }
}

TEST(PseudoLabel, DominantClassAndLowestIndexTieBreak) {
  // Pixel 0: class 2 dominant. Pixel 1: classes 1 and 3 tie.
  const Tensor<double> probs =
      prob_map(4, 2, {0.1, 0.1, 0.2, 0.4, 0.6, 0.1, 0.1, 0.4});
  const Mask m = pseudo_label(probs, 1, 2);
  EXPECT_EQ(m.labels, (std::vector<int>{2, 1}));
}

TEST(PlLoss, IsMeanCrossEntropyAgainstLabels) {
  const Tensor<double> probs = prob_map(2, 3, {0.9, 0.2, 0.5, 0.1, 0.8, 0.5});
  Mask labels(1, 3);
  labels.labels = {0, 1, 1};
  EXPECT_NEAR(pl_loss(probs, labels), -(std::log(0.9) + std::log(0.8) + std::log(0.5)) / 3.0, 1e-15);
  labels.labels = {0, 2, 1};
  EXPECT_THROW(pl_loss(probs, labels), Error);
}

// Instances whose analytic gradient vanishes (every ReLU dead, so the output
// is the uniform stationary point) carry no signal and are redrawn.
void check_twenty_instances(std::uint64_t seed, testing::LossKind kind) {
  std::mt19937_64 rng(seed);
  int checked = 0;
  for (int draws = 0; checked < 20 && draws < 100; ++draws) {
    const auto r = testing::check_network_loss(rng, kind);
    double norm = 0;
    for (double g : r.analytic) norm += g * g;
    if (std::sqrt(norm) < 1e-6) continue;
    EXPECT_LT(r.rel_error, 1e-5) << "draw " << draws;
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(LossGradients, EntropyThroughNetworkMatchesFiniteDifferences) {
  check_twenty_instances(17, testing::LossKind::kEntropy);
}

TEST(LossGradients, PseudoLabelThroughNetworkMatchesFiniteDifferences) {
  check_twenty_instances(18, testing::LossKind::kPseudoLabel);
}

TEST(StepTent, SmallStepLowersEntropyOnMostFrames) {
  const auto frames = deploy_frames(36, 0);
  const auto more = deploy_frames(36, 1);
  std::vector<LabeledFrame> all(frames);
  all.insert(all.end(), more.begin(), more.end());
  StrategyConfig cfg = StrategyConfig::defaults(StrategyKind::kNTent);
  cfg.learning_rate = 1e-2;
  int lowered = 0, total = 0;
  for (int i = 0; i < 100; ++i) {
    const LabeledFrame& f = all[static_cast<std::size_t>(i) % all.size()];
    Image img = f.image;
    if (i >= static_cast<int>(all.size())) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(i));
      img = randomize(img, 2, rng);
    }
    AdaptState<double> s = fresh_state();
    const double before = entropy_loss(predict_probs(*s.theta0, img, BnSetting::use_running()));
    FrameInput in;
    in.image = &img;
    step_tent(s, in, cfg);
    const double after = entropy_loss(predict_probs(s.current, img, BnSetting::use_running()));
    lowered += after <= before;
    ++total;
  }
  EXPECT_GE(lowered, 95) << "of " << total;
}

TEST(StepTent, OnlyBnAffineParametersMove) {
  const auto frames = deploy_frames(5);
  for (StrategyKind k : {StrategyKind::kNTent, StrategyKind::kCTent, StrategyKind::kCTentSr,
                         StrategyKind::kClassRTent, StrategyKind::kOracleRTent}) {
    AdaptState<double> s = fresh_state();
    StrategyConfig cfg = StrategyConfig::defaults(k);
    cfg.adapt_iters = 2;
    for (const auto& f : frames) {
      const SegNet<double> start = s.current;
      adapt_step(s, input(f), cfg);
      EXPECT_TRUE(non_bn_affine_equal(s.current, start)) << strategy_name(k);
    }
    if (k == StrategyKind::kNTent) {
      EXPECT_TRUE(non_bn_affine_equal(s.current, *tiny_model()));
      EXPECT_FALSE(s.current.same_state(*tiny_model()));
    }
  }
}

TEST(GradientSteps, ZeroLearningRateReproducesNoAdaptation) {
  const auto frames = deploy_frames(6);
  for (StrategyKind k : all_strategies()) {
    if (!is_tent(k) && !is_pl(k)) continue;
    StrategyConfig cfg = StrategyConfig::defaults(k);
    cfg.learning_rate = 0.0;
    cfg.adapt_iters = 2;
    AdaptState<double> s = fresh_state();
    for (const auto& f : frames) {
      EXPECT_EQ(adapt_step(s, input(f), cfg).prediction.labels, na_prediction(f.image).labels)
          << strategy_name(k);
    }
    EXPECT_TRUE(s.current.same_state(*tiny_model())) << strategy_name(k);
  }
}

TEST(StepPl, IterationsAlternateLabelingAndUpdating) {
  const auto frames = deploy_frames(3);
  StrategyConfig three = StrategyConfig::defaults(StrategyKind::kCPl);
  three.learning_rate = 5e-3;
  three.adapt_iters = 3;
  StrategyConfig one = three;
  one.adapt_iters = 1;
  AdaptState<double> a = fresh_state(), b = fresh_state();
  for (const auto& f : frames) {
    const Mask pa = step_pl(a, input(f), three).prediction;
    Mask pb;
    for (int i = 0; i < 3; ++i) pb = step_pl(b, input(f), one).prediction;
    EXPECT_EQ(pa.labels, pb.labels);
  }
  EXPECT_TRUE(a.current.same_state(b.current));
  EXPECT_FALSE(a.current.same_state(*tiny_model()));
}

TEST(StepPl, SourceReplayKeepsSourceAccuracy) {
  const auto& src = memory()->frames;
  StrategyConfig cfg = StrategyConfig::defaults(StrategyKind::kCPlSr);
  cfg.sr_weight = 50.0;
  AdaptState<double> s = fresh_state(9);
  double base = 0.0;
  for (const auto& f : src) base += miou_of(*tiny_model(), f);
  base /= static_cast<double>(src.size());
  for (int i = 0; i < 50; ++i) step_pl(s, input(src[static_cast<std::size_t>(i) % src.size()]), cfg);
  double after = 0.0;
  for (const auto& f : src) after += miou_of(s.current, f);
  after /= static_cast<double>(src.size());
  EXPECT_FALSE(s.current.same_state(*tiny_model()));
  EXPECT_LE(std::abs(after - base), 0.02 * base) << base << " -> " << after;
}

TEST(StepPl, UpdatesEveryParameterGroup) {
  AdaptState<double> s = fresh_state();
  StrategyConfig cfg = StrategyConfig::defaults(StrategyKind::kCPl);
  cfg.learning_rate = 1e-3;
  step_pl(s, input(deploy_frames(1)[0]), cfg);
  auto now = s.current.named_parameters();
  auto then = tiny_model()->named_parameters();
  for (std::size_t i = 0; i < now.size(); ++i) {
    const auto a = now[i].second->data();
    const auto b = then[i].second->data();
    EXPECT_FALSE(std::equal(a.begin(), a.end(), b.begin())) << now[i].first;
  }
}

TEST(StepBn, ZeroMomentumMatchesNoAdaptation) {
  const auto frames = deploy_frames(5);
  for (StrategyKind k : {StrategyKind::kNBn, StrategyKind::kCBn}) {
    StrategyConfig cfg = StrategyConfig::defaults(k);
    cfg.bn_momentum = 0.0;
    AdaptState<double> s = fresh_state();
    for (const auto& f : frames) {
      EXPECT_EQ(step_bn(s, input(f), cfg).prediction.labels, na_prediction(f.image).labels);
    }
  }
}

TEST(StepBn, NaiveVariantLeavesStatisticsUntouched) {
  AdaptState<double> s = fresh_state();
  const StrategyConfig cfg = StrategyConfig::defaults(StrategyKind::kNBn);
  for (const auto& f : deploy_frames(4)) step_bn(s, input(f), cfg);
  EXPECT_TRUE(s.current.same_state(*tiny_model()));
}

TEST(StepBn, ContinualStatisticsConvergeGeometrically) {
  // Frames of one domain; the first layer's batch means do not depend on BN.
  const auto frames = deploy_frames(12);
  const double alpha = 0.3;
  StrategyConfig cfg = StrategyConfig::defaults(StrategyKind::kCBn);
  cfg.bn_momentum = alpha;
  AdaptState<double> s = fresh_state();
  const std::size_t channels = s.current.bn(0).running_mean.size();
  std::vector<std::vector<long double>> batch;
  for (const auto& f : frames) batch.push_back(testing::reference_bn_mix(*tiny_model(), f.image, 1.0).mean[0]);
  const std::vector<double> mu0 = s.current.bn(0).running_mean;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    step_bn(s, input(frames[t]), cfg);
    for (std::size_t c = 0; c < channels; ++c) {
      long double target = 0, spread = 0;
      for (std::size_t j = 0; j <= t; ++j) target += batch[j][c];
      target /= static_cast<long double>(t + 1);
      for (std::size_t j = 0; j <= t; ++j) spread = std::max(spread, std::abs(batch[j][c] - target));
      const double bound = std::pow(1.0 - alpha, static_cast<double>(t + 1)) *
                               std::abs(mu0[c] - static_cast<double>(target)) +
                           static_cast<double>(spread) + 1e-9;
      EXPECT_LE(std::abs(s.current.bn(0).running_mean[c] - static_cast<double>(target)), bound);
    }
  }
  // A repeated frame makes the domain mean exact and the decay tight.
  AdaptState<double> r = fresh_state();
  const auto& f = frames[0];
  for (int t = 1; t <= 10; ++t) {
    step_bn(r, input(f), cfg);
    for (std::size_t c = 0; c < channels; ++c) {
      const double target = static_cast<double>(batch[0][c]);
      EXPECT_NEAR(r.current.bn(0).running_mean[c] - target,
                  std::pow(1.0 - alpha, t) * (mu0[c] - target), 1e-9);
    }
  }
}

TEST(ClassReset, WorkedExampleFires) {
  const std::vector<int> theta0{5, 5}, current{4, 3};
  EXPECT_EQ(class_reset_psi(theta0, current), 3.0);
  EXPECT_TRUE(class_reset_decision(theta0, current, 1.0));
  ResetState s;
  s.push(5, 4, 1);
  s.push(5, 3, 1);
  EXPECT_EQ(s.psi(), 3.0);
  EXPECT_FALSE(class_reset_decision(std::vector<int>{4, 6}, std::vector<int>{4, 6}, 1.0));
  EXPECT_THROW(class_reset_psi(std::vector<int>{1}, std::vector<int>{1, 2}), Error);
}

TEST(ClassReset, RollingWindowMatchesDirectSum) {
  std::mt19937_64 rng(21);
  for (int window = 0; window <= 4; ++window) {
    ResetState s;
    std::vector<int> h0, hc;
    for (int i = 0; i < 60; ++i) {
      h0.push_back(static_cast<int>(1 + rng() % 8));
      hc.push_back(static_cast<int>(1 + rng() % 8));
      s.push(h0.back(), hc.back(), window);
      EXPECT_EQ(s.psi(), testing::direct_class_psi(h0, hc, window));
      EXPECT_LE(s.theta0_counts.size(), static_cast<std::size_t>(window) + 1);
    }
  }
}

TEST(ClassReset, UnadaptedModelNeverResets) {
  AdaptState<double> s = fresh_state();
  const StrategyConfig cfg = StrategyConfig::defaults(StrategyKind::kClassRPl);
  for (const auto& f : deploy_frames(4)) {
    double psi = -1;
    EXPECT_FALSE(reset_check(s, input(f), cfg, &psi));
    EXPECT_EQ(psi, 0.0);
  }
}

TEST(ClassReset, FiringRestoresPretrainedModel) {
  AdaptState<double> s = fresh_state();
  StrategyConfig cfg = StrategyConfig::defaults(StrategyKind::kClassRPl);
  cfg.learning_rate = 0.05;
  cfg.reset_threshold = -1.0;  // any psi >= 0 fires
  const auto frames = deploy_frames(3);
  adapt_step(s, input(frames[0]), cfg);
  ASSERT_FALSE(s.current.same_state(*tiny_model()));
  EXPECT_TRUE(reset_check(s, input(frames[1]), cfg));
  EXPECT_TRUE(s.current.same_state(*tiny_model()));
}

TEST(OracleReset, RequiresGroundTruth) {
  AdaptState<double> s = fresh_state();
  const auto f = deploy_frames(1)[0];
  EXPECT_THROW(adapt_step(s, input(f, false), StrategyConfig::defaults(StrategyKind::kOracleRPl)),
               Error);
  EXPECT_THROW(reset_check(s, input(f), StrategyConfig::defaults(StrategyKind::kCPl)), Error);
}

TEST(OracleReset, StartModelScoresTheBetterOfBoth) {
  StrategyConfig cfg = StrategyConfig::defaults(StrategyKind::kOracleRPl);
  cfg.learning_rate = 2e-2;
  StrategyConfig adapt = cfg;
  adapt.kind = StrategyKind::kCPl;
  AdaptState<double> s = fresh_state();
  int resets = 0;
  for (const auto& f : deploy_frames(36)) {
    const double m0 = miou_of(*tiny_model(), f);
    const double mc = miou_of(s.current, f);
    const bool fired = reset_check(s, input(f), cfg);
    EXPECT_EQ(miou_of(s.current, f), std::max(m0, mc));
    if (mc > m0) {
      EXPECT_FALSE(fired);
    }
    resets += fired;
    step_pl(s, input(f), adapt);
  }
  EXPECT_GT(resets, 0);
}

TEST(Style, SelfStyleIsFixedPoint) {
  const auto f = deploy_frames(1)[0];
  const Image out = match_channel_statistics(f.image, f.image);
  for (std::size_t i = 0; i < out.rgb.size(); ++i) EXPECT_NEAR(out.rgb[i], f.image.rgb[i], 1e-12);
}

TEST(Style, OutputTakesStyleChannelMeans) {
  // Mid-range content and a low-contrast style keep clamping inactive.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.3, 0.7), v(0.45, 0.55);
  Image content(10, 12), style(8, 9);
  for (double& x : content.rgb) x = u(rng);
  for (double& x : style.rgb) x = v(rng);
  const Image out = match_channel_statistics(content, style);
  for (std::size_t c = 0; c < 3; ++c) {
    double mo = 0, ms = 0;
    for (std::size_t i = 0; i < out.pixels(); ++i) mo += out.rgb[i * 3 + c];
    for (std::size_t i = 0; i < style.pixels(); ++i) ms += style.rgb[i * 3 + c];
    EXPECT_NEAR(mo / out.pixels(), ms / style.pixels(), 1e-6);
  }
}

TEST(Style, NearestModeFindsExactDuplicate) {
  const auto& frames = memory()->frames;
  for (std::size_t i : {0u, 5u, 11u}) {
    EXPECT_EQ(select_style(frames[i].image, *memory(), StyleMode::kNearest, *tiny_model(), 1), i);
  }
  EXPECT_NEAR(cosine_similarity(memory()->features[3], memory()->features[3]), 1.0, 1e-12);
}

TEST(Style, RandomModeIsSeededAndEmptyMemoryFails) {
  const Image img = deploy_frames(1)[0].image;
  const std::size_t a = select_style(img, *memory(), StyleMode::kRandom, *tiny_model(), 3);
  EXPECT_EQ(select_style(img, *memory(), StyleMode::kRandom, *tiny_model(), 3), a);
  EXPECT_LT(a, memory()->frames.size());
  EXPECT_THROW(select_style(img, SourceMemory{}, StyleMode::kRandom, *tiny_model(), 3), Error);
  auto s = make_adapt_state<double>(tiny_model(), std::make_shared<const SourceMemory>(), 1);
  FrameInput in;
  in.image = &img;
  EXPECT_THROW(adapt_step(s, in, StrategyConfig::defaults(StrategyKind::kNStNn)), Error);
  EXPECT_THROW(adapt_step(s, in, StrategyConfig::defaults(StrategyKind::kCPlSr)), Error);
}

TEST(Invariants, PretrainedSnapshotIsNeverMutated) {
  const SegNet<double> original = *tiny_model();
  const auto frames = deploy_frames(8);
  for (StrategyKind k : all_strategies()) {
    StrategyConfig cfg = StrategyConfig::defaults(k);
    if (is_pl(k)) cfg.learning_rate = 1e-2;
    AdaptState<double> s = fresh_state();
    for (const auto& f : frames) adapt_step(s, input(f), cfg);
    EXPECT_TRUE(s.theta0->same_state(original)) << strategy_name(k);
  }
}

TEST(Invariants, NaiveStrategiesIgnoreFrameOrder) {
  const auto frames = deploy_frames(10);
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(8);
  std::shuffle(order.begin(), order.end(), rng);
  for (StrategyKind k : all_strategies()) {
    if (!is_naive(k)) continue;
    const StrategyConfig cfg = StrategyConfig::defaults(k);
    AdaptState<double> a = fresh_state(), b = fresh_state();
    std::vector<Mask> in_order;
    for (const auto& f : frames) in_order.push_back(adapt_step(a, input(f), cfg).prediction);
    for (std::size_t i : order) {
      EXPECT_EQ(adapt_step(b, input(frames[i]), cfg).prediction.labels, in_order[i].labels)
          << strategy_name(k) << " frame " << i;
    }
  }
}

TEST(Invariants, ContinualPseudoLabelingCarriesState) {
  const auto frames = deploy_frames(36);
  StrategyConfig c = StrategyConfig::defaults(StrategyKind::kCPl);
  c.learning_rate = 1e-2;
  StrategyConfig n = c;
  n.kind = StrategyKind::kNPl;
  bool differs = false;
  for (std::size_t i = 0; i + 1 < frames.size() && !differs; ++i) {
    AdaptState<double> sc = fresh_state(), sn = fresh_state();
    step_pl(sc, input(frames[i]), c);
    step_pl(sn, input(frames[i]), n);
    differs = step_pl(sc, input(frames[i + 1]), c).prediction.labels !=
              step_pl(sn, input(frames[i + 1]), n).prediction.labels;
  }
  EXPECT_TRUE(differs);
}

TEST(Dispatch, KindMismatchIsAConfigError) {
  AdaptState<double> s = fresh_state();
  const auto f = deploy_frames(1)[0];
  EXPECT_THROW(step_tent(s, input(f), StrategyConfig::defaults(StrategyKind::kCPl)), Error);
  EXPECT_THROW(step_pl(s, input(f), StrategyConfig::defaults(StrategyKind::kCBn)), Error);
  EXPECT_THROW(step_bn(s, input(f), StrategyConfig::defaults(StrategyKind::kNA)), Error);
  EXPECT_THROW(make_adapt_state<double>(nullptr, memory(), 1), Error);
}

}  // namespace
}  // namespace oasis

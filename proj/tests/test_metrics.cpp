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
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "oasis/error.hpp"
#include "oasis/metrics.hpp"

namespace oasis {
namespace {

Mask make_mask(std::size_t h, std::size_t w, std::vector<int> labels) {
  Mask m(h, w);
  m.labels = std::move(labels);
  return m;
}

// Random 8x8 masks; every fourth pair restricts gt to a few classes so that
// predicted-only classes are common.
std::pair<Mask, Mask> random_pair(std::mt19937_64& rng, int trial) {
  Mask pred(8, 8), gt(8, 8);
  const int gt_classes = trial % 4 == 0 ? 1 + trial % 3 : 8;
  for (std::size_t i = 0; i < 64; ++i) {
    gt.labels[i] = static_cast<int>(rng() % static_cast<unsigned>(gt_classes));
    pred.labels[i] = rng() % 3 == 0 ? gt.labels[i] : static_cast<int>(rng() % 8);
  }
  return {pred, gt};
}

TEST(FrameMiou, PerfectPredictionScoresOne) {
  const Mask m = make_mask(2, 3, {0, 1, 2, 2, 1, 7});
  EXPECT_EQ(frame_miou(m, m, 8), 1.0);
}

TEST(FrameMiou, DisjointSingleClassScoresZero) {
  EXPECT_EQ(frame_miou(Mask(3, 3, 2), Mask(3, 3, 5), 8), 0.0);
}

TEST(FrameMiou, TwoByTwoExample) {
  const Mask gt = make_mask(2, 2, {0, 0, 1, 1});
  const Mask pred = make_mask(2, 2, {0, 1, 1, 1});
  // IoU_0 = 1/2, IoU_1 = 2/3.
  EXPECT_DOUBLE_EQ(frame_miou(pred, gt, 8), 7.0 / 12.0);
}

TEST(FrameMiou, PredictedOnlyClassesDoNotEnterTheAverage) {
  const Mask gt = make_mask(1, 4, {3, 3, 3, 3});
  const Mask pred = make_mask(1, 4, {3, 3, 6, 6});
  EXPECT_DOUBLE_EQ(frame_miou(pred, gt, 8), 0.5);
}

TEST(FrameMiou, EqualsSetOracleExactly) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [pred, gt] = random_pair(rng, trial);
    EXPECT_EQ(frame_miou(pred, gt, 8), testing::set_miou(pred, gt, 8)) << "trial " << trial;
  }
}

TEST(FrameMiou, InvariantUnderJointLabelPermutation) {
  std::mt19937_64 rng(7);
  std::vector<int> perm(8);
  for (int trial = 0; trial < 200; ++trial) {
    auto [pred, gt] = random_pair(rng, trial);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mask p2 = pred, g2 = gt;
    for (int& v : p2.labels) v = perm[static_cast<std::size_t>(v)];
    for (int& v : g2.labels) v = perm[static_cast<std::size_t>(v)];
    EXPECT_NEAR(frame_miou(p2, g2, 8), frame_miou(pred, gt, 8), 1e-15);
  }
}

TEST(FrameMiou, ShapeMismatchAndOutOfRangeLabelsAreErrors) {
  EXPECT_THROW(frame_miou(Mask(2, 2), Mask(2, 3), 8), Error);
  EXPECT_THROW(frame_miou(Mask(2, 2, 9), Mask(2, 2), 8), Error);
}

TEST(CountClasses, CountsOccupiedClasses) {
  EXPECT_EQ(count_classes(make_mask(1, 5, {0, 0, 4, 7, 4}), 8), 3);
  EXPECT_EQ(count_classes(Mask(2, 2, 1), 8), 1);
}

TEST(ClassOverlap, UnionsCountEachPixelOncePerClass) {
  const Mask gt = make_mask(1, 4, {0, 0, 1, 2});
  const Mask pred = make_mask(1, 4, {0, 1, 1, 1});
  const ClassOverlap o = class_overlap(pred, gt, 3);
  EXPECT_EQ(o.intersection, (std::vector<long>{1, 1, 0}));
  EXPECT_EQ(o.uni, (std::vector<long>{2, 3, 1}));
  EXPECT_EQ(o.gt_pixels, (std::vector<long>{2, 1, 1}));
}

}  // namespace
}  // namespace oasis

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

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "oasis/tape.hpp"

namespace oasis {
namespace {

using testing::random_tensor;

// Direct six-loop cross-correlation with zero padding, in long double.
std::vector<long double> reference_conv(const Tensor<double>& x, const Tensor<double>& w,
                                        const Tensor<double>& b) {
  const std::size_t nb = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const long pad = static_cast<long>(k / 2);
  std::vector<long double> out(nb * co * h * wd);
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < wd; ++xx) {
          long double acc = b[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long sy = static_cast<long>(y + ky) - pad;
                const long sx = static_cast<long>(xx + kx) - pad;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) ||
                    sx >= static_cast<long>(wd))
                  continue;
                acc += static_cast<long double>(w[((o * ci + c) * k + ky) * k + kx]) *
                       x[((n * ci + c) * h + sy) * wd + sx];
              }
          out[((n * co + o) * h + y) * wd + xx] = acc;
        }
  return out;
}

TEST(Conv2d, MatchesDirectLoopOnIrregularShapes) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t k = trial % 3 == 0 ? 1 : (trial % 3 == 1 ? 3 : 5);
    const std::size_t nb = testing::pick(rng, 1, 2), ci = testing::pick(rng, 1, 6);
    const std::size_t co = testing::pick(rng, 1, 19), h = testing::pick(rng, 1, 7);
    const std::size_t w = testing::pick(rng, 1, 21);
    Tensor<double> x = random_tensor(rng, {nb, ci, h, w});
    Tensor<double> wt = random_tensor(rng, {co, ci, k, k});
    Tensor<double> b = random_tensor(rng, {co});
    Tape<double> tape;
    auto out = tape.conv2d(tape.input(x), tape.parameter(wt, false), tape.parameter(b, false));
    const auto ref = reference_conv(x, wt, b);
    const auto got = tape.value(out).data();
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(got[i], static_cast<double>(ref[i]), 1e-12) << "trial " << trial;
    }
  }
}

TEST(Conv2d, SinglePrecisionTracksDouble) {
  std::mt19937_64 rng(5);
  Tensor<double> x = random_tensor(rng, {1, 3, 6, 13});
  Tensor<double> w = random_tensor(rng, {9, 3, 3, 3});
  Tensor<double> b = random_tensor(rng, {9});
  Tensor<float> xf = x.cast<float>(), wf = w.cast<float>(), bf = b.cast<float>();
  Tape<float> tape;
  auto out = tape.conv2d(tape.input(xf), tape.parameter(wf, false), tape.parameter(bf, false));
  const auto ref = reference_conv(x, w, b);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR(tape.value(out)[i], static_cast<double>(ref[i]), 1e-4);
  }
}

TEST(Conv2d, RejectsMismatchedShapes) {
  Tape<double> tape;
  Tensor<double> x({1, 3, 4, 4}), w({2, 4, 3, 3}), b({2}), even({2, 3, 2, 2}), bb({3});
  auto xi = tape.input(x);
  auto expect_shape_error = [](auto&& fn) {
    try {
      fn();
      ADD_FAILURE() << "no error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kShape);
    }
  };
  expect_shape_error([&] { tape.conv2d(xi, tape.parameter(w), tape.parameter(b)); });
  expect_shape_error([&] { tape.conv2d(xi, tape.parameter(even), tape.parameter(b)); });
  Tensor<double> w_ok({2, 3, 3, 3});
  expect_shape_error([&] { tape.conv2d(xi, tape.parameter(w_ok), tape.parameter(bb)); });
  Tensor<double> flat({3, 4});
  expect_shape_error([&] { tape.relu(tape.input(flat)), tape.softmax_channels(tape.input(flat)); });
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const auto cases = testing::primitive_cases();
  const auto& c = cases.at(GetParam());
  std::mt19937_64 rng(1000 + GetParam());
  for (int i = 0; i < 20; ++i) {
    const auto check = c.run(rng);
    EXPECT_LT(check.rel_error, 1e-5) << c.name << " instance " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, testing::primitive_cases().size()),
                         [](const auto& info) {
                           return testing::primitive_cases()[info.param].name;
                         });

TEST(Softmax, ColumnsSumToOneAndSurviveLargeLogits) {
  Tensor<double> x({1, 3, 1, 2}, std::vector<double>{1000, -1000, 0, 0, 999, 1});
  Tape<double> tape;
  const auto& p = tape.value(tape.softmax_channels(tape.input(x)));
  ASSERT_TRUE(p.all_finite());
  EXPECT_NEAR(p[0] + p[2] + p[4], 1.0, 1e-15);
  EXPECT_NEAR(p[1] + p[3] + p[5], 1.0, 1e-15);
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Softmax, RejectsNonFiniteLogits) {
  Tensor<double> x({1, 2, 1, 1}, std::vector<double>{std::numeric_limits<double>::quiet_NaN(), 0});
  Tape<double> tape;
  try {
    tape.softmax_channels(tape.input(x));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

TEST(Entropy, MatchesExtendedPrecisionSum) {
  std::mt19937_64 rng(3);
  Tensor<double> logits = random_tensor(rng, {1, 8, 5, 7}, -4, 4);
  Tape<double> tape;
  auto probs = tape.softmax_channels(tape.input(logits));
  const double h = tape.value(tape.entropy_sum(probs, 1e-12))[0];
  long double ref = 0;
  for (std::size_t px = 0; px < 35; ++px) {
    long double z = 0;
    for (std::size_t c = 0; c < 8; ++c) z += std::exp(static_cast<long double>(logits[c * 35 + px]));
    for (std::size_t c = 0; c < 8; ++c) {
      const long double p = std::exp(static_cast<long double>(logits[c * 35 + px])) / z;
      ref -= p * std::log(p);
    }
  }
  EXPECT_NEAR(h, static_cast<double>(ref), 1e-12);
}

TEST(Entropy, ClampKeepsZeroProbabilitiesFinite) {
  Tensor<double> p({1, 2, 1, 1}, std::vector<double>{0.0, 1.0});
  Tape<double> tape;
  auto v = tape.parameter(p);
  auto h = tape.entropy_sum(v, 1e-12);
  EXPECT_EQ(tape.value(h)[0], 0.0);
  tape.backward(h);
  EXPECT_NEAR(p.grad()[0], -std::log(1e-12), 1e-9);
  EXPECT_NEAR(p.grad()[1], -1.0, 1e-15);
}

TEST(Tape, FrozenParametersReceiveNoGradient) {
  std::mt19937_64 rng(9);
  Tensor<double> x = random_tensor(rng, {1, 2, 3, 3});
  Tensor<double> w = random_tensor(rng, {2, 2, 3, 3}), b = random_tensor(rng, {2});
  Tensor<double> gamma = random_tensor(rng, {2}), beta = random_tensor(rng, {2});
  Tape<double> tape;
  auto h = tape.conv2d(tape.input(x), tape.parameter(w, false), tape.parameter(b, false));
  auto gv = tape.parameter(gamma);
  h = tape.batch_norm_batch(h, gv, tape.parameter(beta), 1e-5);
  tape.backward(tape.sum(tape.relu(h)));
  EXPECT_FALSE(w.has_grad());
  EXPECT_FALSE(b.has_grad());
  EXPECT_TRUE(gamma.has_grad());
  EXPECT_TRUE(beta.has_grad());
  EXPECT_TRUE(tape.requires_grad(gv));
}

TEST(Tape, BackwardWithoutTrainableInputsIsAStateError) {
  Tensor<double> x({1, 1, 1, 2}, 1.0);
  Tape<double> tape;
  auto s = tape.sum(tape.input(x));
  try {
    tape.backward(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kState);
  }
}

TEST(Tape, BackwardRejectsEmptyTapeAndNonScalarLoss) {
  Tape<double> empty;
  Tape<double> other;
  Tensor<double> x({1, 1, 1, 2}, 1.0);
  auto v = other.parameter(x);
  try {
    empty.backward(v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kState);
  }
  try {
    other.backward(other.relu(v));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(Tape, VisitsNodesInReverseRecordingOrder) {
  Tensor<double> x({1, 2, 1, 1}, std::vector<double>{0.5, -0.25});
  Tape<double> tape;
  auto a = tape.parameter(x);
  auto b = tape.scale(a, 2.0);
  auto c = tape.add(a, b);
  auto loss = tape.sum(c);
  tape.backward(loss);
  const std::vector<std::size_t> expected{loss.index(), c.index(), b.index(), a.index()};
  EXPECT_EQ(tape.last_backward_order(), expected);
  EXPECT_EQ(tape.op_name(c), "add");
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}

TEST(Tape, GradientsAccumulateAcrossPasses) {
  Tensor<double> x({1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  for (int pass = 0; pass < 2; ++pass) {
    Tape<double> tape;
    tape.backward(tape.sum(tape.parameter(x)));
  }
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 2.0);
}

TEST(ChannelStats, MatchesTwoPassLongDouble) {
  std::mt19937_64 rng(2);
  Tensor<double> x = random_tensor(rng, {2, 3, 4, 5}, -3, 5);
  const auto st = channel_stats(x);
  for (std::size_t c = 0; c < 3; ++c) {
    long double s = 0, sq = 0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 20; ++i) s += x[(b * 3 + c) * 20 + i];
    const long double m = s / 40;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 20; ++i) {
        const long double d = x[(b * 3 + c) * 20 + i] - m;
        sq += d * d;
      }
    EXPECT_NEAR(st.mean[c], static_cast<double>(m), 1e-14);
    EXPECT_NEAR(st.var[c], static_cast<double>(sq / 40), 1e-13);
  }
}

}  // namespace
}  // namespace oasis

// Copyright 2026 The ACNN Triage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "acnn/autodiff.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "acnn/grad_check.hpp"
#include "acnn/random.hpp"

namespace acnn {
namespace {

Tensor RandomTensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.Uniform(-scale, scale);
  return t;
}

template <typename Fn>
void ExpectError(ErrorCode code, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << ErrorCodeName(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

TEST(ConvValid, OutputLengthIsWindowCount) {
  Tensor input({4, 3}, 0.5);
  Tensor filter({2, 3}, 0.1);
  EXPECT_EQ(ConvValid(input, filter, 0.0).size(), 3u);
}

TEST(ConvValid, ZeroInputZeroBiasGivesZeros) {
  Tensor out = ConvValid(Tensor({5, 2}), Tensor({3, 2}, 1.7), 0.0);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(ConvValid, HandEvaluatedRelu) {
  Tensor input = Tensor::Matrix(3, 1, {1, 2, 3});
  Tensor filter = Tensor::Matrix(1, 1, {2});
  Tensor out = ConvValid(input, filter, -3.0);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 1.0);
  EXPECT_EQ(out[2], 3.0);
}

TEST(ConvValid, Errors) {
  ExpectError(ErrorCode::kInvalidShape,
              [] { ConvValid(Tensor({4, 3}), Tensor({2, 2}), 0.0); });
  ExpectError(ErrorCode::kWindowTooLarge,
              [] { ConvValid(Tensor({2, 3}), Tensor({3, 3}), 0.0); });
}

TEST(ConvValid, LengthPropertyOverRandomShapes) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.Below(20);
    const std::size_t m = 1 + rng.Below(len);
    const std::size_t k = 1 + rng.Below(6);
    Tensor out = ConvValid(RandomTensor(rng, {len, k}),
                           RandomTensor(rng, {m, k}), rng.Uniform(-1, 1));
    EXPECT_EQ(out.size(), len - m + 1);
  }
}

TEST(Softmax, UniformForEqualLogits) {
  std::vector<double> p = Softmax(std::vector<double>{0, 0, 0});
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  std::vector<double> p = Softmax(std::vector<double>{1000, 1000});
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(Softmax, ClosedForm) {
  std::vector<double> p = Softmax(std::vector<double>{std::log(1.0), std::log(3.0)});
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, EmptyInputIsInvalidShape) {
  ExpectError(ErrorCode::kInvalidShape,
              [] { Softmax(std::span<const double>()); });
}

TEST(Softmax, SimplexAndShiftInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(1 + rng.Below(30));
    for (double& x : v) x = rng.Uniform(-50, 50);
    std::vector<double> p = Softmax(v);
    double total = 0.0;
    for (double x : p) {
      EXPECT_GT(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    const double c = rng.Uniform(-100, 100);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += c;
    std::vector<double> q = Softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(CrossEntropy, Examples) {
  EXPECT_EQ(CrossEntropy(std::vector<double>{1, 0, 0}, 0), 0.0);
  EXPECT_NEAR(CrossEntropy(std::vector<double>{0.5, 0.5}, 1), 0.6931471805599453,
              1e-15);
  const double clamped = CrossEntropy(std::vector<double>{0.0, 1.0}, 0);
  EXPECT_TRUE(std::isfinite(clamped));
  EXPECT_NEAR(clamped, 27.631021115928547, 1e-9);
  ExpectError(ErrorCode::kIndex,
              [] { CrossEntropy(std::vector<double>{0.5, 0.5}, 2); });
}

TEST(Backward, SumGivesOnes) {
  Tensor x({2, 3}, 0.7);
  Tape tape;
  Backward(Sum(tape.Watch(x)));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, ReluGate) {
  Tensor x = Tensor::Vector({-1.0, 2.0});
  Tape tape;
  Backward(Sum(Relu(tape.Watch(x))));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Backward, DetachedAndConsumedTapes) {
  ExpectError(ErrorCode::kNoTape, [] { Backward(Var()); });
  Tensor x({3}, 1.0);
  Tape tape;
  Var loss = Sum(tape.Watch(x));
  tape.Backward(loss);
  ExpectError(ErrorCode::kNoTape, [&] { tape.Backward(loss); });
  ExpectError(ErrorCode::kInvalidShape, [] {
    Tensor y({3}, 1.0);
    Tape t;
    t.Backward(t.Watch(y));
  });
}

TEST(Backward, OperandsFromDifferentTapesRejected) {
  Tensor a({2}, 1.0), b({2}, 2.0);
  Tape t1, t2;
  Var va = t1.Watch(a);
  Var vb = t2.Watch(b);
  ExpectError(ErrorCode::kNoTape, [&] { Add(va, vb); });
}

// Three-layer tanh/relu network; loss = cross-entropy of softmax output.
Var ThreeLayerLoss(Tape&, std::span<const Var> p, const Tensor& input) {
  Var x = p[0].tape()->Constant(input);
  Var h1 = Tanh(AddBias(VecMat(x, p[0]), p[1]));
  Var h2 = Relu(AddBias(VecMat(h1, p[2]), p[3]));
  Var logits = AddBias(VecMat(h2, p[4]), p[5]);
  return CrossEntropy(Softmax(logits), 1);
}

// Independent central-difference oracle: perturbs each coordinate and
// re-evaluates the forward value only.
std::vector<double> CentralDifferences(
    const std::function<double(const std::vector<Tensor>&)>& f,
    std::vector<Tensor> params, double eps) {
  std::vector<double> out;
  for (auto& p : params) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double saved = p[j];
      p[j] = saved + eps;
      const double hi = f(params);
      p[j] = saved - eps;
      const double lo = f(params);
      p[j] = saved;
      out.push_back((hi - lo) / (2 * eps));
    }
  }
  return out;
}

TEST(Backward, ThreeLayerMlpMatchesFiniteDifferences) {
  Rng rng(2024);
  const Tensor input = RandomTensor(rng, {4});
  std::vector<Tensor> params = {
      RandomTensor(rng, {4, 5}), RandomTensor(rng, {5}),
      RandomTensor(rng, {5, 6}), RandomTensor(rng, {6}, 0.1),
      RandomTensor(rng, {6, 3}), RandomTensor(rng, {3})};
  // Shift hidden-2 biases away from zero so no relu sits near its kink.
  for (double& b : params[3].data()) b += 0.5;

  auto forward = [&](const std::vector<Tensor>& ps) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : ps) leaves.push_back(tape.Constant(p));
    return ThreeLayerLoss(tape, leaves, input).value().item();
  };
  const std::vector<double> numeric = CentralDifferences(forward, params, 1e-5);

  Tape tape;
  std::vector<Var> leaves;
  for (Tensor& p : params) leaves.push_back(tape.Watch(p));
  tape.Backward(ThreeLayerLoss(tape, leaves, input));

  std::size_t flat = 0;
  double worst = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) {
      const double n = numeric[flat++];
      worst = std::max(worst, std::abs(g - n) / std::max({1.0, std::abs(g), std::abs(n)}));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Backward, LinearityOverSummedLosses) {
  Rng rng(5);
  Tensor w = RandomTensor(rng, {3, 4});
  Tensor x = RandomTensor(rng, {3});
  auto loss_a = [&](Tape& t, Var wv) { return Sum(Tanh(VecMat(t.Constant(x), wv))); };
  auto loss_b = [&](Tape&, Var wv) { return Sum(Mul(wv, wv)); };

  Tensor wa = w, wb = w, wab = w;
  { Tape t; t.Backward(loss_a(t, t.Watch(wa))); }
  { Tape t; t.Backward(loss_b(t, t.Watch(wb))); }
  {
    Tape t;
    Var v = t.Watch(wab);
    t.Backward(Add(loss_a(t, v), loss_b(t, v)));
  }
  for (std::size_t i = 0; i < w.size(); ++i)
    EXPECT_NEAR(wab.grad()[i], wa.grad()[i] + wb.grad()[i], 1e-14);
}

TEST(Backward, BitwiseDeterministic) {
  auto run = [] {
    Rng rng(77);
    Tensor emb = RandomTensor(rng, {10, 4});
    Tensor filt = RandomTensor(rng, {2, 4, 3});
    Tensor bias = RandomTensor(rng, {3});
    Tape tape;
    std::vector<std::size_t> ids = {1, 4, 4, 9, 0};
    Var e = GatherRows(tape.Watch(emb), ids);
    Var v = NgramConv(e, tape.Watch(filt), tape.Watch(bias));
    Var s = MaxRows(v);
    tape.Backward(Sum(Mul(s, s)));
    return std::vector<Tensor>{emb.GradTensor(), filt.GradTensor(), bias.GradTensor(), s.value()};
  };
  const auto a = run();
  const auto b = run();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i] == b[i]);
}

TEST(GatherRows, GradientFlowsOnlyIntoLookedUpRows) {
  Tensor table({6, 2}, 0.3);
  Tape tape;
  std::vector<std::size_t> ids = {2, 4, 2};
  tape.Backward(Sum(GatherRows(tape.Watch(table), ids)));
  for (std::size_t r = 0; r < 6; ++r) {
    const double expected = r == 2 ? 2.0 : (r == 4 ? 1.0 : 0.0);
    EXPECT_EQ(table.grad()[r * 2], expected);
    EXPECT_EQ(table.grad()[r * 2 + 1], expected);
  }
  ExpectError(ErrorCode::kIndex, [&] {
    Tape t;
    std::vector<std::size_t> bad = {6};
    GatherRows(t.Watch(table), bad);
  });
}

TEST(GradCheck, QuadraticFormIsExact) {
  Rng rng(9);
  Tensor a = RandomTensor(rng, {4, 4});
  Tensor x = RandomTensor(rng, {4});
  // f(x) = x^T A x
  TapeFunction f = [&a](Tape& t, std::span<const Var> p) {
    Var ax = MatVec(t.Constant(a), p[0]);
    return Sum(Mul(p[0], ax));
  };
  GradCheckReport report = GradCheck(f, {&x}, 1e-5);
  EXPECT_EQ(report.checked, 4u);
  EXPECT_TRUE(report.excluded.empty());
  EXPECT_LT(report.max_relative_error, 1e-8);
}

TEST(GradCheck, ReluKinkIsExcluded) {
  Tensor x = Tensor::Vector({0.0, 1.5, -2.0});
  TapeFunction f = [](Tape&, std::span<const Var> p) { return Sum(Relu(p[0])); };
  GradCheckReport report = GradCheck(f, {&x}, 1e-5);
  ASSERT_EQ(report.excluded.size(), 1u);
  EXPECT_EQ(report.excluded[0], 0u);
  EXPECT_EQ(report.checked, 2u);
  EXPECT_LT(report.max_relative_error, 1e-8);
}

// Composite expressions over every provided op, away from kinks.
TEST(GradCheck, CompositeExpressionsProperty) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed + 100);
    const std::size_t len = 3 + rng.Below(4), k = 2 + rng.Below(3);
    const std::size_t m = 1 + rng.Below(3), f = 2 + rng.Below(3);
    Tensor emb = RandomTensor(rng, {7, k});
    Tensor filt = RandomTensor(rng, {m, k, f});
    Tensor bias = RandomTensor(rng, {f});
    Tensor attn_w = RandomTensor(rng, {f, 3});
    Tensor attn_b = RandomTensor(rng, {3});
    Tensor ctx = RandomTensor(rng, {3});
    Tensor single = RandomTensor(rng, {m, k});
    Tensor single_b = Tensor::Scalar(0.4);
    std::vector<std::size_t> ids(len);
    for (auto& id : ids) id = rng.Below(7);
    Tensor mask({f});
    for (double& v : mask.data()) v = rng.Bernoulli(0.5) ? 2.0 : 0.0;

    TapeFunction fn = [&](Tape& t, std::span<const Var> p) {
      Var x = GatherRows(p[0], ids);
      Var v = NgramConv(x, p[1], p[2]);
      Var u = Tanh(AddBias(MatMul(v, p[3]), p[4]));
      Var alpha = Softmax(MatVec(u, p[5]));
      Var s = WeightedRowSum(v, alpha);
      Var c = ConvValid(x, p[6], p[7]);
      Var joined = Concat({ApplyMask(s, mask), MaxRows(v), c, Scale(s, 0.5)});
      Var probs = Softmax(joined);
      (void)t;
      return CrossEntropy(probs, 0);
    };
    GradCheckReport report = GradCheck(
        fn, {&emb, &filt, &bias, &attn_w, &attn_b, &ctx, &single, &single_b}, 1e-5);
    EXPECT_GT(report.checked, 0u);
    EXPECT_LT(report.max_relative_error, 1e-4) << "seed " << seed;
  }
}

}  // namespace
}  // namespace acnn

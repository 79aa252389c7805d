#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>

#include "lsd/autodiff.hpp"
#include "lsd/error.hpp"
#include "lsd/optim.hpp"
#include "lsd/verify/gradcheck.hpp"

using namespace lsd;
using namespace lsd::ad;

TEST(Tensor, ShapesAndAccess) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(m.reshaped({3, 2}).at(2, 1), 6.0);
  EXPECT_THROW(m.reshaped({4, 2}), ValidationError);
  EXPECT_TRUE(m.all_finite());
}

TEST(Ops, MatmulByIdentity) {
  Tape t;
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Var out = matmul(t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})), t.constant(a));
  EXPECT_EQ(out.value(), a);
}

TEST(Ops, MatmulShapeMismatchNamesShapes) {
  Tape t;
  try {
    matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3})));
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("2"), std::string::npos);
  }
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Tape t;
  const Var p = softmax(t.constant(Tensor({1, 3})));
  for (double v : p.value().values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Ops, SoftmaxIsStableForLargeLogits) {
  Tape t;
  const Var p = softmax(t.constant(Tensor::matrix(1, 3, {1000, 999, -1000})));
  EXPECT_TRUE(p.value().all_finite());
  EXPECT_NEAR(p.value()[0] + p.value()[1] + p.value()[2], 1.0, 1e-15);
}

TEST(Ops, ConfidentCrossEntropyIsNearZero) {
  Tape t;
  const std::vector<int> labels{0};
  const Var loss = cross_entropy(t.constant(Tensor::matrix(1, 3, {1000, 0, 0})), labels);
  EXPECT_LE(loss.value().item(), 1e-6);
  EXPECT_GE(loss.value().item(), 0.0);
}

TEST(Ops, UniformCrossEntropyIsLogC) {
  Tape t;
  const std::vector<int> labels{1, 3};
  const Var loss = cross_entropy(t.constant(Tensor({2, 4})), labels);
  EXPECT_NEAR(loss.value().item(), std::log(4.0), 1e-15);
}

TEST(Ops, CrossEntropyRejectsBadLabel) {
  Tape t;
  const std::vector<int> labels{5};
  EXPECT_THROW(cross_entropy(t.constant(Tensor({1, 3})), labels), ValidationError);
}

TEST(Ops, GroupMaxAndSum) {
  Tape t;
  const Var a = t.constant(Tensor::matrix(4, 2, {1, 5, 3, 2, -1, 0, -4, 7}));
  EXPECT_EQ(group_max(a, 2).value(), Tensor::matrix(2, 2, {3, 5, -1, 7}));
  EXPECT_EQ(group_sum(a, 2).value(), Tensor::matrix(2, 2, {4, 7, -5, 7}));
}

TEST(Ops, InverseTimesMatrixIsIdentity) {
  Tape t;
  const Var a = t.constant(Tensor::matrix(3, 3, {4, 1, 0, 1, 3, 1, 0, 1, 2}));
  const Tensor prod = matmul(inverse(a), a).value();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(prod.at(r, c), r == c ? 1.0 : 0.0, 1e-14);
}

TEST(Ops, BatchNormTrainNormalizesAndUpdatesStats) {
  Tape t;
  BatchNormStats stats(1);
  const Var x = t.constant(Tensor::matrix(4, 1, {1, 2, 3, 4}));
  const Var y = batchnorm(x, t.constant(Tensor({1}, 1.0)), t.constant(Tensor({1}, 0.0)), stats,
                          BnMode::Train);
  double mean = 0.0;
  for (double v : y.value().values()) mean += v / 4;
  EXPECT_NEAR(mean, 0.0, 1e-14);
  EXPECT_NEAR(stats.running_mean[0], 0.1 * 2.5, 1e-14);
}

TEST(Tape, GradientOfSharedInputAccumulates) {
  Tape t;
  const Var x = t.variable(Tensor::vector({3.0}));
  const Var y = sum_all(add(mul(x, x), x));
  t.backward(y);
  EXPECT_EQ(x.grad()[0], 7.0);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape t;
  const Var c = t.constant(Tensor::vector({1.0, 2.0}));
  const Var x = t.variable(Tensor::vector({0.5, 0.5}));
  t.backward(sum_all(mul(c, x)));
  EXPECT_FALSE(t.needs_grad(c));
  EXPECT_EQ(x.grad(), Tensor::vector({1.0, 2.0}));
}

TEST(GradCheck, EveryPrimitivePasses) {
  for (const verify::GradCheck& g : verify::primitive_checks(5, 17)) {
    EXPECT_TRUE(g.passed()) << g.name << " error " << g.max_error;
    EXPECT_EQ(g.tolerance, verify::kPrimitiveTolerance);
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  // exp recorded with a deliberately wrong backward.
  const verify::ScalarFn bad = [](const std::vector<Var>& in) {
    Tape& t = *in[0].tape();
    Tensor value = in[0].value();
    for (double& v : value.values()) v = std::exp(v);
    const Var out = t.record("bad_exp", value, {in[0]},
                             [in](Tape& tape, const Tensor& up, const Tensor&) {
                               double* g = tape.grad_data(in[0]);
                               if (g == nullptr) return;
                               for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
                             });
    return sum_all(out);
  };
  const verify::InputSampler sample = [](std::mt19937_64& rng) {
    return std::vector<Tensor>{Tensor::uniform({3}, 0.5, 1.0, rng)};
  };
  EXPECT_FALSE(verify::check_gradient("bad", bad, sample, 3, 1, 1e-5).passed());
}

TEST(Adam, ZeroGradientLeavesParams) {
  ParamMap p{{"w", Tensor::vector({1.0, -2.0})}};
  const ParamMap before = p;
  ParamMap g{{"w", Tensor::vector({0.0, 0.0})}};
  AdamState s;
  adam_step(p, g, s);
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamMap p{{"w", Tensor::vector({0.0})}};
  ParamMap g{{"w", Tensor::vector({1.0})}};
  AdamState s;
  s.config.lr = 0.01;
  adam_step(p, g, s);
  EXPECT_NEAR(p["w"][0], -0.01, 1e-9);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, IdenticalParamsStayIdentical) {
  ParamMap p{{"a", Tensor::vector({0.3, 0.3})}, {"b", Tensor::vector({0.3, 0.3})}};
  AdamState s;
  for (int i = 0; i < 10; ++i) {
    ParamMap g{{"a", Tensor::vector({0.1 * i, 0.1 * i})}, {"b", Tensor::vector({0.1 * i, 0.1 * i})}};
    adam_step(p, g, s);
  }
  EXPECT_EQ(p["a"], p["b"]);
  EXPECT_EQ(p["a"][0], p["a"][1]);
}

TEST(Adam, NonFiniteGradientThrowsWithoutChanges) {
  ParamMap p{{"a", Tensor::vector({1.0})}, {"z", Tensor::vector({2.0})}};
  const ParamMap before = p;
  ParamMap g{{"a", Tensor::vector({1.0})}, {"z", Tensor::vector({std::nan("")})}};
  AdamState s;
  try {
    adam_step(p, g, s);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("z"), std::string::npos);
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 0);
}

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint c;
  c.spec_hash = 0x1234abcdULL;
  c.step = 42;
  c.tensors["layer.w"] = Tensor::matrix(2, 2, {0.1, std::numbers::pi, -1e-300, 5e300});
  c.tensors["s"] = Tensor::scalar(7.0);
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.spec_hash, c.spec_hash);
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.tensors, c.tensors);
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const auto path = std::filesystem::temp_directory_path() / "lsd_ckpt_test.ckpt";
  save_checkpoint(c, path);
  EXPECT_EQ(load_checkpoint(path).tensors, c.tensors);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsDamagedBytes) {
  Checkpoint c;
  c.tensors["w"] = Tensor::vector({1.0, 2.0});
  std::string bytes = encode_checkpoint(c);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), ValidationError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ValidationError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), IoError);
}

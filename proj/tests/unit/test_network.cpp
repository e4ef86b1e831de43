#include <gtest/gtest.h>

#include <cmath>

#include "bpseg/checkpoint.hpp"
#include "bpseg/network.hpp"
#include "support.hpp"

namespace bpseg {
namespace {

NetworkConfig tiny() {
  NetworkConfig c;
  c.base_channels = 2;
  c.depth = 2;
  c.seed = 3;
  return c;
}

template <typename T>
Tensor<T> random_input(int n, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t(n, 1, h, w);
  for (auto& v : t.data) v = static_cast<T>(uniform_below(rng, 256)) / T(255);
  return t;
}

TEST(NetworkConfig, Validation) {
  NetworkConfig c;
  EXPECT_NO_THROW(c.validate());
  c.depth = 1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.base_channels = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  EXPECT_NO_THROW(c.check_input(224, 224));
  try {
    c.check_input(224, 200);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(Model, HandCountedParameters) {
  EXPECT_EQ(trainable_parameter_count(tiny()), 454u);
  EXPECT_EQ(build_model<float>(tiny()).trainable_count(), 454u);
}

TEST(Model, ClosedFormMatchesBuiltModel) {
  for (int depth : {2, 3, 5}) {
    for (int base : {1, 4, 16}) {
      NetworkConfig c;
      c.depth = depth;
      c.base_channels = base;
      EXPECT_EQ(build_model<float>(c).trainable_count(), trainable_parameter_count(c)) << depth << ' ' << base;
    }
  }
}

TEST(Model, InitIsSeededAndBounded) {
  const auto a = build_model<float>(tiny());
  const auto b = build_model<float>(tiny());
  EXPECT_TRUE(a == b);
  NetworkConfig other = tiny();
  other.seed = 4;
  EXPECT_FALSE(a == build_model<float>(other));
  const auto& w = a["enc1.conv1.weight"];
  const float bound = std::sqrt(6.0f / (2 * 9));
  for (float v : w.value) EXPECT_LE(std::abs(v), bound);
  EXPECT_FALSE(a["enc0.bn1.running_mean"].trainable);
}

TEST(Forward, ShapeAndCounter) {
  auto params = build_model<float>(tiny());
  Network<float> net(params);
  const auto before = forward_pass_count();
  const Tensor<float>& out = net.forward(random_input<float>(3, 8, 12, 1), Mode::kTrain);
  EXPECT_EQ(forward_pass_count(), before + 1);
  EXPECT_EQ(out.n, 3);
  EXPECT_EQ(out.c, 1);
  EXPECT_EQ(out.h, 8);
  EXPECT_EQ(out.w, 12);
  EXPECT_THROW(net.forward(random_input<float>(1, 7, 8, 1), Mode::kTrain), Error);
}

TEST(Forward, InferenceIsPerImage) {
  NetworkConfig c = tiny();
  c.depth = 3;
  const auto params = build_model<float>(c);
  const auto both = random_input<float>(2, 16, 16, 5);
  Tensor<float> second(1, 1, 16, 16);
  std::copy(both.image(1), both.image(1) + both.image_stride(), second.data.begin());
  const Tensor<float> a = forward(params, both);
  const Tensor<float> b = forward(params, second);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(a.image(1)[i], b.data[i], 1e-5);
}

TEST(Forward, TrainModeUpdatesRunningStatistics) {
  auto params = build_model<float>(tiny());
  const auto before = params["enc0.bn1.running_mean"].value;
  Network<float> net(params);
  net.forward(random_input<float>(2, 8, 8, 2), Mode::kTrain);
  EXPECT_NE(params["enc0.bn1.running_mean"].value, before);
  const auto frozen = params["enc0.bn1.running_mean"].value;
  net.forward(random_input<float>(2, 8, 8, 2), Mode::kInference);
  EXPECT_EQ(params["enc0.bn1.running_mean"].value, frozen);
}

TEST(AttentionGate, MatchesFormula) {
  Tensor<double> x(1, 2, 1, 2);
  Tensor<double> g(1, 2, 1, 2);
  x.data = {1.0, -2.0, 0.5, 3.0};
  g.data = {0.2, 0.4, -1.0, 1.0};
  const double wx[] = {0.3, -0.7};
  const double wg[] = {1.1, 0.5};
  const double b[] = {0.05};
  const double psi[] = {-1.3};
  const GateWeights<double> w{2, 1, wx, wg, b, psi, 0.2};
  const GateOutput<double> out = attention_gate(x, g, w);
  for (int p = 0; p < 2; ++p) {
    const double x0 = x.data[static_cast<std::size_t>(p)], x1 = x.data[static_cast<std::size_t>(2 + p)];
    const double g0 = g.data[static_cast<std::size_t>(p)], g1 = g.data[static_cast<std::size_t>(2 + p)];
    const double q = std::max(0.0, 0.3 * x0 - 0.7 * x1 + 1.1 * g0 + 0.5 * g1 + 0.05);
    const double alpha = 1.0 / (1.0 + std::exp(-(-1.3 * q + 0.2)));
    EXPECT_NEAR(out.alpha.data[static_cast<std::size_t>(p)], alpha, 1e-12);
    EXPECT_NEAR(out.gated.data[static_cast<std::size_t>(p)], alpha * x0, 1e-12);
    EXPECT_NEAR(out.gated.data[static_cast<std::size_t>(2 + p)], alpha * x1, 1e-12);
  }
}

TEST(Backward, MatchesFiniteDifferences) {
  NetworkConfig c = tiny();
  c.depth = 3;
  auto params = build_model<double>(c);
  const auto input = random_input<double>(2, 8, 8, 9);
  Rng rng(21);
  Tensor<double> weight(2, 1, 8, 8);
  for (auto& v : weight.data) v = static_cast<double>(uniform_below(rng, 2001)) / 1000.0 - 1.0;
  auto objective = [&](ModelParams<double>& p) {
    Network<double> net(p);
    const Tensor<double>& out = net.forward(input, Mode::kTrain);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += weight.data[i] * out.data[i];
    return s;
  };
  {
    Network<double> net(params);
    net.forward(input, Mode::kTrain);
    params.zero_grad();
    net.backward(weight);
  }
  int checked = 0;
  for (std::size_t e = 0; e < params.entries.size(); ++e) {
    if (!params.entries[e].trainable) continue;
    for (std::size_t k : {std::size_t{0}, params.entries[e].numel() - 1}) {
      auto p = params;
      p.entries[e].value[k] += 1e-6;
      const double up = objective(p);
      p.entries[e].value[k] -= 2e-6;
      const double down = objective(p);
      const double fd = (up - down) / 2e-6;
      const double an = params.entries[e].grad[k];
      EXPECT_NEAR(an, fd, 1e-6 + 1e-4 * std::max(std::abs(an), std::abs(fd))) << params.entries[e].name << '[' << k << ']';
      ++checked;
    }
  }
  EXPECT_GT(checked, 40);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  auto params = build_model<float>(tiny());
  params["head.bias"].value[0] = 0.25f;
  const Bytes bytes = encode_checkpoint(params);
  EXPECT_TRUE(decode_checkpoint(bytes) == params);
  Bytes cut(bytes.begin(), bytes.end() - 3);
  EXPECT_THROW(decode_checkpoint(cut), Error);
  Bytes tail = bytes;
  tail.push_back(0);
  EXPECT_THROW(decode_checkpoint(tail), Error);
  Bytes magic = bytes;
  magic[0] = 'X';
  try {
    decode_checkpoint(magic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
  }
}

}  // namespace
}  // namespace bpseg

#include <doctest.h>

#include <random>

#include "hprune/conv.hpp"
#include "hprune/error.hpp"
#include "hprune/reference.hpp"
#include "hprune/tensor.hpp"
#include "hprune/verify.hpp"

using namespace hprune;

TEST_CASE("tensor construction validates shape and length") {
  CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.plane(1).size() == 3);
  CHECK(l2_norm(t) == doctest::Approx(std::sqrt(6 * 2.25)));
}

TEST_CASE("dataset stacks and unstacks") {
  std::mt19937_64 rng(1);
  Dataset d;
  for (int i = 0; i < 3; ++i) d.examples.push_back(verify::random_tensor(rng, {2, 4, 5}));
  const Tensor batch = stack(d);
  CHECK(batch.shape == std::vector<std::size_t>{3, 2, 4, 5});
  CHECK(unstack(batch).examples == d.examples);
  d.examples.push_back(Tensor({2, 4, 4}));
  CHECK_THROWS_AS(d.validate(), DimensionError);
  CHECK_THROWS_AS(Dataset{}.validate(), InvalidArgument);
}

TEST_CASE("1x1 identity kernel reproduces its input") {
  std::mt19937_64 rng(2);
  const Tensor x = verify::random_tensor(rng, {3, 5, 4});
  ConvLayer l(3, 3, 1, Activation::Identity);
  for (std::size_t c = 0; c < 3; ++c) l.weight(c, c, 0, 0) = 1.0;
  CHECK(conv_forward(l, x) == x);
}

TEST_CASE("3x3 same padding on a hand-checked input") {
  // All-ones 3x3 kernel sums each pixel's neighbourhood.
  Tensor x({1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  ConvLayer l(1, 1, 3, Activation::Identity);
  std::fill(l.weights.begin(), l.weights.end(), 1.0);
  const Tensor y = conv_forward(l, x);
  CHECK(y.data == std::vector<double>{12, 21, 16, 27, 45, 33, 24, 39, 28});
}

TEST_CASE("relu zeroes negatives only") {
  Tensor t({1, 1, 4}, std::vector<double>{-1, 0, 2, -0.5});
  apply_activation(Activation::ReLU, t);
  CHECK(t.data == std::vector<double>{0, 0, 2, 0});
  CHECK(parse_activation("identity") == Activation::Identity);
  CHECK_THROWS_AS(parse_activation("tanh"), InvalidArgument);
}

TEST_CASE("parallel conv matches the serial reference on random layers") {
  for (std::uint64_t t = 0; t < 40; ++t) {
    auto rng = verify::trial_rng(77, t);
    std::uniform_int_distribution<std::size_t> ch(1, 6), side(1, 9), coin(0, 1);
    const std::size_t m = ch(rng), n = ch(rng), k = coin(rng) ? 3 : (coin(rng) ? 5 : 1);
    const ConvLayer layer = verify::random_layer(rng, m, n, k, Activation::ReLU, coin(rng));
    const Tensor x = verify::random_tensor(rng, {m, side(rng), side(rng)});
    const Tensor fast = conv_forward(layer, x);
    const Tensor slow = reference::conv_forward(layer, x);
    CHECK(max_abs_difference(fast, slow) <= 1e-12 * std::max(1.0, max_abs(slow)));
  }
}

TEST_CASE("mix_channels applies Z_k = sum_j Y_j g(j,k)") {
  Tensor y({2, 1, 2}, std::vector<double>{1, 2, 3, 4});
  Eigen::MatrixXd g(2, 3);
  g << 1, 0, 2,
       0, 1, -1;
  const Tensor z = mix_channels(y, g);
  CHECK(z.data == std::vector<double>{1, 2, 3, 4, -1, 0});
}

TEST_CASE("network validation catches a broken chain") {
  Network net;
  net.layers.emplace_back(3, 4, 3);
  net.layers.emplace_back(5, 2, 3);
  CHECK_THROWS_AS(net.validate(), DimensionError);
  net.layers[1] = ConvLayer(4, 2, 3);
  CHECK_NOTHROW(net.validate());
  net.layers[0].comp = Eigen::MatrixXd::Identity(4, 6);
  CHECK_THROWS_AS(net.validate(), DimensionError);
}

TEST_CASE("forward_all_layers ends with forward") {
  std::mt19937_64 rng(3);
  Network net;
  net.layers.push_back(verify::random_layer(rng, 2, 4, 3, Activation::ReLU, false));
  net.layers.push_back(verify::random_layer(rng, 4, 3, 1, Activation::Identity, true));
  const Tensor x = verify::random_tensor(rng, {2, 6, 6});
  const auto all = forward_all_layers(net, x);
  REQUIRE(all.size() == 2);
  CHECK(all.back() == forward(net, x));
  CHECK(max_abs_difference(all.back(), reference::forward(net, x)) <= 1e-12);
}

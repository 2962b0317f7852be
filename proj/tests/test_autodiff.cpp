#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "diffrecon/autodiff.hpp"
#include "diffrecon/rng.hpp"
#include "test_helpers.hpp"

using namespace diffrecon;
using testutil::check_gradients;

namespace {

// Projects a tensor-valued graph node to a scalar with fixed non-uniform
// weights so elementwise gradient errors cannot cancel out.
ad::Var project(const ad::Var& x, std::uint64_t salt = 1) {
  Rng rng(salt);
  ad::Var w = ad::make_const(rng.gauss_tensor(x->val.shape()));
  return ad::sum_all(ad::mul(x, w));
}

ad::Var param(Rng& rng, std::vector<int> shape, double offset = 0.0) {
  Tensor t = rng.gauss_tensor(std::move(shape));
  for (auto& v : t.vec()) v += offset;
  return ad::make_param(std::move(t));
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(7);
  ad::Var a = param(rng, {3, 4});
  ad::Var b = param(rng, {3, 4});

  check_gradients([&] { return project(ad::add(a, b)); }, {a, b});
  check_gradients([&] { return project(ad::sub(a, b)); }, {a, b});
  check_gradients([&] { return project(ad::mul(a, b)); }, {a, b});
  check_gradients([&] { return project(ad::neg(a)); }, {a});
  check_gradients([&] { return project(ad::scale(a, -2.5)); }, {a});
  check_gradients([&] { return project(ad::add_scalar(a, 3.0)); }, {a});
  check_gradients([&] { return project(ad::square(a)); }, {a});
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(8);
  Tensor t = rng.gauss_tensor({3, 3});
  for (auto& v : t.vec()) v += (v >= 0 ? 0.5 : -0.5);  // keep |v| > 0.5
  ad::Var a = ad::make_param(t);
  check_gradients([&] { return project(ad::relu(a)); }, {a});
}

TEST_CASE("sqrt gradient on positive inputs") {
  Rng rng(9);
  Tensor t = rng.gauss_tensor({2, 5});
  for (auto& v : t.vec()) v = std::abs(v) + 0.5;
  ad::Var a = ad::make_param(t);
  check_gradients([&] { return project(ad::sqrt_elem(a)); }, {a});
}

TEST_CASE("matrix op gradients match finite differences") {
  Rng rng(10);
  ad::Var a = param(rng, {3, 4});
  ad::Var b = param(rng, {4, 2});
  ad::Var w = param(rng, {4, 5});
  ad::Var bias = param(rng, {5});

  check_gradients([&] { return project(ad::matmul(a, b)); }, {a, b});
  check_gradients([&] { return project(ad::transpose(a)); }, {a});
  check_gradients([&] { return project(ad::linear(a, w, bias)); }, {a, w, bias});
  check_gradients([&] { return project(ad::softmax_rows(a)); }, {a});
}

TEST_CASE("layer norm gradient matches finite differences") {
  Rng rng(11);
  ad::Var x = param(rng, {3, 6});
  ad::Var g = param(rng, {6}, 1.0);
  ad::Var b = param(rng, {6});
  check_gradients([&] { return project(ad::layer_norm_rows(x, g, b)); }, {x, g, b}, 1e-5, 2e-4);
}

TEST_CASE("shape op gradients match finite differences") {
  Rng rng(12);
  ad::Var a = param(rng, {4, 6});
  ad::Var b = param(rng, {2, 6});
  ad::Var c = param(rng, {4, 3});

  check_gradients([&] { return project(ad::reshape(a, {2, 12})); }, {a});
  check_gradients([&] { return project(ad::slice_rows(a, 1, 3)); }, {a});
  check_gradients([&] { return project(ad::slice_cols(a, 2, 5)); }, {a});
  check_gradients([&] { return project(ad::concat_rows({a, b})); }, {a, b});
  check_gradients([&] { return project(ad::concat_cols({a, c})); }, {a, c});
  check_gradients([&] { return project(ad::pad_rows(a, 7)); }, {a});
}

TEST_CASE("reduction op gradients match finite differences") {
  Rng rng(13);
  ad::Var a = param(rng, {3, 5});
  ad::Var b = param(rng, {3, 5});
  ad::Var s = param(rng, {1}, 2.0);

  check_gradients([&] { return ad::sum_all(a); }, {a});
  check_gradients([&] { return ad::mean_all(a); }, {a});
  check_gradients([&] { return project(ad::row_mean(a)); }, {a});
  check_gradients([&] { return project(ad::col_mean(a)); }, {a});
  check_gradients([&] { return ad::mse(a, b); }, {a, b});
  check_gradients([&] { return ad::index_elem(a, 7); }, {a});
  check_gradients([&] { return project(ad::scale_by(a, s)); }, {a, s});
}

TEST_CASE("2-D map op gradients match finite differences") {
  Rng rng(14);
  ad::Var x = param(rng, {2, 4, 4});
  ad::Var k = param(rng, {3, 2, 3, 3});
  ad::Var kb = param(rng, {3});
  ad::Var v = param(rng, {2});

  check_gradients([&] { return project(ad::conv2d_same(x, k, kb)); }, {x, k, kb});
  check_gradients([&] { return project(ad::avg_pool2(x)); }, {x});
  check_gradients([&] { return project(ad::upsample_nearest(x, 2)); }, {x});
  check_gradients([&] { return project(ad::upsample_bilinear(x, 2)); }, {x});
  check_gradients([&] { return project(ad::add_channel_bias(x, v)); }, {x, v});

  ad::Var y = param(rng, {1, 4, 4});
  check_gradients([&] { return project(ad::concat_channels({x, y})); }, {x, y});
}

TEST_CASE("period folding gradients match finite differences") {
  Rng rng(15);
  ad::Var x = param(rng, {5, 3});  // t=5 with period 3 exercises zero-padding
  check_gradients([&] { return project(ad::fold2d(x, 3)); }, {x});
  check_gradients([&] { return project(ad::unfold2d(ad::fold2d(x, 3), 5)); }, {x});
}

TEST_CASE("backward accumulates through shared subgraphs") {
  // d/dx of (x*x + x) at x=3 is 2x+1 = 7; the node x appears twice.
  ad::Var x = ad::make_param(Tensor::scalar(3.0));
  ad::Var y = ad::add(ad::mul(x, x), x);
  ad::backward(y);
  CHECK(x->grad[0] == doctest::Approx(7.0).epsilon(1e-12));
}

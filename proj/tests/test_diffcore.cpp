#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "conmil/graph.hpp"
#include "testutil.hpp"

using namespace conmil::diffcore;
using testutil::random_array;
using testutil::random_array_off_kink;

TEST_CASE("matmul shape rule and shape errors") {
  std::mt19937_64 g(1);
  auto a = leaf(random_array({2, 3}, g));
  auto b = leaf(random_array({3, 1}, g));
  auto c = matmul(a, b);
  CHECK(c->value.rows() == 2);
  CHECK(c->value.cols() == 1);

  auto bad = leaf(random_array({4, 1}, g));
  CHECK_THROWS_WITH_AS(matmul(a, bad), "matmul: incompatible shapes 2x3 and 4x1", ShapeError);
}

TEST_CASE("analytic forward values") {
  auto s = sigmoid(leaf(NdArray::scalar(0.0)));
  CHECK(s->value[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(testutil::sigmoid(-1.0) == doctest::Approx(0.26894142136999512).epsilon(1e-12));

  auto sm = softmax_rows(leaf(NdArray({1, 3}, {0.0, 0.0, 0.0})));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(sm->value[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one within 1e-12") {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = leaf(random_array({4, 7}, g, -30.0, 30.0));
    auto y = softmax_rows(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 7; ++c) sum += y->value.at(r, c);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("backward basics") {
  // d/dx (x*x) at 3 is 6
  auto x = leaf(NdArray::scalar(3.0), true);
  auto y = mul(x, x);
  backward(y);
  CHECK(x->adjoint[0] == doctest::Approx(6.0).epsilon(1e-15));

  // gradient of a mean over 4 elements is 0.25 per element
  auto v = leaf(NdArray({2, 2}, {1.0, 2.0, 3.0, 4.0}), true);
  auto m = mean_all(v);
  backward(m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(v->adjoint[i] == doctest::Approx(0.25));

  // adjoints accumulate over all paths
  auto a = leaf(NdArray::scalar(2.0), true);
  auto s = mean_all(add(mul(a, a), a));  // a^2 + a
  backward(s);
  CHECK(a->adjoint[0] == doctest::Approx(5.0));
}

TEST_CASE("backward requires scalar root") {
  std::mt19937_64 g(3);
  auto x = leaf(random_array({2, 2}, g), true);
  auto y = relu(x);
  CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 g(4);
  const NdArray xv = random_array({6, 3}, g);
  const NdArray wv = random_array({3, 5}, g);
  auto run = [&]() {
    auto x = leaf(xv);
    auto w = leaf(wv);
    return mean_all(sigmoid(matmul(x, w)))->value[0];
  };
  const double first = run();
  for (int i = 0; i < 5; ++i) {
    const double again = run();
    CHECK(std::memcmp(&first, &again, sizeof(double)) == 0);
  }
}

// ----------------------------------------------------------------------
// Finite-difference checks, one per primitive, 100 random trials each.

namespace {

void check_primitive(const char* name,
                     const std::function<NodePtr(std::mt19937_64&, std::vector<NodePtr>&)>& build,
                     double tol, int trials = 100) {
  std::mt19937_64 g(42);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<NodePtr> leaves;
    auto root = build(g, leaves);
    for (auto& l : leaves) worst = std::max(worst, grad_check(root, l, 1e-5));
  }
  INFO(name << " worst relative error " << worst);
  CHECK(worst < tol);
}

}  // namespace

TEST_CASE("gradients match central finite differences") {
  check_primitive("matmul", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({3, 4}, g), true);
    auto b = leaf(random_array({4, 2}, g), true);
    leaves = {a, b};
    return mean_all(matmul(a, b));
  }, 1e-4);

  check_primitive("conv1d", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto x = leaf(random_array({7, 2}, g), true);
    auto w = leaf(random_array({3, 2, 3}, g), true);
    auto b = leaf(random_array({1, 3}, g), true);
    leaves = {x, w, b};
    return mean_all(conv1d(x, w, b));
  }, 1e-5);

  check_primitive("add", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({3, 4}, g), true);
    auto b = leaf(random_array({3, 4}, g), true);
    leaves = {a, b};
    return mean_all(mul(add(a, b), add(a, b)));
  }, 1e-4);

  check_primitive("add broadcast row", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({3, 4}, g), true);
    auto b = leaf(random_array({1, 4}, g), true);
    leaves = {a, b};
    return mean_all(sigmoid(add(a, b)));
  }, 1e-4);

  check_primitive("mul", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({4, 4}, g), true);
    auto b = leaf(random_array({4, 4}, g), true);
    leaves = {a, b};
    return mean_all(mul(a, b));
  }, 1e-4);

  check_primitive("relu", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array_off_kink({5, 3}, g), true);
    leaves = {a};
    return mean_all(relu(a));
  }, 1e-4);

  check_primitive("sigmoid", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({5, 3}, g, -4.0, 4.0), true);
    leaves = {a};
    return mean_all(sigmoid(a));
  }, 1e-4);

  check_primitive("softmax", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({3, 5}, g, -3.0, 3.0), true);
    auto w = leaf(random_array({3, 5}, g), false);
    leaves = {a};
    return mean_all(mul(softmax_rows(a), w));
  }, 1e-4);

  check_primitive("mean_all", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({4, 3}, g), true);
    leaves = {a};
    return mean_all(mul(a, a));
  }, 1e-4);

  check_primitive("mean_axis0", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({5, 3}, g), true);
    leaves = {a};
    return mean_all(sigmoid(mean_axis0(a)));
  }, 1e-4);

  check_primitive("concat+slice", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({2, 3}, g), true);
    auto b = leaf(random_array({4, 3}, g), true);
    leaves = {a, b};
    return mean_all(sigmoid(slice_rows(concat_rows(a, b), 1, 5)));
  }, 1e-4);

  check_primitive("transpose", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({3, 5}, g), true);
    leaves = {a};
    return mean_all(mul(transpose(a), transpose(a)));
  }, 1e-4);

  check_primitive("scalar add/mul", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto a = leaf(random_array({4, 2}, g), true);
    leaves = {a};
    return mean_all(sigmoid(add_scalar(mul_scalar(a, 1.7), -0.3)));
  }, 1e-4);

  check_primitive("bce_with_logits", [](std::mt19937_64& g, std::vector<NodePtr>& leaves) {
    auto x = leaf(random_array({1, 6}, g, -3.0, 3.0), true);
    NdArray targets({1, 6});
    for (std::size_t i = 0; i < 6; ++i) targets[i] = conmil::rng::uniform01(g) < 0.5 ? 0.0 : 1.0;
    leaves = {x};
    return bce_with_logits(x, targets);
  }, 1e-4);
}

TEST_CASE("grad_check on composite blocks") {
  std::mt19937_64 g(7);

  SUBCASE("linear layer, random 5x4 weights") {
    auto x = leaf(random_array({6, 5}, g));
    auto w = leaf(random_array({5, 4}, g), true);
    auto b = leaf(random_array({1, 4}, g), true);
    auto out = mean_all(sigmoid(add(matmul(x, w), b)));
    CHECK(grad_check(out, w) < 1e-6);
    CHECK(grad_check(out, b) < 1e-6);
  }

  SUBCASE("sigmoid cross-attention block") {
    const std::size_t t_len = 5, d = 8, k = 3;
    auto tokens = leaf(random_array({k, d}, g), true);
    auto z = leaf(random_array({t_len, d}, g), true);
    auto wq = leaf(random_array({d, d}, g), true);
    auto wk = leaf(random_array({d, d}, g), true);
    auto wv = leaf(random_array({d, d}, g), true);
    auto scores = mul_scalar(matmul(matmul(tokens, wq), transpose(matmul(z, wk))),
                             1.0 / std::sqrt(static_cast<double>(d)));
    auto attn = sigmoid(add_scalar(scores, -std::log(static_cast<double>(t_len))));
    auto pooled = matmul(attn, matmul(z, wv));
    auto out = mean_all(mul(pooled, pooled));
    for (auto& l : {tokens, z, wq, wk, wv}) CHECK(grad_check(out, l) < 1e-4);
  }

  SUBCASE("conv1d kernel width 3") {
    auto x = leaf(random_array({9, 2}, g));
    auto w = leaf(random_array({4, 2, 3}, g), true);
    auto b = leaf(random_array({1, 4}, g), true);
    auto out = mean_all(sigmoid(conv1d(x, w, b)));
    CHECK(grad_check(out, w) < 1e-5);
    CHECK(grad_check(out, b) < 1e-5);
  }
}

TEST_CASE("gradients map covers trainable leaves only") {
  std::mt19937_64 g(11);
  auto w = leaf(random_array({2, 2}, g), true);
  auto c = leaf(random_array({2, 2}, g), false);
  auto root = mean_all(mul(w, c));
  auto grads = gradients(root);
  CHECK(grads.size() == 1);
  CHECK(grads.count(w.get()) == 1);
}

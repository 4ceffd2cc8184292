// SPDX-License-Identifier: Apache-2.0
// Finite-difference checks for every primitive, run in the 64-bit build.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "plm/rng.hpp"
#include "plm/tensor.hpp"
#include "support/grad_check.hpp"

using namespace plm;
using plm::testing::check_gradients;

static_assert(sizeof(real) == 8, "gradient oracle tests require the 64-bit build");

namespace {

TensorPtr rand_t(Rng& rng, Shape shape, double scale = 1.0) {
  auto t = Tensor::zeros(shape, true);
  for (auto& v : t->data()) v = rng.normal() * scale;
  return t;
}

// Random positive cotangent tensor so the scalarized loss exercises every
// output coordinate.
TensorPtr rand_cotangent(Rng& rng, const Shape& shape) {
  auto u = Tensor::zeros(shape);
  for (auto& v : u->data()) v = rng.normal();
  return u;
}

TensorPtr scalarize(const TensorPtr& y, const TensorPtr& u) { return sum(mul(y, u)); }

void run_instances(const char* name, int instances,
                   const std::function<void(Rng&, int)>& body) {
  Rng root(Rng::fnv1a(name));
  for (int i = 0; i < instances; ++i) {
    Rng inst = root.split(static_cast<uint64_t>(i));
    body(inst, i);
  }
}

}  // namespace

TEST_CASE("fd: matmul") {
  run_instances("matmul", 20, [](Rng& rng, int) {
    int m = 1 + static_cast<int>(rng.uniform_int(4));
    int k = 1 + static_cast<int>(rng.uniform_int(4));
    int n = 1 + static_cast<int>(rng.uniform_int(4));
    auto a = rand_t(rng, {m, k});
    auto b = rand_t(rng, {k, n});
    auto u = rand_cotangent(rng, {m, n});
    auto res = check_gradients([&] { return scalarize(matmul(a, b), u); }, {a, b});
    CHECK_MESSAGE(res.ok, res.detail);
  });
}

TEST_CASE("fd: transpose, reshape, slice, concat, broadcast") {
  run_instances("shapes", 20, [](Rng& rng, int) {
    auto a = rand_t(rng, {3, 4});
    auto b = rand_t(rng, {3, 2});
    auto row = rand_t(rng, {4});
    auto u1 = rand_cotangent(rng, {4, 3});
    auto res = check_gradients([&] { return scalarize(transpose(a), u1); }, {a});
    CHECK_MESSAGE(res.ok, res.detail);

    auto u2 = rand_cotangent(rng, {2, 6});
    res = check_gradients([&] { return scalarize(reshape(a, {2, 6}), u2); }, {a});
    CHECK_MESSAGE(res.ok, res.detail);

    auto u3 = rand_cotangent(rng, {2, 4});
    res = check_gradients([&] { return scalarize(slice(a, 0, 1, 3), u3); }, {a});
    CHECK_MESSAGE(res.ok, res.detail);

    auto u4 = rand_cotangent(rng, {3, 6});
    res = check_gradients([&] { return scalarize(concat({a, b}, 1), u4); }, {a, b});
    CHECK_MESSAGE(res.ok, res.detail);

    auto u5 = rand_cotangent(rng, {5, 4});
    res = check_gradients([&] { return scalarize(broadcast_to(row, {5, 4}), u5); }, {row});
    CHECK_MESSAGE(res.ok, res.detail);
  });
}

TEST_CASE("fd: elementwise add/sub/mul/scale/neg/minimum/clamp") {
  run_instances("elementwise", 20, [](Rng& rng, int) {
    auto a = rand_t(rng, {2, 5});
    auto b = rand_t(rng, {2, 5});
    // keep clamp/minimum away from their kinks
    for (size_t i = 0; i < a->data().size(); ++i)
      if (std::abs(a->data()[i] - b->data()[i]) < 1e-2) b->data()[i] += 0.05;
    auto u = rand_cotangent(rng, {2, 5});
    for (auto fn : {+[](const TensorPtr& x, const TensorPtr& y) { return add(x, y); },
                    +[](const TensorPtr& x, const TensorPtr& y) { return sub(x, y); },
                    +[](const TensorPtr& x, const TensorPtr& y) { return mul(x, y); },
                    +[](const TensorPtr& x, const TensorPtr& y) { return minimum(x, y); }}) {
      auto res = check_gradients([&] { return scalarize(fn(a, b), u); }, {a, b});
      CHECK_MESSAGE(res.ok, res.detail);
    }
    auto res = check_gradients([&] { return scalarize(scale(a, real(-2.5)), u); }, {a});
    CHECK_MESSAGE(res.ok, res.detail);
    res = check_gradients([&] { return scalarize(neg(a), u); }, {a});
    CHECK_MESSAGE(res.ok, res.detail);
    for (size_t i = 0; i < a->data().size(); ++i) {
      if (std::abs(a->data()[i] - 0.5) < 1e-2) a->data()[i] += 0.05;
      if (std::abs(a->data()[i] + 0.5) < 1e-2) a->data()[i] -= 0.05;
    }
    res = check_gradients([&] { return scalarize(clamp(a, -0.5, 0.5), u); }, {a});
    CHECK_MESSAGE(res.ok, res.detail);
  });
}

TEST_CASE("fd: unary gelu/tanh/exp/sigmoid/softplus") {
  run_instances("unary", 20, [](Rng& rng, int) {
    auto a = rand_t(rng, {3, 3});
    auto u = rand_cotangent(rng, {3, 3});
    for (auto fn : {&gelu, &tanh_op, &exp_op, &sigmoid, &softplus}) {
      auto res = check_gradients([&] { return scalarize(fn(a), u); }, {a});
      CHECK_MESSAGE(res.ok, res.detail);
    }
  });
}

TEST_CASE("fd: softmax and cross entropy") {
  run_instances("softmax_ce", 20, [](Rng& rng, int) {
    auto a = rand_t(rng, {3, 5}, 2.0);
    auto u = rand_cotangent(rng, {3, 5});
    auto res = check_gradients([&] { return scalarize(softmax(a), u); }, {a});
    CHECK_MESSAGE(res.ok, res.detail);

    std::vector<int> targets;
    for (int r = 0; r < 3; ++r) targets.push_back(static_cast<int>(rng.uniform_int(5)));
    auto u2 = rand_cotangent(rng, {3});
    res = check_gradients([&] { return scalarize(cross_entropy_logits(a, targets), u2); }, {a});
    CHECK_MESSAGE(res.ok, res.detail);
  });
}

TEST_CASE("fd: layer norm") {
  run_instances("layer_norm", 20, [](Rng& rng, int) {
    auto x = rand_t(rng, {3, 6});
    auto g = rand_t(rng, {6});
    auto b = rand_t(rng, {6});
    auto u = rand_cotangent(rng, {3, 6});
    auto res = check_gradients([&] { return scalarize(layer_norm(x, g, b), u); }, {x, g, b});
    CHECK_MESSAGE(res.ok, res.detail);
  });
}

TEST_CASE("fd: embedding") {
  run_instances("embedding", 20, [](Rng& rng, int) {
    auto table = rand_t(rng, {6, 4});
    std::vector<int> ids;
    for (int i = 0; i < 5; ++i) ids.push_back(static_cast<int>(rng.uniform_int(6)));
    auto u = rand_cotangent(rng, {5, 4});
    auto res = check_gradients([&] { return scalarize(embedding(table, ids), u); }, {table});
    CHECK_MESSAGE(res.ok, res.detail);
  });
}

TEST_CASE("fd: random 3-layer MLP against central differences") {
  run_instances("mlp3", 20, [](Rng& rng, int) {
    auto w1 = rand_t(rng, {4, 8}, 0.5);
    auto b1 = rand_t(rng, {8}, 0.1);
    auto w2 = rand_t(rng, {8, 8}, 0.5);
    auto b2 = rand_t(rng, {8}, 0.1);
    auto w3 = rand_t(rng, {8, 3}, 0.5);
    auto b3 = rand_t(rng, {3}, 0.1);
    auto x = rand_t(rng, {2, 4});
    std::vector<int> targets{static_cast<int>(rng.uniform_int(3)),
                             static_cast<int>(rng.uniform_int(3))};
    auto loss_fn = [&] {
      auto h1 = gelu(add(matmul(x, w1), broadcast_to(b1, {2, 8})));
      auto h2 = tanh_op(add(matmul(h1, w2), broadcast_to(b2, {2, 8})));
      auto logits = add(matmul(h2, w3), broadcast_to(b3, {2, 3}));
      return mean(cross_entropy_logits(logits, targets));
    };
    auto res = check_gradients(loss_fn, {w1, b1, w2, b2, w3, b3, x});
    CHECK_MESSAGE(res.ok, res.detail);
  });
}

TEST_CASE("identical seed and inputs give bit-identical forward and backward") {
  auto run = [] {
    Rng rng(123);
    auto a = rand_t(rng, {4, 4});
    auto b = rand_t(rng, {4, 4});
    auto loss = mean(gelu(matmul(a, softmax(b))));
    backward(loss);
    std::pair<std::vector<real>, std::vector<real>> out{loss->data(), a->grad()};
    return out;
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}

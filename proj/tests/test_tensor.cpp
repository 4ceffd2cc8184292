// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "plm/optim.hpp"
#include "plm/rng.hpp"
#include "plm/tensor.hpp"

using namespace plm;

namespace {

// Independent oracle: naive triple-loop matrix product.
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
  std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

TensorPtr t2(std::vector<real> v, int64_t m, int64_t n, bool rg = false) {
  return Tensor::from({m, n}, std::move(v), rg);
}

}  // namespace

TEST_CASE("matmul identity leaves the other operand unchanged") {
  auto eye = t2({1, 0, 0, 1}, 2, 2);
  auto a = t2({3, -1, 7, 2}, 2, 2);
  auto c = matmul(eye, a);
  for (int i = 0; i < 4; ++i) CHECK(c->data()[i] == a->data()[i]);
}

TEST_CASE("matmul matches hand example and the triple-loop oracle") {
  auto a = t2({1, 2, 3, 4}, 2, 2);
  auto b = t2({5, 6, 7, 8}, 2, 2);
  auto c = matmul(a, b);
  CHECK(c->data()[0] == doctest::Approx(19));
  CHECK(c->data()[1] == doctest::Approx(22));
  CHECK(c->data()[2] == doctest::Approx(43));
  CHECK(c->data()[3] == doctest::Approx(50));

  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    int m = 1 + static_cast<int>(rng.uniform_int(5));
    int k = 1 + static_cast<int>(rng.uniform_int(5));
    int n = 1 + static_cast<int>(rng.uniform_int(5));
    std::vector<double> av(m * k), bv(k * n);
    for (auto& x : av) x = rng.normal();
    for (auto& x : bv) x = rng.normal();
    auto at = t2(std::vector<real>(av.begin(), av.end()), m, k);
    auto bt = t2(std::vector<real>(bv.begin(), bv.end()), k, n);
    auto ct = matmul(at, bt);
    auto expect = matmul_oracle(av, bv, m, k, n);
    for (size_t i = 0; i < expect.size(); ++i)
      CHECK(static_cast<double>(ct->data()[i]) == doctest::Approx(expect[i]).epsilon(1e-5));
  }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  auto a = t2({1, 2, 3, 4, 5, 6}, 2, 3);
  auto b = t2({1, 2, 3, 4, 5, 6, 7, 8}, 4, 2);
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("[2x3]"), Error);
  try {
    matmul(a, b);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("softmax of a constant row is uniform and rows sum to one") {
  auto x = Tensor::from({4}, {0, 0, 0, 0});
  auto y = softmax(x);
  for (real v : y->data()) CHECK(v == doctest::Approx(0.25));

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<real> v(8);
    for (auto& e : v) e = static_cast<real>(rng.normal() * 3);
    auto s = softmax(t2(std::move(v), 2, 4));
    for (int r = 0; r < 2; ++r) {
      double total = 0;
      for (int j = 0; j < 4; ++j) {
        real p = s->data()[r * 4 + j];
        CHECK(p > 0);
        CHECK(p < 1);
        total += p;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("cross entropy of uniform logits is ln V") {
  for (int v : {2, 4, 17, 450}) {
    auto logits = Tensor::zeros({3, v});
    std::vector<int> targets{0, v / 2, v - 1};
    auto ce = cross_entropy_logits(logits, targets);
    for (int r = 0; r < 3; ++r)
      CHECK(static_cast<double>(ce->data()[r]) ==
            doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-6));
  }
}

TEST_CASE("backward of sum gives all-ones gradient") {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(x));
  for (real g : x->grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of x*x at 3 gives 6") {
  auto x = Tensor::scalar(3, true);
  backward(mul(x, x));
  CHECK(x->grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("gradients accumulate additively across uses of the same tensor") {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum(add(x, x)));
  for (real g : x->grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("backward rejects non-scalar losses") {
  auto x = Tensor::from({2}, {1, 2}, true);
  auto y = add(x, x);
  CHECK_THROWS_AS(backward(y), Error);
}

TEST_CASE("backward visits each node exactly once") {
  auto x = Tensor::from({2}, {1, 2}, true);
  auto a = add(x, x);
  auto b = mul(a, a);
  auto loss = sum(b);
  BackwardStats stats;
  backward(loss, &stats);
  CHECK(stats.nodes_visited == 4);  // loss, b, a, x
  CHECK(stats.vjp_calls == 3);      // x is a leaf
}

TEST_CASE("detached tensors never receive gradient") {
  auto x = Tensor::from({2}, {1, 2}, true);
  auto d = x->detach();
  auto loss = sum(mul(d, d));
  CHECK_FALSE(loss->requires_grad());
  backward(sum(mul(x, d)));
  CHECK_FALSE(d->has_grad());
  CHECK(x->has_grad());
}

TEST_CASE("no-grad scope suppresses graph construction") {
  auto x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard g;
    auto y = mul(x, x);
    CHECK_FALSE(y->requires_grad());
    CHECK(y->is_leaf());
  }
  auto y = mul(x, x);
  CHECK(y->requires_grad());
}

TEST_CASE("debug switch flags non-finite forward values") {
  auto x = Tensor::from({2}, {real(1e30), real(1e30)});
  auto y = exp_op(x);  // overflows to inf in either precision
  CHECK_NOTHROW(mul(y, y));
  set_debug_checks(true);
  CHECK_THROWS_AS(exp_op(x), Error);
  set_debug_checks(false);
  CHECK_NOTHROW(exp_op(x));
}

TEST_CASE("adamw leaves params unchanged at zero gradient and zero decay") {
  auto p = Tensor::scalar(1.5, true);
  AdamW opt({{"p", p}}, {.lr = 0.1, .weight_decay = 0.0});
  p->grad();  // zero-filled
  opt.step();
  CHECK(p->data()[0] == doctest::Approx(1.5));
}

TEST_CASE("adamw hand-evaluated step: p=1, g=1, lr=0.1, beta1=beta2=0") {
  auto p = Tensor::scalar(1.0, true);
  AdamW opt({{"p", p}}, {.lr = 0.1, .beta1 = 0.0, .beta2 = 0.0, .weight_decay = 0.0});
  p->grad()[0] = 1.0;
  opt.step();
  // m = g = 1, v = g^2 = 1, update = 1/(1 + eps) -> p = 1 - 0.1 ~ 0.9
  CHECK(static_cast<double>(p->data()[0]) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adamw rejects non-positive learning rate") {
  auto p = Tensor::scalar(1.0, true);
  CHECK_THROWS_AS(AdamW({{"p", p}}, {.lr = 0.0}), Error);
  AdamW opt({{"p", p}}, {.lr = 0.1});
  CHECK_THROWS_AS(opt.set_lr(-1.0), Error);
}

TEST_CASE("identical seeds give bit-identical adamw trajectories") {
  auto run = [] {
    Rng rng(99);
    auto w = Tensor::randn({4, 4}, rng, 0.1, true);
    AdamW opt({{"w", w}}, {.lr = 1e-2, .weight_decay = 0.01});
    for (int i = 0; i < 5; ++i) {
      opt.zero_grad();
      backward(sum(mul(w, w)));
      opt.step();
    }
    return w->data();
  };
  auto a = run();
  auto b = run();
  CHECK(a == b);  // bitwise
}

TEST_CASE("rng is deterministic, splittable and counter-based") {
  Rng a(42), b(42);
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  auto child1 = c.split("stage1");
  auto child2 = c.split("stage2");
  CHECK(child1.next_u64() != child2.next_u64());
  // split does not depend on parent position
  Rng d(42);
  d.next_u64();
  auto child1b = d.split("stage1");
  CHECK(child1.split("x").next_u64() == child1b.split("x").next_u64());
}

TEST_CASE("broadcast, slice, concat and reshape round values correctly") {
  auto row = Tensor::from({3}, {1, 2, 3}, true);
  auto b = broadcast_to(row, {2, 3});
  CHECK(b->data() == std::vector<real>{1, 2, 3, 1, 2, 3});
  backward(sum(b));
  CHECK(row->grad() == std::vector<real>{2, 2, 2});

  auto m = t2({1, 2, 3, 4, 5, 6}, 2, 3);
  auto col = slice(m, 1, 1, 3);
  CHECK(col->shape() == Shape{2, 2});
  CHECK(col->data() == std::vector<real>{2, 3, 5, 6});
  auto back = concat({slice(m, 1, 0, 1), col}, 1);
  CHECK(back->data() == m->data());
  auto r = reshape(m, {3, 2});
  CHECK(r->data() == m->data());
  CHECK_THROWS_AS(reshape(m, {4, 2}), Error);
}

TEST_CASE("embedding gathers rows and scatters gradients") {
  auto table = t2({10, 20, 30, 40, 50, 60}, 3, 2, true);
  std::vector<int> ids{2, 0, 2};
  auto e = embedding(table, ids);
  CHECK(e->data() == std::vector<real>{50, 60, 10, 20, 50, 60});
  backward(sum(e));
  CHECK(table->grad() == std::vector<real>{1, 1, 0, 0, 2, 2});
  std::vector<int> bad{3};
  CHECK_THROWS_AS(embedding(table, bad), Error);
}

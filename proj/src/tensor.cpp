// SPDX-License-Identifier: Apache-2.0
#include "plm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace plm {

namespace {

bool g_debug_checks = false;
thread_local bool g_grad_enabled = true;

void check_finite(const std::vector<real>& v, const char* op) {
  if (!g_debug_checks) return;
  for (real x : v) {
    if (!std::isfinite(x)) fail(std::string(op) + ": non-finite value in forward output");
  }
}

int64_t rows_of(const Shape& s) {
  int64_t r = 1;
  for (size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

int64_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace

void set_debug_checks(bool on) noexcept { g_debug_checks = on; }
bool debug_checks() noexcept { return g_debug_checks; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    require(d > 0, "shape dimensions must be positive, got " + shape_str(s));
    n *= d;
  }
  return n;
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
  return from(std::move(shape), {}, requires_grad);
}

TensorPtr Tensor::full(Shape shape, real value, bool requires_grad) {
  int64_t n = shape_numel(shape);
  auto t = std::make_shared<Tensor>();
  t->shape_ = std::move(shape);
  t->data_.assign(static_cast<size_t>(n), value);
  t->requires_grad_ = requires_grad;
  return t;
}

TensorPtr Tensor::from(Shape shape, std::vector<real> data, bool requires_grad) {
  int64_t n = shape_numel(shape);
  auto t = std::make_shared<Tensor>();
  if (data.empty()) data.assign(static_cast<size_t>(n), real(0));
  require(static_cast<int64_t>(data.size()) == n,
          "tensor data length " + std::to_string(data.size()) + " does not match shape " +
              shape_str(shape));
  t->shape_ = std::move(shape);
  t->data_ = std::move(data);
  t->requires_grad_ = requires_grad;
  return t;
}

TensorPtr Tensor::scalar(real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

TensorPtr Tensor::randn(Shape shape, Rng& rng, real stddev, bool requires_grad) {
  int64_t n = shape_numel(shape);
  std::vector<real> d(static_cast<size_t>(n));
  for (auto& x : d) x = static_cast<real>(rng.normal()) * stddev;
  return from(std::move(shape), std::move(d), requires_grad);
}

std::vector<real>& Tensor::grad() {
  if (grad_.empty()) grad_.assign(data_.size(), real(0));
  return grad_;
}

const std::vector<real>& Tensor::grad() const {
  require(!grad_.empty(), "tensor has no gradient");
  return grad_;
}

void Tensor::zero_grad() {
  if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), real(0));
}

real Tensor::item() const {
  require(numel() == 1, "item() requires a one-element tensor, got " + shape_str(shape_));
  return data_[0];
}

TensorPtr Tensor::detach() const {
  auto t = std::make_shared<Tensor>();
  t->shape_ = shape_;
  t->data_ = data_;
  t->requires_grad_ = false;
  return t;
}

void Tensor::attach(std::vector<TensorPtr> parents, std::function<void(Tensor&)> vjp,
                    const char* op) {
  op_ = op;
  if (!g_grad_enabled) return;
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad_;
  if (!any) return;
  requires_grad_ = true;
  parents_ = std::move(parents);
  vjp_ = std::move(vjp);
}

void backward(const TensorPtr& loss, BackwardStats* stats) {
  require(loss->numel() == 1,
          "backward requires a scalar loss, got " + shape_str(loss->shape()));
  // Iterative post-order DFS: children are emitted after all their parents'
  // subtrees, so reversing gives a valid reverse-topological order.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> seen;
  std::vector<std::pair<Tensor*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents_.size()) {
      Tensor* p = node->parents_[idx++].get();
      if (p->requires_grad_ && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->grad().assign(1, real(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* node = *it;
    if (stats) stats->nodes_visited++;
    if (node->vjp_) {
      node->vjp_(*node);
      if (stats) stats->vjp_calls++;
    }
  }
}

// ---- op helpers -------------------------------------------------------------

namespace {

TensorPtr make_op(Shape shape, std::vector<real> data, std::vector<TensorPtr> parents,
                  std::function<void(Tensor&)> vjp, const char* op) {
  check_finite(data, op);
  auto out = Tensor::from(std::move(shape), std::move(data));
  out->attach(std::move(parents), std::move(vjp), op);
  return out;
}

void accumulate(const TensorPtr& t, const std::vector<real>& delta) {
  if (!t->requires_grad()) return;
  auto& g = t->grad();
  for (size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

// ---- primitives -------------------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  require(a->shape().size() == 2 && b->shape().size() == 2,
          "matmul: expected 2-D operands, got " + shape_str(a->shape()) + " and " +
              shape_str(b->shape()));
  int64_t m = a->shape()[0], k = a->shape()[1], k2 = b->shape()[0], n = b->shape()[1];
  require(k == k2, "matmul: inner dimensions do not match: " + shape_str(a->shape()) + " vs " +
                       shape_str(b->shape()));
  std::vector<real> out(static_cast<size_t>(m * n), real(0));
  const auto& A = a->data();
  const auto& B = b->data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      real av = A[i * k + p];
      const real* brow = B.data() + p * n;
      real* orow = out.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto vjp = [a, b, m, k, n](Tensor& self) {
    const auto& G = self.grad();
    if (a->requires_grad()) {
      auto& ga = a->grad();
      const auto& B = b->data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          real gv = G[i * n + j];
          const real* brow = B.data() + 0;
          for (int64_t p = 0; p < k; ++p) ga[i * k + p] += gv * brow[p * n + j];
        }
    }
    if (b->requires_grad()) {
      auto& gb = b->grad();
      const auto& A = a->data();
      for (int64_t p = 0; p < k; ++p)
        for (int64_t i = 0; i < m; ++i) {
          real av = A[i * k + p];
          const real* grow = G.data() + i * n;
          real* gbrow = gb.data() + p * n;
          for (int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
  };
  return make_op({m, n}, std::move(out), {a, b}, vjp, "matmul");
}

TensorPtr transpose(const TensorPtr& a) {
  require(a->shape().size() == 2, "transpose: expected 2-D operand, got " + shape_str(a->shape()));
  int64_t m = a->shape()[0], n = a->shape()[1];
  std::vector<real> out(static_cast<size_t>(m * n));
  const auto& A = a->data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  auto vjp = [a, m, n](Tensor& self) {
    if (!a->requires_grad()) return;
    const auto& G = self.grad();
    auto& ga = a->grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ga[i * n + j] += G[j * m + i];
  };
  return make_op({n, m}, std::move(out), {a}, vjp, "transpose");
}

namespace {

TensorPtr elementwise_binary(const TensorPtr& a, const TensorPtr& b, const char* op,
                             real (*fwd)(real, real),
                             std::function<void(Tensor&, const TensorPtr&, const TensorPtr&)> vjp) {
  require(a->shape() == b->shape(), std::string(op) + ": shape mismatch: " +
                                        shape_str(a->shape()) + " vs " + shape_str(b->shape()));
  std::vector<real> out(a->data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a->data()[i], b->data()[i]);
  auto bound = [a, b, vjp](Tensor& self) { vjp(self, a, b); };
  return make_op(a->shape(), std::move(out), {a, b}, bound, op);
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  return elementwise_binary(
      a, b, "add", [](real x, real y) { return x + y; },
      [](Tensor& self, const TensorPtr& a, const TensorPtr& b) {
        accumulate(a, self.grad());
        accumulate(b, self.grad());
      });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  return elementwise_binary(
      a, b, "sub", [](real x, real y) { return x - y; },
      [](Tensor& self, const TensorPtr& a, const TensorPtr& b) {
        accumulate(a, self.grad());
        if (b->requires_grad()) {
          auto& gb = b->grad();
          const auto& G = self.grad();
          for (size_t i = 0; i < gb.size(); ++i) gb[i] -= G[i];
        }
      });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  return elementwise_binary(
      a, b, "mul", [](real x, real y) { return x * y; },
      [](Tensor& self, const TensorPtr& a, const TensorPtr& b) {
        const auto& G = self.grad();
        if (a->requires_grad()) {
          auto& ga = a->grad();
          for (size_t i = 0; i < ga.size(); ++i) ga[i] += G[i] * b->data()[i];
        }
        if (b->requires_grad()) {
          auto& gb = b->grad();
          for (size_t i = 0; i < gb.size(); ++i) gb[i] += G[i] * a->data()[i];
        }
      });
}

TensorPtr scale(const TensorPtr& a, real c) {
  std::vector<real> out(a->data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->data()[i] * c;
  auto vjp = [a, c](Tensor& self) {
    if (!a->requires_grad()) return;
    auto& ga = a->grad();
    const auto& G = self.grad();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += G[i] * c;
  };
  return make_op(a->shape(), std::move(out), {a}, vjp, "scale");
}

TensorPtr neg(const TensorPtr& a) { return scale(a, real(-1)); }

TensorPtr broadcast_to(const TensorPtr& a, Shape shape) {
  int64_t n_out = shape_numel(shape);
  const auto& src = a->data();
  if (a->numel() == 1) {
    std::vector<real> out(static_cast<size_t>(n_out), src[0]);
    auto vjp = [a](Tensor& self) {
      if (!a->requires_grad()) return;
      real s = 0;
      for (real g : self.grad()) s += g;
      a->grad()[0] += s;
    };
    return make_op(std::move(shape), std::move(out), {a}, vjp, "broadcast");
  }
  require(a->shape().size() == 1 && shape.size() == 2 && shape[1] == a->shape()[0],
          "broadcast: cannot expand " + shape_str(a->shape()) + " to " + shape_str(shape));
  int64_t m = shape[0], n = shape[1];
  std::vector<real> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    std::copy(src.begin(), src.end(), out.begin() + i * n);
  auto vjp = [a, m, n](Tensor& self) {
    if (!a->requires_grad()) return;
    auto& ga = a->grad();
    const auto& G = self.grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ga[j] += G[i * n + j];
  };
  return make_op(std::move(shape), std::move(out), {a}, vjp, "broadcast");
}

TensorPtr embedding(const TensorPtr& table, std::span<const int> ids) {
  require(table->shape().size() == 2,
          "embedding: table must be 2-D, got " + shape_str(table->shape()));
  int64_t v = table->shape()[0], h = table->shape()[1];
  require(!ids.empty(), "embedding: empty id sequence");
  for (int id : ids)
    require(id >= 0 && id < v, "embedding: id " + std::to_string(id) +
                                   " out of range for table " + shape_str(table->shape()));
  int64_t t = static_cast<int64_t>(ids.size());
  std::vector<real> out(static_cast<size_t>(t * h));
  const auto& T = table->data();
  for (int64_t i = 0; i < t; ++i)
    std::copy(T.begin() + ids[i] * h, T.begin() + (ids[i] + 1) * h, out.begin() + i * h);
  std::vector<int> ids_copy(ids.begin(), ids.end());
  auto vjp = [table, ids_copy, h](Tensor& self) {
    if (!table->requires_grad()) return;
    auto& gt = table->grad();
    const auto& G = self.grad();
    for (size_t i = 0; i < ids_copy.size(); ++i) {
      real* row = gt.data() + static_cast<int64_t>(ids_copy[i]) * h;
      const real* grow = G.data() + static_cast<int64_t>(i) * h;
      for (int64_t j = 0; j < h; ++j) row[j] += grow[j];
    }
  };
  return make_op({t, h}, std::move(out), {table}, vjp, "embedding");
}

TensorPtr softmax(const TensorPtr& a) {
  int64_t rows = rows_of(a->shape());
  int64_t n = last_dim(a->shape());
  std::vector<real> out(a->data().size());
  const auto& X = a->data();
  for (int64_t r = 0; r < rows; ++r) {
    const real* x = X.data() + r * n;
    real* y = out.data() + r * n;
    real mx = x[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    real denom = 0;
    for (int64_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      denom += y[j];
    }
    for (int64_t j = 0; j < n; ++j) y[j] /= denom;
  }
  auto vjp = [a, rows, n](Tensor& self) {
    if (!a->requires_grad()) return;
    const auto& Y = self.data();  // softmax output
    const auto& G = self.grad();
    auto& ga = a->grad();
    for (int64_t r = 0; r < rows; ++r) {
      const real* y = Y.data() + r * n;
      const real* g = G.data() + r * n;
      real dot = 0;
      for (int64_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (int64_t j = 0; j < n; ++j) ga[r * n + j] += (g[j] - dot) * y[j];
    }
  };
  return make_op(a->shape(), std::move(out), {a}, vjp, "softmax");
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias, real eps) {
  int64_t n = last_dim(x->shape());
  require(gain->shape() == Shape{n} && bias->shape() == Shape{n},
          "layer_norm: gain/bias must be " + shape_str({n}) + ", got " +
              shape_str(gain->shape()) + " and " + shape_str(bias->shape()));
  int64_t rows = rows_of(x->shape());
  std::vector<real> out(x->data().size());
  std::vector<real> xhat(x->data().size());
  std::vector<real> inv_std(static_cast<size_t>(rows));
  const auto& X = x->data();
  const auto& Gn = gain->data();
  const auto& Bs = bias->data();
  for (int64_t r = 0; r < rows; ++r) {
    const real* xr = X.data() + r * n;
    real mu = 0;
    for (int64_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<real>(n);
    real var = 0;
    for (int64_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<real>(n);
    real is = real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int64_t j = 0; j < n; ++j) {
      real xh = (xr[j] - mu) * is;
      xhat[r * n + j] = xh;
      out[r * n + j] = xh * Gn[j] + Bs[j];
    }
  }
  auto vjp = [x, gain, bias, rows, n, xhat = std::move(xhat),
              inv_std = std::move(inv_std)](Tensor& self) {
    const auto& G = self.grad();
    const auto& Gn = gain->data();
    for (int64_t r = 0; r < rows; ++r) {
      const real* g = G.data() + r * n;
      const real* xh = xhat.data() + r * n;
      if (gain->requires_grad()) {
        auto& gg = gain->grad();
        for (int64_t j = 0; j < n; ++j) gg[j] += g[j] * xh[j];
      }
      if (bias->requires_grad()) {
        auto& gb = bias->grad();
        for (int64_t j = 0; j < n; ++j) gb[j] += g[j];
      }
      if (x->requires_grad()) {
        auto& gx = x->grad();
        real sum_gy = 0, sum_gy_xh = 0;
        for (int64_t j = 0; j < n; ++j) {
          real gy = g[j] * Gn[j];
          sum_gy += gy;
          sum_gy_xh += gy * xh[j];
        }
        real inv_n = real(1) / static_cast<real>(n);
        for (int64_t j = 0; j < n; ++j) {
          real gy = g[j] * Gn[j];
          gx[r * n + j] += inv_std[r] * (gy - inv_n * sum_gy - xh[j] * inv_n * sum_gy_xh);
        }
      }
    }
  };
  return make_op(x->shape(), std::move(out), {x, gain, bias}, vjp, "layer_norm");
}

namespace {

TensorPtr elementwise_unary(const TensorPtr& a, const char* op, real (*fwd)(real),
                            real (*dfdx)(real)) {
  std::vector<real> out(a->data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(a->data()[i]);
  auto vjp = [a, dfdx](Tensor& self) {
    if (!a->requires_grad()) return;
    auto& ga = a->grad();
    const auto& G = self.grad();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += G[i] * dfdx(a->data()[i]);
  };
  return make_op(a->shape(), std::move(out), {a}, vjp, op);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

TensorPtr gelu(const TensorPtr& a) {
  return elementwise_unary(
      a, "gelu",
      [](real x) {
        return static_cast<real>(0.5 * static_cast<double>(x) *
                                 (1.0 + std::erf(static_cast<double>(x) * kInvSqrt2)));
      },
      [](real x) {
        double xd = static_cast<double>(x);
        double cdf = 0.5 * (1.0 + std::erf(xd * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * xd * xd);
        return static_cast<real>(cdf + xd * pdf);
      });
}

TensorPtr tanh_op(const TensorPtr& a) {
  return elementwise_unary(
      a, "tanh", [](real x) { return std::tanh(x); },
      [](real x) {
        real t = std::tanh(x);
        return real(1) - t * t;
      });
}

TensorPtr exp_op(const TensorPtr& a) {
  return elementwise_unary(
      a, "exp", [](real x) { return std::exp(x); }, [](real x) { return std::exp(x); });
}

TensorPtr sigmoid(const TensorPtr& a) {
  return elementwise_unary(
      a, "sigmoid",
      [](real x) {
        if (x >= 0) return real(1) / (real(1) + std::exp(-x));
        real e = std::exp(x);
        return e / (real(1) + e);
      },
      [](real x) {
        real s;
        if (x >= 0)
          s = real(1) / (real(1) + std::exp(-x));
        else {
          real e = std::exp(x);
          s = e / (real(1) + e);
        }
        return s * (real(1) - s);
      });
}

TensorPtr softplus(const TensorPtr& a) {
  return elementwise_unary(
      a, "softplus",
      [](real x) {
        // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|}), overflow-free
        return std::max(x, real(0)) + std::log1p(std::exp(-std::abs(x)));
      },
      [](real x) {
        if (x >= 0) return real(1) / (real(1) + std::exp(-x));
        real e = std::exp(x);
        return e / (real(1) + e);
      });
}

TensorPtr clamp(const TensorPtr& a, real lo, real hi) {
  require(lo <= hi, "clamp: lo must not exceed hi");
  std::vector<real> out(a->data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(a->data()[i], lo), hi);
  auto vjp = [a, lo, hi](Tensor& self) {
    if (!a->requires_grad()) return;
    auto& ga = a->grad();
    const auto& G = self.grad();
    for (size_t i = 0; i < ga.size(); ++i) {
      real x = a->data()[i];
      if (x > lo && x < hi) ga[i] += G[i];
    }
  };
  return make_op(a->shape(), std::move(out), {a}, vjp, "clamp");
}

TensorPtr minimum(const TensorPtr& a, const TensorPtr& b) {
  return elementwise_binary(
      a, b, "minimum", [](real x, real y) { return std::min(x, y); },
      [](Tensor& self, const TensorPtr& a, const TensorPtr& b) {
        const auto& G = self.grad();
        // Ties route to the first argument.
        for (size_t i = 0; i < G.size(); ++i) {
          bool take_a = a->data()[i] <= b->data()[i];
          if (take_a && a->requires_grad()) a->grad()[i] += G[i];
          if (!take_a && b->requires_grad()) b->grad()[i] += G[i];
        }
      });
}

TensorPtr cross_entropy_logits(const TensorPtr& logits, std::span<const int> targets) {
  require(logits->shape().size() == 2,
          "cross_entropy_logits: logits must be 2-D, got " + shape_str(logits->shape()));
  int64_t m = logits->shape()[0], n = logits->shape()[1];
  require(static_cast<int64_t>(targets.size()) == m,
          "cross_entropy_logits: " + std::to_string(targets.size()) + " targets for " +
              shape_str(logits->shape()) + " logits");
  for (int t : targets)
    require(t >= 0 && t < n, "cross_entropy_logits: target " + std::to_string(t) +
                                 " out of range for " + std::to_string(n) + " classes");
  std::vector<real> out(static_cast<size_t>(m));
  const auto& X = logits->data();
  for (int64_t r = 0; r < m; ++r) {
    const real* x = X.data() + r * n;
    real mx = x[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    real denom = 0;
    for (int64_t j = 0; j < n; ++j) denom += std::exp(x[j] - mx);
    out[r] = (std::log(denom) + mx) - x[targets[r]];
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  auto vjp = [logits, tgt = std::move(tgt), m, n](Tensor& self) {
    if (!logits->requires_grad()) return;
    const auto& G = self.grad();
    const auto& X = logits->data();
    auto& gx = logits->grad();
    for (int64_t r = 0; r < m; ++r) {
      const real* x = X.data() + r * n;
      real mx = x[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
      real denom = 0;
      for (int64_t j = 0; j < n; ++j) denom += std::exp(x[j] - mx);
      for (int64_t j = 0; j < n; ++j) {
        real p = std::exp(x[j] - mx) / denom;
        real delta = (j == tgt[r]) ? real(1) : real(0);
        gx[r * n + j] += G[r] * (p - delta);
      }
    }
  };
  return make_op({m}, std::move(out), {logits}, vjp, "cross_entropy_logits");
}

TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0]->shape();
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  require(axis == 0 || s0.size() == 2, "concat along axis 1 requires 2-D inputs");
  int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p->shape();
    require(s.size() == s0.size(), "concat: rank mismatch: " + shape_str(s0) + " vs " +
                                       shape_str(s));
    for (size_t d = 0; d < s.size(); ++d)
      if (static_cast<int>(d) != axis)
        require(s[d] == s0[d],
                "concat: shape mismatch: " + shape_str(s0) + " vs " + shape_str(s));
    total += s[static_cast<size_t>(axis)];
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = total;
  std::vector<real> out(static_cast<size_t>(shape_numel(out_shape)));
  if (axis == 0) {
    size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p->data().begin(), p->data().end(), out.begin() + off);
      off += p->data().size();
    }
  } else {
    int64_t rows = s0[0];
    int64_t col_off = 0;
    for (const auto& p : parts) {
      int64_t w = p->shape()[1];
      for (int64_t r = 0; r < rows; ++r)
        std::copy(p->data().begin() + r * w, p->data().begin() + (r + 1) * w,
                  out.begin() + r * total + col_off);
      col_off += w;
    }
  }
  auto vjp = [parts, axis, total](Tensor& self) {
    const auto& G = self.grad();
    if (axis == 0) {
      size_t off = 0;
      for (const auto& p : parts) {
        if (p->requires_grad()) {
          auto& gp = p->grad();
          for (size_t i = 0; i < gp.size(); ++i) gp[i] += G[off + i];
        }
        off += p->data().size();
      }
    } else {
      int64_t rows = parts[0]->shape()[0];
      int64_t col_off = 0;
      for (const auto& p : parts) {
        int64_t w = p->shape()[1];
        if (p->requires_grad()) {
          auto& gp = p->grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < w; ++j) gp[r * w + j] += G[r * total + col_off + j];
        }
        col_off += w;
      }
    }
  };
  return make_op(std::move(out_shape), std::move(out), parts, vjp, "concat");
}

TensorPtr slice(const TensorPtr& a, int axis, int64_t begin, int64_t end) {
  const Shape& s = a->shape();
  require(axis >= 0 && axis < static_cast<int>(s.size()), "slice: bad axis");
  int64_t dim = s[static_cast<size_t>(axis)];
  require(begin >= 0 && begin < end && end <= dim,
          "slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") invalid for " + shape_str(s));
  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = end - begin;
  std::vector<real> out(static_cast<size_t>(shape_numel(out_shape)));
  const auto& A = a->data();
  if (s.size() == 1 || axis == 0) {
    int64_t row_w = 1;
    for (size_t d = 1; d < s.size(); ++d) row_w *= s[d];
    std::copy(A.begin() + begin * row_w, A.begin() + end * row_w, out.begin());
  } else {
    int64_t rows = s[0], w = s[1], ow = end - begin;
    for (int64_t r = 0; r < rows; ++r)
      std::copy(A.begin() + r * w + begin, A.begin() + r * w + end, out.begin() + r * ow);
  }
  auto vjp = [a, axis, begin, end](Tensor& self) {
    if (!a->requires_grad()) return;
    const Shape& s = a->shape();
    const auto& G = self.grad();
    auto& ga = a->grad();
    if (s.size() == 1 || axis == 0) {
      int64_t row_w = 1;
      for (size_t d = 1; d < s.size(); ++d) row_w *= s[d];
      for (size_t i = 0; i < G.size(); ++i) ga[begin * row_w + i] += G[i];
    } else {
      int64_t rows = s[0], w = s[1], ow = end - begin;
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < ow; ++j) ga[r * w + begin + j] += G[r * ow + j];
    }
  };
  return make_op(std::move(out_shape), std::move(out), {a}, vjp, "slice");
}

TensorPtr reshape(const TensorPtr& a, Shape shape) {
  int64_t n = shape_numel(shape);
  require(n == a->numel(), "reshape: cannot view " + shape_str(a->shape()) + " as " +
                               shape_str(shape));
  std::vector<real> out = a->data();
  auto vjp = [a](Tensor& self) { accumulate(a, self.grad()); };
  return make_op(std::move(shape), std::move(out), {a}, vjp, "reshape");
}

TensorPtr sum(const TensorPtr& a) {
  real s = 0;
  for (real x : a->data()) s += x;
  auto vjp = [a](Tensor& self) {
    if (!a->requires_grad()) return;
    real g = self.grad()[0];
    auto& ga = a->grad();
    for (auto& v : ga) v += g;
  };
  return make_op({1}, {s}, {a}, vjp, "sum");
}

TensorPtr mean(const TensorPtr& a) {
  real s = 0;
  for (real x : a->data()) s += x;
  real inv = real(1) / static_cast<real>(a->numel());
  auto vjp = [a, inv](Tensor& self) {
    if (!a->requires_grad()) return;
    real g = self.grad()[0] * inv;
    auto& ga = a->grad();
    for (auto& v : ga) v += g;
  };
  return make_op({1}, {s * inv}, {a}, vjp, "mean");
}

}  // namespace plm

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "plm/common.hpp"
#include "plm/rng.hpp"

namespace plm {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;
using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// Dense tensor with an optional gradient buffer and a backpointer into the
/// computation graph. Ops below build the graph; backward() walks it in
/// reverse topological order exactly once per node.
///
/// All kernels are single-threaded, so identical seeds and inputs give
/// bit-identical forward and backward results.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
  static TensorPtr zeros(Shape shape, bool requires_grad = false);
  static TensorPtr full(Shape shape, real value, bool requires_grad = false);
  static TensorPtr from(Shape shape, std::vector<real> data, bool requires_grad = false);
  static TensorPtr scalar(real value, bool requires_grad = false);
  static TensorPtr randn(Shape shape, Rng& rng, real stddev, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  std::vector<real>& data() { return data_; }
  const std::vector<real>& data() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  /// Gradient buffer, allocated to zeros on first access.
  std::vector<real>& grad();
  const std::vector<real>& grad() const;
  void zero_grad();

  /// Value of a one-element tensor.
  real item() const;

  /// Copy of the values with no graph attached; never receives gradient.
  TensorPtr detach() const;

  bool is_leaf() const { return parents_.empty(); }
  const std::vector<TensorPtr>& parents() const { return parents_; }
  const char* op_name() const { return op_; }

  // Graph wiring, used by the op implementations.
  void attach(std::vector<TensorPtr> parents, std::function<void(Tensor&)> vjp, const char* op);

private:
  friend struct BackwardStats;
  friend void backward(const TensorPtr&, struct BackwardStats*);

  Shape shape_;
  std::vector<real> data_;
  std::vector<real> grad_;
  bool requires_grad_ = false;
  std::vector<TensorPtr> parents_;
  std::function<void(Tensor&)> vjp_;  // accumulates this node's grad into parents
  const char* op_ = "leaf";
};

struct BackwardStats {
  int64_t nodes_visited = 0;
  int64_t vjp_calls = 0;
};

/// Reverse-mode sweep from a scalar loss. Every reachable node is visited
/// exactly once; gradients accumulate additively across uses.
void backward(const TensorPtr& loss, BackwardStats* stats = nullptr);

/// Suppresses graph construction inside its scope (evaluation, generation).
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool prev_;
};
bool grad_enabled();

// ---- primitives -----------------------------------------------------------
// Each op validates shapes eagerly and defines both the forward value and
// the vector-Jacobian product.

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, real c);
TensorPtr neg(const TensorPtr& a);
/// Expand [1] to any shape, or [n] to [m, n] by row replication.
TensorPtr broadcast_to(const TensorPtr& a, Shape shape);
/// Gather rows of a [V, H] table; gradient scatters back into the table.
TensorPtr embedding(const TensorPtr& table, std::span<const int> ids);
TensorPtr softmax(const TensorPtr& a);  // last axis
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                     real eps = static_cast<real>(1e-5));
TensorPtr gelu(const TensorPtr& a);
TensorPtr tanh_op(const TensorPtr& a);
TensorPtr exp_op(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr softplus(const TensorPtr& a);
TensorPtr clamp(const TensorPtr& a, real lo, real hi);
TensorPtr minimum(const TensorPtr& a, const TensorPtr& b);
/// Per-row -log softmax(logits)[target]; logits [m, n], targets length m.
TensorPtr cross_entropy_logits(const TensorPtr& logits, std::span<const int> targets);
TensorPtr concat(const std::vector<TensorPtr>& parts, int axis);
/// Contiguous [begin, end) range along an axis of a 1-D or 2-D tensor.
TensorPtr slice(const TensorPtr& a, int axis, int64_t begin, int64_t end);
TensorPtr reshape(const TensorPtr& a, Shape shape);
TensorPtr sum(const TensorPtr& a);   // -> [1]
TensorPtr mean(const TensorPtr& a);  // -> [1]

}  // namespace plm

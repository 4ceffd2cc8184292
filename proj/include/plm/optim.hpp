// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "plm/tensor.hpp"

namespace plm {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Per-parameter first/second moment plus the shared step counter, keyed by
/// parameter name so it can ride along in checkpoints.
struct AdamWState {
  int64_t step = 0;
  std::map<std::string, std::pair<std::vector<real>, std::vector<real>>> moments;
};

/// Decoupled-weight-decay Adam over a fixed list of named parameters.
/// State starts at zero; updates are elementwise and deterministic.
class AdamW {
public:
  AdamW(std::vector<std::pair<std::string, TensorPtr>> params, AdamWConfig cfg);

  void set_lr(double lr);
  double lr() const { return cfg_.lr; }

  /// One update from the parameters' current gradients (absent grad = zero).
  void step();
  void zero_grad();
  int64_t steps_taken() const { return step_; }

  AdamWState export_state() const;
  void import_state(const AdamWState& state);

private:
  std::vector<std::pair<std::string, TensorPtr>> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<real>> m_, v_;
  int64_t step_ = 0;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_grad_norm(const std::vector<std::pair<std::string, TensorPtr>>& params,
                      double max_norm);

}  // namespace plm

// SPDX-License-Identifier: Apache-2.0
#include "plm/optim.hpp"

#include <cmath>

namespace plm {

AdamW::AdamW(std::vector<std::pair<std::string, TensorPtr>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr <= 0) fail("AdamW: learning rate must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p->data().size(), real(0));
    v_.emplace_back(p->data().size(), real(0));
  }
}

void AdamW::set_lr(double lr) {
  if (lr <= 0) fail("AdamW: learning rate must be positive");
  cfg_.lr = lr;
}

void AdamW::step() {
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    auto& data = p->data();
    const std::vector<real>* g = p->has_grad() ? &p->grad() : nullptr;
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < data.size(); ++j) {
      double gj = g ? static_cast<double>((*g)[j]) : 0.0;
      double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      m[j] = static_cast<real>(mj);
      v[j] = static_cast<real>(vj);
      double mhat = mj / bc1;
      double vhat = vj / bc2;
      double update = mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * data[j];
      data[j] = static_cast<real>(data[j] - cfg_.lr * update);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& [name, p] : params_) p->zero_grad();
}

AdamWState AdamW::export_state() const {
  AdamWState s;
  s.step = step_;
  for (size_t i = 0; i < params_.size(); ++i)
    s.moments[params_[i].first] = {m_[i], v_[i]};
  return s;
}

void AdamW::import_state(const AdamWState& state) {
  step_ = state.step;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto it = state.moments.find(params_[i].first);
    if (it == state.moments.end()) continue;  // fresh parameter keeps zero state
    const auto& [m, v] = it->second;
    if (m.size() != m_[i].size())
      fail("AdamW: optimizer state size mismatch for " + params_[i].first);
    m_[i] = m;
    v_[i] = v;
  }
}

double clip_grad_norm(const std::vector<std::pair<std::string, TensorPtr>>& params,
                      double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p->has_grad()) continue;
    for (real g : p->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    real s = static_cast<real>(max_norm / norm);
    for (const auto& [name, p] : params) {
      if (!p->has_grad()) continue;
      for (real& g : p->grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace plm

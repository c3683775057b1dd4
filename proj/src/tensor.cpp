// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/tensor.hpp"

#include <cmath>

namespace molgen {

Adam::Slot& Adam::slot_for(const Parameter& p) {
  for (auto& [name, slot] : state_) {
    if (name == p.name) return slot;
  }
  state_.push_back({p.name, Slot{Tensor::zeros(p.value.rows, p.value.cols),
                                 Tensor::zeros(p.value.rows, p.value.cols)}});
  return state_.back().second;
}

void Adam::step(std::span<Parameter* const> params) {
  ++t_;
  float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (Parameter* p : params) {
    Slot& s = slot_for(*p);
    for (std::size_t i = 0; i < p->value.v.size(); ++i) {
      float g = p->grad.v[i];
      s.m.v[i] = beta1_ * s.m.v[i] + (1.0f - beta1_) * g;
      s.v.v[i] = beta2_ * s.v.v[i] + (1.0f - beta2_) * g * g;
      float mhat = s.m.v[i] / bc1;
      float vhat = s.v.v[i] / bc2;
      p->value.v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    p->zero_grad();
  }
}

}  // namespace molgen

// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_TENSOR_HPP
#define MOLGEN_TENSOR_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "molgen/errors.hpp"
#include "molgen/rng.hpp"

namespace molgen {

// Dense row-major float32 matrix. Everything in the engine is rank 2:
// a vector is [1, n] and a scalar is [1, 1].
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0f) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, float x) {
    Tensor t(r, c);
    for (auto& e : t.v) e = x;
    return t;
  }
  static Tensor scalar(float x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }
  static Tensor row(std::span<const float> xs) {
    Tensor t(1, static_cast<int>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) t.v[i] = xs[i];
    return t;
  }
  static Tensor row(std::initializer_list<float> xs) {
    return row(std::span<const float>(xs.begin(), xs.size()));
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(rows) * cols; }
  float& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  void fill(float x) {
    for (auto& e : v) e = x;
  }
};

// A named learnable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor val)
      : name(std::move(n)), value(std::move(val)), grad(value.rows, value.cols) {}

  void zero_grad() { grad.fill(0.0f); }
};

inline Parameter xavier_param(const std::string& name, int fan_in, int fan_out, Rng& rng) {
  Tensor w(fan_in, fan_out);
  float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  for (auto& e : w.v) e = rng.uniform(-limit, limit);
  return Parameter(name, std::move(w));
}

// Adam with bias correction. State is keyed by parameter name, so names must
// be unique within a model.
class Adam {
 public:
  Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Parameter* const> params);

  float lr() const { return lr_; }
  void set_lr(float lr) { lr_ = lr; }

 private:
  struct Slot {
    Tensor m;
    Tensor v;
  };
  float lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::pair<std::string, Slot>> state_;

  Slot& slot_for(const Parameter& p);
};

}  // namespace molgen

#endif  // MOLGEN_TENSOR_HPP

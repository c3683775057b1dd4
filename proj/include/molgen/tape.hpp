// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_TAPE_HPP
#define MOLGEN_TAPE_HPP

#include <functional>
#include <span>
#include <vector>

#include "molgen/tensor.hpp"

namespace molgen {

// Handle into a Tape.
struct Val {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Batch-norm state: learnable affine plus running statistics. Normalization
// uses biased (population) variance so single-row batches stay finite.
struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;

  BatchNorm() = default;
  BatchNorm(const std::string& name, int dim)
      : gamma(name + ".gamma", Tensor::full(1, dim, 1.0f)),
        beta(name + ".beta", Tensor::zeros(1, dim)),
        running_mean(Tensor::zeros(1, dim)),
        running_var(Tensor::full(1, dim, 1.0f)) {}

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// Reverse-mode tape over float32 matrices. Records a topologically ordered
// list of primitive ops; backward() walks it once in reverse. Construct with
// grad=false for forward-only evaluation (sampling paths) — backward closures
// are then not allocated.
//
// Elementwise binary ops broadcast the *second* operand when it is [1,1],
// [1,cols] or [rows,1]. Reductions accumulate in double and are sequential,
// so results are reproducible bit for bit.
//
// Every op checks its output for NaN/Inf and throws NonFiniteValue.
class Tape {
 public:
  explicit Tape(bool grad = true) : grad_(grad) {}

  // ---- leaves ----
  Val constant(Tensor t);
  // Leaf bound to an external Parameter; backward accumulates into p.grad.
  Val param(Parameter& p);

  // ---- primitives ----
  Val matmul(Val a, Val b);
  Val transpose(Val a);
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);  // elementwise
  Val concat(int axis, Val a, Val b);
  Val concat_cols(std::span<const Val> xs);
  Val sum(Val a, int axis = -1);   // -1: all -> [1,1]; 0: -> [1,c]; 1: -> [r,1]
  Val mean(Val a, int axis = -1);
  Val max(Val a, int axis);        // ties resolve to the first index
  Val minimum(Val a, Val b);       // elementwise, same shape
  Val softmax(Val a, int axis);
  Val log_softmax(Val a, int axis);
  Val relu(Val a);
  Val leaky_relu(Val a, float slope);
  Val tanh(Val a);
  Val sigmoid(Val a);
  Val log_sigmoid(Val a);
  Val exp(Val a);
  Val log(Val a);
  Val sqrt(Val a);  // subgradient 0 at 0
  Val clamp(Val a, float lo, float hi);
  Val scale(Val a, float c);
  Val add_scalar(Val a, float c);
  Val batch_norm(Val x, BatchNorm& bn, bool train);
  Val index_select(Val x, std::vector<int> idx);             // gather rows
  Val scatter_add(Val x, std::vector<int> idx, int out_rows);  // out[idx[r]] += x[r]
  Val pick(Val x, int r, int c);  // single element -> [1,1]

  // ---- driving ----
  void backward(Val root);  // root must be [1,1]
  const Tensor& value(Val v) const { return nodes_[v.id].value; }
  const Tensor& grad(Val v) const { return nodes_[v.id].grad; }
  float scalar(Val v) const { return nodes_[v.id].value.v[0]; }
  bool recording() const { return grad_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;  // empty for leaves / grad-off tapes
    bool needs_grad = false;
  };

  bool grad_;
  std::vector<Node> nodes_;

  Val push(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
  void check_finite(const Tensor& t, const char* op) const;
  Tensor& grad_ref(Val v) { return nodes_[v.id].grad; }
  friend struct TapeOps;
};

// Runs f twice per input component with central differences and compares to
// the tape gradient. Returns max over components of
// |g_ad - g_fd| / max(1, |g_fd|). `f` must build a fresh scalar graph from
// the leaf it is given.
double grad_check(const std::function<Val(Tape&, Val)>& f, const Tensor& x, float eps);

// Same check against the accumulated .grad of an external Parameter.
double grad_check_param(const std::function<Val(Tape&)>& f, Parameter& p, float eps);

}  // namespace molgen

#endif  // MOLGEN_TAPE_HPP

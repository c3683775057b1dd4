// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/tape.hpp"

#include <cmath>
#include <cstring>

namespace molgen {

namespace {

bool is_broadcastable(const Tensor& a, const Tensor& b) {
  if (a.rows == b.rows && a.cols == b.cols) return true;
  if (b.rows == 1 && b.cols == 1) return true;
  if (b.rows == 1 && b.cols == a.cols) return true;
  if (b.cols == 1 && b.rows == a.rows) return true;
  return false;
}

// Index of b matching element (r, c) of the full-shape operand.
inline std::size_t bcast_index(const Tensor& b, int r, int c) {
  int br = b.rows == 1 ? 0 : r;
  int bc = b.cols == 1 ? 0 : c;
  return static_cast<std::size_t>(br) * b.cols + bc;
}

}  // namespace

void Tape::check_finite(const Tensor& t, const char* op) const {
  for (float x : t.v) {
    if (!std::isfinite(x)) {
      throw NonFiniteValue(std::string("non-finite value produced by ") + op);
    }
  }
}

Val Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = grad_ && needs_grad;
  if (n.needs_grad) {
    n.grad = Tensor::zeros(n.value.rows, n.value.cols);
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Val{static_cast<int>(nodes_.size()) - 1};
}

Val Tape::constant(Tensor t) { return push(std::move(t), false, nullptr); }

Val Tape::param(Parameter& p) {
  Tensor t = p.value;
  Parameter* pp = &p;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(t), true, [pp, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) pp->grad.v[i] += g.v[i];
  });
}

Val Tape::matmul(Val a, Val b) {
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (A.cols != B.rows) throw ShapeMismatch("matmul: inner dims differ");
  Tensor C(A.rows, B.cols);
  const int n = A.rows, k = A.cols, m = B.cols;
  for (int i = 0; i < n; ++i) {
    float* crow = &C.v[static_cast<std::size_t>(i) * m];
    for (int kk = 0; kk < k; ++kk) {
      float aik = A.at(i, kk);
      if (aik == 0.0f) continue;
      const float* brow = &B.v[static_cast<std::size_t>(kk) * m];
      for (int j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  check_finite(C, "matmul");
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), ng, [a, b, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& A2 = tp.nodes_[a.id].value;
    const Tensor& B2 = tp.nodes_[b.id].value;
    const int n2 = A2.rows, k2 = A2.cols, m2 = B2.cols;
    if (tp.nodes_[a.id].needs_grad) {
      Tensor& ga = tp.nodes_[a.id].grad;
      for (int i = 0; i < n2; ++i)
        for (int kk = 0; kk < k2; ++kk) {
          double acc = 0.0;
          for (int j = 0; j < m2; ++j) acc += static_cast<double>(g.at(i, j)) * B2.at(kk, j);
          ga.at(i, kk) += static_cast<float>(acc);
        }
    }
    if (tp.nodes_[b.id].needs_grad) {
      Tensor& gb = tp.nodes_[b.id].grad;
      for (int kk = 0; kk < k2; ++kk)
        for (int j = 0; j < m2; ++j) {
          double acc = 0.0;
          for (int i = 0; i < n2; ++i) acc += static_cast<double>(A2.at(i, kk)) * g.at(i, j);
          gb.at(kk, j) += static_cast<float>(acc);
        }
    }
  });
}

Val Tape::transpose(Val a) {
  const Tensor& A = nodes_[a.id].value;
  Tensor T(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T.at(j, i) = A.at(i, j);
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(T), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) ga.at(j, i) += g.at(i, j);
  });
}

Val Tape::add(Val a, Val b) {
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (!is_broadcastable(A, B)) throw ShapeMismatch("add: incompatible shapes");
  Tensor C(A.rows, A.cols);
  for (int r = 0; r < A.rows; ++r)
    for (int c = 0; c < A.cols; ++c) C.at(r, c) = A.at(r, c) + B.v[bcast_index(B, r, c)];
  check_finite(C, "add");
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), ng, [a, b, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    if (tp.nodes_[a.id].needs_grad) {
      Tensor& ga = tp.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (tp.nodes_[b.id].needs_grad) {
      Tensor& gb = tp.nodes_[b.id].grad;
      const Tensor& B2 = tp.nodes_[b.id].value;
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) gb.v[bcast_index(B2, r, c)] += g.at(r, c);
    }
  });
}

Val Tape::sub(Val a, Val b) {
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (!is_broadcastable(A, B)) throw ShapeMismatch("sub: incompatible shapes");
  Tensor C(A.rows, A.cols);
  for (int r = 0; r < A.rows; ++r)
    for (int c = 0; c < A.cols; ++c) C.at(r, c) = A.at(r, c) - B.v[bcast_index(B, r, c)];
  check_finite(C, "sub");
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), ng, [a, b, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    if (tp.nodes_[a.id].needs_grad) {
      Tensor& ga = tp.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (tp.nodes_[b.id].needs_grad) {
      Tensor& gb = tp.nodes_[b.id].grad;
      const Tensor& B2 = tp.nodes_[b.id].value;
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) gb.v[bcast_index(B2, r, c)] -= g.at(r, c);
    }
  });
}

Val Tape::mul(Val a, Val b) {
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (!is_broadcastable(A, B)) throw ShapeMismatch("mul: incompatible shapes");
  Tensor C(A.rows, A.cols);
  for (int r = 0; r < A.rows; ++r)
    for (int c = 0; c < A.cols; ++c) C.at(r, c) = A.at(r, c) * B.v[bcast_index(B, r, c)];
  check_finite(C, "mul");
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), ng, [a, b, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& A2 = tp.nodes_[a.id].value;
    const Tensor& B2 = tp.nodes_[b.id].value;
    if (tp.nodes_[a.id].needs_grad) {
      Tensor& ga = tp.nodes_[a.id].grad;
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
          ga.at(r, c) += g.at(r, c) * B2.v[bcast_index(B2, r, c)];
    }
    if (tp.nodes_[b.id].needs_grad) {
      Tensor& gb = tp.nodes_[b.id].grad;
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
          gb.v[bcast_index(B2, r, c)] += g.at(r, c) * A2.at(r, c);
    }
  });
}

Val Tape::concat(int axis, Val a, Val b) {
  Val xs[2] = {a, b};
  if (axis == 1) return concat_cols(std::span<const Val>(xs, 2));
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (A.cols != B.cols) throw ShapeMismatch("concat axis 0: column counts differ");
  Tensor C(A.rows + B.rows, A.cols);
  std::memcpy(C.v.data(), A.v.data(), A.v.size() * sizeof(float));
  std::memcpy(C.v.data() + A.v.size(), B.v.data(), B.v.size() * sizeof(float));
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), ng, [a, b, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& A2 = tp.nodes_[a.id].value;
    if (tp.nodes_[a.id].needs_grad) {
      Tensor& ga = tp.nodes_[a.id].grad;
      for (std::size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (tp.nodes_[b.id].needs_grad) {
      Tensor& gb = tp.nodes_[b.id].grad;
      std::size_t off = A2.v.size();
      for (std::size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += g.v[off + i];
    }
  });
}

Val Tape::concat_cols(std::span<const Val> xs) {
  if (xs.empty()) throw ShapeMismatch("concat: no operands");
  int rows = nodes_[xs[0].id].value.rows;
  int cols = 0;
  bool ng = false;
  for (Val x : xs) {
    const Tensor& t = nodes_[x.id].value;
    if (t.rows != rows) throw ShapeMismatch("concat axis 1: row counts differ");
    cols += t.cols;
    ng = ng || nodes_[x.id].needs_grad;
  }
  Tensor C(rows, cols);
  int off = 0;
  for (Val x : xs) {
    const Tensor& t = nodes_[x.id].value;
    for (int r = 0; r < rows; ++r)
      std::memcpy(&C.at(r, off), &t.v[static_cast<std::size_t>(r) * t.cols],
                  static_cast<std::size_t>(t.cols) * sizeof(float));
    off += t.cols;
  }
  std::vector<Val> ids(xs.begin(), xs.end());
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), ng, [ids, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    int off2 = 0;
    for (Val x : ids) {
      const Tensor& t = tp.nodes_[x.id].value;
      if (tp.nodes_[x.id].needs_grad) {
        Tensor& gx = tp.nodes_[x.id].grad;
        for (int r = 0; r < g.rows; ++r)
          for (int c = 0; c < t.cols; ++c) gx.at(r, c) += g.at(r, off2 + c);
      }
      off2 += t.cols;
    }
  });
}

Val Tape::sum(Val a, int axis) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C;
  if (axis == -1) {
    C = Tensor(1, 1);
    double acc = 0.0;
    for (float x : A.v) acc += x;
    C.v[0] = static_cast<float>(acc);
  } else if (axis == 0) {
    C = Tensor(1, A.cols);
    for (int c = 0; c < A.cols; ++c) {
      double acc = 0.0;
      for (int r = 0; r < A.rows; ++r) acc += A.at(r, c);
      C.v[c] = static_cast<float>(acc);
    }
  } else {
    C = Tensor(A.rows, 1);
    for (int r = 0; r < A.rows; ++r) {
      double acc = 0.0;
      for (int c = 0; c < A.cols; ++c) acc += A.at(r, c);
      C.v[r] = static_cast<float>(acc);
    }
  }
  check_finite(C, "sum");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, axis, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (int r = 0; r < ga.rows; ++r)
      for (int c = 0; c < ga.cols; ++c) {
        float gv = axis == -1 ? g.v[0] : (axis == 0 ? g.v[c] : g.v[r]);
        ga.at(r, c) += gv;
      }
  });
}

Val Tape::mean(Val a, int axis) {
  const Tensor& A = nodes_[a.id].value;
  float denom = axis == -1 ? static_cast<float>(A.numel())
                           : (axis == 0 ? static_cast<float>(A.rows) : static_cast<float>(A.cols));
  return scale(sum(a, axis), 1.0f / denom);
}

Val Tape::max(Val a, int axis) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C;
  std::vector<int> arg;
  if (axis == 0) {
    C = Tensor(1, A.cols);
    arg.assign(A.cols, 0);
    for (int c = 0; c < A.cols; ++c) {
      float best = A.at(0, c);
      for (int r = 1; r < A.rows; ++r)
        if (A.at(r, c) > best) {
          best = A.at(r, c);
          arg[c] = r;
        }
      C.v[c] = best;
    }
  } else if (axis == 1) {
    C = Tensor(A.rows, 1);
    arg.assign(A.rows, 0);
    for (int r = 0; r < A.rows; ++r) {
      float best = A.at(r, 0);
      for (int c = 1; c < A.cols; ++c)
        if (A.at(r, c) > best) {
          best = A.at(r, c);
          arg[r] = c;
        }
      C.v[r] = best;
    }
  } else {
    throw ShapeMismatch("max: axis must be 0 or 1");
  }
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, axis, arg, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    Tensor& ga = tp.nodes_[a.id].grad;
    if (axis == 0) {
      for (int c = 0; c < ga.cols; ++c) ga.at(arg[c], c) += g.v[c];
    } else {
      for (int r = 0; r < ga.rows; ++r) ga.at(r, arg[r]) += g.v[r];
    }
  });
}

Val Tape::minimum(Val a, Val b) {
  const Tensor& A = nodes_[a.id].value;
  const Tensor& B = nodes_[b.id].value;
  if (!A.same_shape(B)) throw ShapeMismatch("minimum: shapes differ");
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = A.v[i] <= B.v[i] ? A.v[i] : B.v[i];
  bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), ng, [a, b, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& A2 = tp.nodes_[a.id].value;
    const Tensor& B2 = tp.nodes_[b.id].value;
    for (std::size_t i = 0; i < g.v.size(); ++i) {
      if (A2.v[i] <= B2.v[i]) {
        if (tp.nodes_[a.id].needs_grad) tp.nodes_[a.id].grad.v[i] += g.v[i];
      } else {
        if (tp.nodes_[b.id].needs_grad) tp.nodes_[b.id].grad.v[i] += g.v[i];
      }
    }
  });
}

namespace {

// Applies f(first, count, stride) over rows (axis 1) or columns (axis 0).
template <typename F>
void for_each_lane(const Tensor& t, int axis, F&& f) {
  if (axis == 1) {
    for (int r = 0; r < t.rows; ++r) f(static_cast<std::size_t>(r) * t.cols, t.cols, 1);
  } else {
    for (int c = 0; c < t.cols; ++c) f(static_cast<std::size_t>(c), t.rows, t.cols);
  }
}

}  // namespace

Val Tape::softmax(Val a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeMismatch("softmax: axis must be 0 or 1");
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for_each_lane(A, axis, [&](std::size_t first, int count, int stride) {
    float mx = A.v[first];
    for (int i = 1; i < count; ++i) mx = std::max(mx, A.v[first + static_cast<std::size_t>(i) * stride]);
    double z = 0.0;
    for (int i = 0; i < count; ++i) {
      std::size_t idx = first + static_cast<std::size_t>(i) * stride;
      C.v[idx] = std::exp(A.v[idx] - mx);
      z += C.v[idx];
    }
    float inv = static_cast<float>(1.0 / z);
    for (int i = 0; i < count; ++i) C.v[first + static_cast<std::size_t>(i) * stride] *= inv;
  });
  check_finite(C, "softmax");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, axis, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& y = tp.nodes_[out.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for_each_lane(y, axis, [&](std::size_t first, int count, int stride) {
      double dot = 0.0;
      for (int i = 0; i < count; ++i) {
        std::size_t idx = first + static_cast<std::size_t>(i) * stride;
        dot += static_cast<double>(g.v[idx]) * y.v[idx];
      }
      for (int i = 0; i < count; ++i) {
        std::size_t idx = first + static_cast<std::size_t>(i) * stride;
        ga.v[idx] += y.v[idx] * (g.v[idx] - static_cast<float>(dot));
      }
    });
  });
}

Val Tape::log_softmax(Val a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeMismatch("log_softmax: axis must be 0 or 1");
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for_each_lane(A, axis, [&](std::size_t first, int count, int stride) {
    float mx = A.v[first];
    for (int i = 1; i < count; ++i) mx = std::max(mx, A.v[first + static_cast<std::size_t>(i) * stride]);
    double z = 0.0;
    for (int i = 0; i < count; ++i)
      z += std::exp(static_cast<double>(A.v[first + static_cast<std::size_t>(i) * stride]) - mx);
    float lz = mx + static_cast<float>(std::log(z));
    for (int i = 0; i < count; ++i) {
      std::size_t idx = first + static_cast<std::size_t>(i) * stride;
      C.v[idx] = A.v[idx] - lz;
    }
  });
  check_finite(C, "log_softmax");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, axis, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& y = tp.nodes_[out.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for_each_lane(y, axis, [&](std::size_t first, int count, int stride) {
      double gsum = 0.0;
      for (int i = 0; i < count; ++i) gsum += g.v[first + static_cast<std::size_t>(i) * stride];
      for (int i = 0; i < count; ++i) {
        std::size_t idx = first + static_cast<std::size_t>(i) * stride;
        ga.v[idx] += g.v[idx] - std::exp(y.v[idx]) * static_cast<float>(gsum);
      }
    });
  });
}

Val Tape::relu(Val a) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = A.v[i] > 0.0f ? A.v[i] : 0.0f;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& x = tp.nodes_[a.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (x.v[i] > 0.0f) ga.v[i] += g.v[i];
  });
}

Val Tape::leaky_relu(Val a, float slope) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = A.v[i] > 0.0f ? A.v[i] : slope * A.v[i];
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, slope, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& x = tp.nodes_[a.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += x.v[i] > 0.0f ? g.v[i] : slope * g.v[i];
  });
}

Val Tape::tanh(Val a) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = std::tanh(A.v[i]);
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& y = tp.nodes_[out.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * (1.0f - y.v[i] * y.v[i]);
  });
}

namespace {

inline float stable_sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  float e = std::exp(x);
  return e / (1.0f + e);
}

}  // namespace

Val Tape::sigmoid(Val a) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = stable_sigmoid(A.v[i]);
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& y = tp.nodes_[out.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * y.v[i] * (1.0f - y.v[i]);
  });
}

Val Tape::log_sigmoid(Val a) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) {
    float x = A.v[i];
    C.v[i] = x >= 0.0f ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  }
  check_finite(C, "log_sigmoid");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& x = tp.nodes_[a.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * stable_sigmoid(-x.v[i]);
  });
}

Val Tape::exp(Val a) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = std::exp(A.v[i]);
  check_finite(C, "exp");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& y = tp.nodes_[out.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * y.v[i];
  });
}

Val Tape::log(Val a) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = std::log(A.v[i]);
  check_finite(C, "log");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& x = tp.nodes_[a.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] / x.v[i];
  });
}

Val Tape::sqrt(Val a) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = std::sqrt(A.v[i] > 0.0f ? A.v[i] : 0.0f);
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& y = tp.nodes_[out.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (y.v[i] > 0.0f) ga.v[i] += g.v[i] / (2.0f * y.v[i]);
  });
}

Val Tape::clamp(Val a, float lo, float hi) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i)
    C.v[i] = A.v[i] < lo ? lo : (A.v[i] > hi ? hi : A.v[i]);
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, lo, hi, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    const Tensor& x = tp.nodes_[a.id].value;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (x.v[i] >= lo && x.v[i] <= hi) ga.v[i] += g.v[i];
  });
}

Val Tape::scale(Val a, float c) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = A.v[i] * c;
  check_finite(C, "scale");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, c, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * c;
  });
}

Val Tape::add_scalar(Val a, float c) {
  const Tensor& A = nodes_[a.id].value;
  Tensor C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.v.size(); ++i) C.v[i] = A.v[i] + c;
  check_finite(C, "add_scalar");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[a.id].needs_grad, [a, out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    Tensor& ga = tp.nodes_[a.id].grad;
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
  });
}

Val Tape::batch_norm(Val x, BatchNorm& bn, bool train) {
  const Tensor& X = nodes_[x.id].value;
  const int n = X.rows, d = X.cols;
  if (bn.gamma.value.cols != d) throw ShapeMismatch("batch_norm: feature dim mismatch");
  Tensor mean_row(1, d), inv_std(1, d), xhat(n, d), y(n, d);
  if (train) {
    for (int c = 0; c < d; ++c) {
      double m = 0.0;
      for (int r = 0; r < n; ++r) m += X.at(r, c);
      m /= n;
      double var = 0.0;
      for (int r = 0; r < n; ++r) {
        double dlt = X.at(r, c) - m;
        var += dlt * dlt;
      }
      var /= n;
      mean_row.v[c] = static_cast<float>(m);
      inv_std.v[c] = static_cast<float>(1.0 / std::sqrt(var + bn.eps));
      bn.running_mean.v[c] =
          (1.0f - bn.momentum) * bn.running_mean.v[c] + bn.momentum * static_cast<float>(m);
      bn.running_var.v[c] =
          (1.0f - bn.momentum) * bn.running_var.v[c] + bn.momentum * static_cast<float>(var);
    }
  } else {
    for (int c = 0; c < d; ++c) {
      mean_row.v[c] = bn.running_mean.v[c];
      inv_std.v[c] = 1.0f / std::sqrt(bn.running_var.v[c] + bn.eps);
    }
  }
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) {
      float xh = (X.at(r, c) - mean_row.v[c]) * inv_std.v[c];
      xhat.at(r, c) = xh;
      y.at(r, c) = bn.gamma.value.v[c] * xh + bn.beta.value.v[c];
    }
  check_finite(y, "batch_norm");
  BatchNorm* bnp = &bn;
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(y), true,
              [x, out, bnp, train, xh = std::move(xhat), istd = std::move(inv_std)](Tape& tp) {
                const Tensor& g = tp.nodes_[out.id].grad;
                const int n2 = g.rows, d2 = g.cols;
                for (int c = 0; c < d2; ++c) {
                  double dg = 0.0, db = 0.0;
                  for (int r = 0; r < n2; ++r) {
                    dg += static_cast<double>(g.at(r, c)) * xh.at(r, c);
                    db += g.at(r, c);
                  }
                  bnp->gamma.grad.v[c] += static_cast<float>(dg);
                  bnp->beta.grad.v[c] += static_cast<float>(db);
                }
                if (!tp.nodes_[x.id].needs_grad) return;
                Tensor& gx = tp.nodes_[x.id].grad;
                if (train) {
                  for (int c = 0; c < d2; ++c) {
                    double gmean = 0.0, gxhmean = 0.0;
                    for (int r = 0; r < n2; ++r) {
                      gmean += g.at(r, c);
                      gxhmean += static_cast<double>(g.at(r, c)) * xh.at(r, c);
                    }
                    gmean /= n2;
                    gxhmean /= n2;
                    float k = bnp->gamma.value.v[c] * istd.v[c];
                    for (int r = 0; r < n2; ++r)
                      gx.at(r, c) += k * (g.at(r, c) - static_cast<float>(gmean) -
                                          xh.at(r, c) * static_cast<float>(gxhmean));
                  }
                } else {
                  for (int c = 0; c < d2; ++c) {
                    float k = bnp->gamma.value.v[c] * istd.v[c];
                    for (int r = 0; r < n2; ++r) gx.at(r, c) += k * g.at(r, c);
                  }
                }
              });
}

Val Tape::index_select(Val x, std::vector<int> idx) {
  const Tensor& X = nodes_[x.id].value;
  Tensor C(static_cast<int>(idx.size()), X.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= X.rows) throw ShapeMismatch("index_select: row out of range");
    std::memcpy(&C.v[i * X.cols], &X.v[static_cast<std::size_t>(idx[i]) * X.cols],
                static_cast<std::size_t>(X.cols) * sizeof(float));
  }
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[x.id].needs_grad, [x, idx = std::move(idx), out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    Tensor& gx = tp.nodes_[x.id].grad;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int c = 0; c < g.cols; ++c) gx.at(idx[i], c) += g.at(static_cast<int>(i), c);
  });
}

Val Tape::scatter_add(Val x, std::vector<int> idx, int out_rows) {
  const Tensor& X = nodes_[x.id].value;
  if (static_cast<int>(idx.size()) != X.rows) throw ShapeMismatch("scatter_add: index size mismatch");
  Tensor C(out_rows, X.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= out_rows) throw ShapeMismatch("scatter_add: row out of range");
    for (int c = 0; c < X.cols; ++c) C.at(idx[i], c) += X.at(static_cast<int>(i), c);
  }
  check_finite(C, "scatter_add");
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[x.id].needs_grad, [x, idx = std::move(idx), out](Tape& tp) {
    const Tensor& g = tp.nodes_[out.id].grad;
    Tensor& gx = tp.nodes_[x.id].grad;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int c = 0; c < g.cols; ++c) gx.at(static_cast<int>(i), c) += g.at(idx[i], c);
  });
}

Val Tape::pick(Val x, int r, int c) {
  const Tensor& X = nodes_[x.id].value;
  if (r < 0 || r >= X.rows || c < 0 || c >= X.cols) throw ShapeMismatch("pick: out of range");
  Tensor C = Tensor::scalar(X.at(r, c));
  Val out{static_cast<int>(nodes_.size())};
  return push(std::move(C), nodes_[x.id].needs_grad, [x, r, c, out](Tape& tp) {
    tp.nodes_[x.id].grad.at(r, c) += tp.nodes_[out.id].grad.v[0];
  });
}

void Tape::backward(Val root) {
  if (!grad_) throw Error("backward called on a non-recording tape");
  Node& rn = nodes_[root.id];
  if (rn.value.numel() != 1) throw ShapeMismatch("backward: root must be scalar");
  if (!rn.needs_grad) return;  // nothing depends on parameters
  rn.grad.v[0] = 1.0f;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.back) n.back(*this);
  }
}

double grad_check(const std::function<Val(Tape&, Val)>& f, const Tensor& x, float eps) {
  Parameter p("gradcheck.x", x);
  Tape t;
  Val y = f(t, t.param(p));
  t.backward(y);
  Tensor gad = p.grad;

  double worst = 0.0;
  Tensor xp = x;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    float orig = xp.v[i];
    xp.v[i] = orig + eps;
    Tape tp(false);
    double fp = tp.scalar(f(tp, tp.constant(xp)));
    xp.v[i] = orig - eps;
    Tape tm(false);
    double fm = tm.scalar(f(tm, tm.constant(xp)));
    xp.v[i] = orig;
    double gfd = (fp - fm) / (2.0 * static_cast<double>(eps));
    double err = std::abs(static_cast<double>(gad.v[i]) - gfd) / std::max(1.0, std::abs(gfd));
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check_param(const std::function<Val(Tape&)>& f, Parameter& p, float eps) {
  p.zero_grad();
  Tape t;
  Val y = f(t);
  t.backward(y);
  Tensor gad = p.grad;

  double worst = 0.0;
  for (std::size_t i = 0; i < p.value.v.size(); ++i) {
    float orig = p.value.v[i];
    p.value.v[i] = orig + eps;
    Tape tp(false);
    double fp = tp.scalar(f(tp));
    p.value.v[i] = orig - eps;
    Tape tm(false);
    double fm = tm.scalar(f(tm));
    p.value.v[i] = orig;
    double gfd = (fp - fm) / (2.0 * static_cast<double>(eps));
    double err = std::abs(static_cast<double>(gad.v[i]) - gfd) / std::max(1.0, std::abs(gfd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace molgen

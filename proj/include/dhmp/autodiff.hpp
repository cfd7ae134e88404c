#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation in execution order; Tensor is a cheap handle
// (tape pointer + node id). Tape::backward walks the records once in reverse
// and accumulates into per-node gradient buffers, then adds parameter-leaf
// gradients into Parameter::grad. Every op checks its forward value for
// NaN/Inf and throws NumericError naming the op.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dhmp/tensor_types.hpp"

namespace dhmp::ad {

using IndexVec = std::vector<std::int32_t>;

/// Trainable matrix. Owned outside any tape; a tape references it through
/// Tape::parameter and writes its gradient on backward.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

class Tape;

class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  /// Gradient after backward; empty if none reached this node.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient and the forward value of the recorded node.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out,
                                        const Matrix& value_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  Tensor variable(Matrix value);
  Tensor parameter(Parameter& p);

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and propagates.
  void backward(const Tensor& output);

  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Tensor record(const char* op, Matrix value,
                std::initializer_list<Tensor> inputs, BackwardFn backward);
  Tensor record(const char* op, Matrix value, std::span<const Tensor> inputs,
                BackwardFn backward);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Zero-initialised on first use within a backward pass.
  Matrix& grad_buffer(std::size_t id);

 private:
  struct Node {
    const char* op;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

// ---- core ops --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
/// a (n x c) + bias (1 x c) broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// Multiplies row r of a (n x c) by s(r, 0), s is n x 1.
Tensor row_scale(const Tensor& a, const Tensor& s);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// Per-row normalisation with learned gain/bias (both 1 x c).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
/// out.row(k) = x.row(index[k]).
Tensor gather_rows(const Tensor& x, const IndexVec& index);
/// out.row(index[k]) += x.row(k); out has out_rows rows.
Tensor scatter_add_rows(const Tensor& x, const IndexVec& index,
                        Eigen::Index out_rows);
/// Column-wise softmax within contiguous runs of equal segment id.
/// segment_ids must be sorted non-decreasing.
Tensor segment_softmax(const Tensor& x, const IndexVec& segment_ids);
Tensor softmax_rows(const Tensor& x);
/// Sum over rows: (n x c) -> (1 x c).
Tensor sum_rows(const Tensor& x);
Tensor sum_all(const Tensor& x);
/// Mean squared difference over all entries, 1 x 1.
Tensor mse(const Tensor& a, const Tensor& b);
/// Forward value `hard`; backward passes the gradient to `soft` unchanged.
Tensor straight_through(const Tensor& soft, const Matrix& hard);

// ---- Gumbel-Softmax --------------------------------------------------------

struct GumbelSample {
  Tensor hard;  // n x 2 one-hot [keep, drop], straight-through to soft
  Tensor soft;  // n x 2 softmax((logits + noise) / tau)
};

/// g = -log(-log(u)) elementwise.
Matrix gumbel_from_uniform(const Matrix& u);

/// Two-class (keep, drop) straight-through Gumbel-Softmax. `gumbel_noise` is
/// n x 2; argmax ties resolve to keep.
GumbelSample gumbel_softmax_st(const Tensor& logits_keep,
                               const Tensor& logits_drop, double temperature,
                               const Matrix& gumbel_noise);

// ---- optimiser -------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, AdamConfig config = {});

  /// Bias-corrected update from the current Parameter::grad values.
  void step(double lr);

  std::int64_t step_count() const { return step_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void restore(std::int64_t step, std::vector<Matrix> m, std::vector<Matrix> v);
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t step_ = 0;
};

}  // namespace dhmp::ad

#include "dhmp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dhmp/error.hpp"

namespace dhmp::ad {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw InvalidArgument(std::string(op) + ": shape mismatch " + shape(a) +
                        " vs " + shape(b));
}

void require_same_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (&a.tape() != &b.tape()) {
    throw InvalidArgument(std::string(op) + ": operands live on different tapes");
  }
}

}  // namespace

// ---- Tensor / Tape ---------------------------------------------------------

const Matrix& Tensor::value() const { return tape_->value(id_); }
const Matrix& Tensor::grad() const { return tape_->grad(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

Tensor Tape::constant(Matrix value) {
  return record("constant", std::move(value), {}, nullptr);
}

Tensor Tape::variable(Matrix value) {
  Tensor t = record("variable", std::move(value), {}, nullptr);
  nodes_[t.id()].requires_grad = true;
  return t;
}

Tensor Tape::parameter(Parameter& p) {
  Tensor t = record("parameter", p.value, {}, nullptr);
  nodes_[t.id()].requires_grad = true;
  nodes_[t.id()].param = &p;
  return t;
}

Tensor Tape::record(const char* op, Matrix value,
                    std::initializer_list<Tensor> inputs, BackwardFn backward) {
  return record(op, std::move(value),
                std::span<const Tensor>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Tensor Tape::record(const char* op, Matrix value,
                    std::span<const Tensor> inputs, BackwardFn backward) {
  if (!value.allFinite()) {
    throw NumericError(std::string("op '") + op +
                       "' produced a non-finite value");
  }
  bool needs_grad = false;
  for (const auto& in : inputs) {
    if (in.tape_ != this) {
      throw InvalidArgument(std::string(op) + ": input from a different tape");
    }
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (!n.has_grad) {
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(const Tensor& output) {
  if (output.tape_ != this) {
    throw InvalidArgument("backward: output belongs to a different tape");
  }
  if (output.rows() != 1 || output.cols() != 1) {
    throw InvalidArgument("backward: output must be 1x1, got " +
                          shape(output.value()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
    if (n.param) n.param->grad.setZero(n.param->value.rows(), n.param->value.cols());
  }
  if (!nodes_[output.id_].requires_grad) return;
  grad_buffer(output.id_).setOnes();
  for (std::size_t k = output.id_ + 1; k-- > 0;) {
    auto& n = nodes_[k];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad, n.value);
  }
  for (auto& n : nodes_) {
    if (n.param && n.has_grad) n.param->grad += n.grad;
  }
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape("matmul", a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Matrix out;
  out.noalias() = a.value() * b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b},
                         [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                           if (t.requires_grad(ia)) {
                             t.grad_buffer(ia).noalias() +=
                                 g * t.value(ib).transpose();
                           }
                           if (t.requires_grad(ib)) {
                             t.grad_buffer(ib).noalias() +=
                                 t.value(ia).transpose() * g;
                           }
                         });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_tape("add", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("add", a.value(), b.value());
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("add", a.value() + b.value(), {a, b},
                         [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                           if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
                           if (t.requires_grad(ib)) t.grad_buffer(ib) += g;
                         });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_same_tape("add_bias", a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    shape_error("add_bias", a.value(), bias.value());
  }
  Matrix out = a.value();
  out.rowwise() += bias.value().row(0);
  const auto ia = a.id(), ib = bias.id();
  return a.tape().record("add_bias", std::move(out), {a, bias},
                         [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                           if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
                           if (t.requires_grad(ib)) {
                             t.grad_buffer(ib) += g.colwise().sum();
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_tape("sub", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("sub", a.value(), b.value());
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("sub", a.value() - b.value(), {a, b},
                         [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                           if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
                           if (t.requires_grad(ib)) t.grad_buffer(ib) -= g;
                         });
}

Tensor scale(const Tensor& a, double s) {
  const auto ia = a.id();
  return a.tape().record("scale", a.value() * s, {a},
                         [ia, s](Tape& t, const Matrix& g, const Matrix&) {
                           t.grad_buffer(ia) += s * g;
                         });
}

Tensor relu(const Tensor& a) {
  const auto ia = a.id();
  return a.tape().record(
      "relu", a.value().cwiseMax(0.0), {a}, [ia](Tape& t, const Matrix& g, const Matrix&) {
        t.grad_buffer(ia).array() +=
            (t.value(ia).array() > 0.0).select(g.array(), 0.0);
      });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const auto ia = a.id();
  return a.tape().record(
      "sigmoid", std::move(out), {a},
      [ia](Tape& t, const Matrix& g, const Matrix& y) {
        t.grad_buffer(ia).array() += g.array() * y.array() * (1.0 - y.array());
      });
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
  require_same_tape("elementwise_mul", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("elementwise_mul", a.value(), b.value());
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(
      "elementwise_mul", a.value().cwiseProduct(b.value()), {a, b},
      [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(ia)) {
          t.grad_buffer(ia) += g.cwiseProduct(t.value(ib));
        }
        if (t.requires_grad(ib)) {
          t.grad_buffer(ib) += g.cwiseProduct(t.value(ia));
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_tape("div", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("div", a.value(), b.value());
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(
      "div", a.value().cwiseQuotient(b.value()), {a, b},
      [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
        const auto& bv = t.value(ib);
        if (t.requires_grad(ia)) t.grad_buffer(ia) += g.cwiseQuotient(bv);
        if (t.requires_grad(ib)) {
          t.grad_buffer(ib).array() -= g.array() * t.value(ia).array() /
                                       (bv.array() * bv.array());
        }
      });
}

Tensor row_scale(const Tensor& a, const Tensor& s) {
  require_same_tape("row_scale", a, s);
  if (s.cols() != 1 || s.rows() != a.rows()) {
    shape_error("row_scale", a.value(), s.value());
  }
  Matrix out = a.value();
  out.array().colwise() *= s.value().col(0).array();
  const auto ia = a.id(), is = s.id();
  return a.tape().record(
      "row_scale", std::move(out), {a, s}, [ia, is](Tape& t, const Matrix& g, const Matrix&) {
        if (t.requires_grad(ia)) {
          t.grad_buffer(ia).array() +=
              g.array().colwise() * t.value(is).col(0).array();
        }
        if (t.requires_grad(is)) {
          t.grad_buffer(is).col(0) +=
              g.cwiseProduct(t.value(ia)).rowwise().sum();
        }
      });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  Tape& tape = parts.front().tape();
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (&p.tape() != &tape) {
      throw InvalidArgument("concat_cols: inputs on different tapes");
    }
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return tape.record("concat_cols", std::move(out), parts,
                     [ids, widths](Tape& t, const Matrix& g, const Matrix&) {
                       Eigen::Index off = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (t.requires_grad(ids[k])) {
                           t.grad_buffer(ids[k]) += g.middleCols(off, widths[k]);
                         }
                         off += widths[k];
                       }
                     });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw InvalidArgument("slice_cols: range [" + std::to_string(start) + ", " +
                          std::to_string(start + count) + ") out of " +
                          shape(a.value()));
  }
  const auto ia = a.id();
  return a.tape().record("slice_cols", a.value().middleCols(start, count), {a},
                         [ia, start, count](Tape& t, const Matrix& g, const Matrix&) {
                           t.grad_buffer(ia).middleCols(start, count) += g;
                         });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw InvalidArgument("slice_rows: range out of " + shape(a.value()));
  }
  const auto ia = a.id();
  return a.tape().record("slice_rows", a.value().middleRows(start, count), {a},
                         [ia, start, count](Tape& t, const Matrix& g, const Matrix&) {
                           t.grad_buffer(ia).middleRows(start, count) += g;
                         });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_same_tape("layer_norm", x, gain);
  require_same_tape("layer_norm", x, bias);
  const auto c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 ||
      bias.cols() != c) {
    shape_error("layer_norm", x.value(), gain.value());
  }
  const auto& xv = x.value();
  Matrix xhat(xv.rows(), c);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);

  Tape& tape = x.tape();
  // Saved intermediates live on the tape as a constant.
  Tensor saved_xhat = tape.constant(std::move(xhat));
  const auto ix = x.id(), ig = gain.id(), ib = bias.id(), ih = saved_xhat.id();
  return tape.record(
      "layer_norm", std::move(out), {x, gain, bias},
      [ix, ig, ib, ih, inv_std = std::move(inv_std)](Tape& t, const Matrix& g, const Matrix&) {
        const auto& xh = t.value(ih);
        if (t.requires_grad(ib)) t.grad_buffer(ib) += g.colwise().sum();
        if (t.requires_grad(ig)) {
          t.grad_buffer(ig) += g.cwiseProduct(xh).colwise().sum();
        }
        if (t.requires_grad(ix)) {
          Matrix dxhat = g;
          dxhat.array().rowwise() *= t.value(ig).row(0).array();
          auto& gx = t.grad_buffer(ix);
          const double inv_c = 1.0 / static_cast<double>(g.cols());
          for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const double m1 = dxhat.row(r).sum() * inv_c;
            const double m2 = dxhat.row(r).dot(xh.row(r)) * inv_c;
            gx.row(r).array() +=
                inv_std(r) *
                (dxhat.row(r).array() - m1 - xh.row(r).array() * m2);
          }
        }
      });
}

Tensor gather_rows(const Tensor& x, const IndexVec& index) {
  const auto& xv = x.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    const auto r = index[k];
    if (r < 0 || r >= xv.rows()) {
      throw InvalidArgument("gather_rows: index " + std::to_string(r) +
                            " out of range for " + shape(xv));
    }
    out.row(static_cast<Eigen::Index>(k)) = xv.row(r);
  }
  const auto ix = x.id();
  return x.tape().record("gather_rows", std::move(out), {x},
                         [ix, index](Tape& t, const Matrix& g, const Matrix&) {
                           auto& gx = t.grad_buffer(ix);
                           for (std::size_t k = 0; k < index.size(); ++k) {
                             gx.row(index[k]) +=
                                 g.row(static_cast<Eigen::Index>(k));
                           }
                         });
}

Tensor scatter_add_rows(const Tensor& x, const IndexVec& index,
                        Eigen::Index out_rows) {
  const auto& xv = x.value();
  if (static_cast<Eigen::Index>(index.size()) != xv.rows()) {
    throw InvalidArgument("scatter_add_rows: index length " +
                          std::to_string(index.size()) + " vs " + shape(xv));
  }
  Matrix out = Matrix::Zero(out_rows, xv.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    const auto r = index[k];
    if (r < 0 || r >= out_rows) {
      throw InvalidArgument("scatter_add_rows: index " + std::to_string(r) +
                            " out of range " + std::to_string(out_rows));
    }
    out.row(r) += xv.row(static_cast<Eigen::Index>(k));
  }
  const auto ix = x.id();
  return x.tape().record("scatter_add_rows", std::move(out), {x},
                         [ix, index](Tape& t, const Matrix& g, const Matrix&) {
                           auto& gx = t.grad_buffer(ix);
                           for (std::size_t k = 0; k < index.size(); ++k) {
                             gx.row(static_cast<Eigen::Index>(k)) +=
                                 g.row(index[k]);
                           }
                         });
}

Tensor segment_softmax(const Tensor& x, const IndexVec& segment_ids) {
  const auto& xv = x.value();
  const auto n = xv.rows();
  if (static_cast<Eigen::Index>(segment_ids.size()) != n) {
    throw InvalidArgument("segment_softmax: segment_ids length mismatch");
  }
  if (!std::is_sorted(segment_ids.begin(), segment_ids.end())) {
    throw InvalidArgument("segment_softmax: segment_ids must be sorted");
  }
  // Segment boundaries.
  std::vector<Eigen::Index> starts;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (r == 0 || segment_ids[r] != segment_ids[r - 1]) starts.push_back(r);
  }
  starts.push_back(n);

  Matrix out(n, xv.cols());
  for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
    const auto b = starts[s];
    const auto len = starts[s + 1] - b;
    auto block = xv.middleRows(b, len);
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
      const double mx = block.col(c).maxCoeff();
      auto e = (block.col(c).array() - mx).exp();
      out.middleRows(b, len).col(c) = e / e.sum();
    }
  }
  const auto ix = x.id();
  return x.tape().record(
      "segment_softmax", std::move(out), {x},
      [ix, starts](Tape& t, const Matrix& g, const Matrix& y) {
        auto& gx = t.grad_buffer(ix);
        for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
          const auto b = starts[s];
          const auto len = starts[s + 1] - b;
          for (Eigen::Index c = 0; c < y.cols(); ++c) {
            const double dot =
                y.middleRows(b, len).col(c).dot(g.middleRows(b, len).col(c));
            gx.middleRows(b, len).col(c).array() +=
                y.middleRows(b, len).col(c).array() *
                (g.middleRows(b, len).col(c).array() - dot);
          }
        }
      });
}

Tensor softmax_rows(const Tensor& x) {
  const auto& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mx = xv.row(r).maxCoeff();
    auto e = (xv.row(r).array() - mx).exp();
    out.row(r) = e / e.sum();
  }
  const auto ix = x.id();
  return x.tape().record("softmax_rows", std::move(out), {x},
                         [ix](Tape& t, const Matrix& g, const Matrix& y) {
                           auto& gx = t.grad_buffer(ix);
                           for (Eigen::Index r = 0; r < y.rows(); ++r) {
                             const double dot = y.row(r).dot(g.row(r));
                             gx.row(r).array() +=
                                 y.row(r).array() * (g.row(r).array() - dot);
                           }
                         });
}

Tensor sum_rows(const Tensor& x) {
  const auto ix = x.id();
  return x.tape().record("sum_rows", x.value().colwise().sum(), {x},
                         [ix](Tape& t, const Matrix& g, const Matrix&) {
                           t.grad_buffer(ix).rowwise() += g.row(0);
                         });
}

Tensor sum_all(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  const auto ix = x.id();
  return x.tape().record("sum_all", std::move(out), {x},
                         [ix](Tape& t, const Matrix& g, const Matrix&) {
                           t.grad_buffer(ix).array() += g(0, 0);
                         });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_tape("mse", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    shape_error("mse", a.value(), b.value());
  }
  const double count = static_cast<double>(a.value().size());
  if (count == 0) throw InvalidArgument("mse: empty input");
  Matrix out(1, 1);
  out(0, 0) = (a.value() - b.value()).squaredNorm() / count;
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(
      "mse", std::move(out), {a, b}, [ia, ib, count](Tape& t, const Matrix& g, const Matrix&) {
        const Matrix d = (2.0 * g(0, 0) / count) * (t.value(ia) - t.value(ib));
        if (t.requires_grad(ia)) t.grad_buffer(ia) += d;
        if (t.requires_grad(ib)) t.grad_buffer(ib) -= d;
      });
}

Tensor straight_through(const Tensor& soft, const Matrix& hard) {
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols()) {
    shape_error("straight_through", soft.value(), hard);
  }
  const auto is = soft.id();
  return soft.tape().record("straight_through", hard, {soft},
                            [is](Tape& t, const Matrix& g, const Matrix&) {
                              t.grad_buffer(is) += g;
                            });
}

// ---- Gumbel-Softmax --------------------------------------------------------

Matrix gumbel_from_uniform(const Matrix& u) {
  if ((u.array() <= 0.0).any() || (u.array() >= 1.0).any()) {
    throw InvalidArgument("gumbel_from_uniform: u must lie in (0, 1)");
  }
  return (-(-u.array().log()).log()).matrix();
}

GumbelSample gumbel_softmax_st(const Tensor& logits_keep,
                               const Tensor& logits_drop, double temperature,
                               const Matrix& gumbel_noise) {
  if (!(temperature > 0.0)) {
    throw InvalidArgument("gumbel_softmax_st: temperature must be > 0");
  }
  if (logits_keep.cols() != 1 || logits_drop.cols() != 1 ||
      logits_keep.rows() != logits_drop.rows()) {
    shape_error("gumbel_softmax_st", logits_keep.value(), logits_drop.value());
  }
  if (gumbel_noise.rows() != logits_keep.rows() || gumbel_noise.cols() != 2) {
    shape_error("gumbel_softmax_st", logits_keep.value(), gumbel_noise);
  }
  Tape& tape = logits_keep.tape();
  Tensor logits = concat_cols({logits_keep, logits_drop});
  Tensor perturbed = add(logits, tape.constant(gumbel_noise));
  Tensor soft = softmax_rows(scale(perturbed, 1.0 / temperature));

  const auto& sv = soft.value();
  Matrix hard = Matrix::Zero(sv.rows(), 2);
  for (Eigen::Index r = 0; r < sv.rows(); ++r) {
    hard(r, sv(r, 0) >= sv(r, 1) ? 0 : 1) = 1.0;
  }
  return {straight_through(soft, hard), soft};
}

// ---- Adam ------------------------------------------------------------------

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  if (!(lr > 0.0)) throw InvalidArgument("adam_step: lr must be > 0");
  for (auto* p : params_) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw InvalidArgument("adam_step: gradient shape mismatch for '" +
                            p->name + "'");
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    m_[k] = b1 * m_[k] + (1.0 - b1) * p.grad;
    v_[k] = b2 * v_[k] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[k].array() / c1) /
                       ((v_[k].array() / c2).sqrt() + config_.eps);
  }
}

void Adam::restore(std::int64_t step, std::vector<Matrix> m,
                   std::vector<Matrix> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw InvalidArgument("Adam::restore: moment count mismatch");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (m[k].rows() != params_[k]->value.rows() ||
        m[k].cols() != params_[k]->value.cols() ||
        v[k].rows() != m[k].rows() || v[k].cols() != m[k].cols()) {
      throw InvalidArgument("Adam::restore: moment shape mismatch");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace dhmp::ad

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmap/errors.hpp"

namespace tmap {

// Dense matrix of the scalar the caller picked: float for training speed,
// double for gradient checks. All tensors here are rank 2; vectors are 1 x d.
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <class S>
void check_finite(const Mat<S>& m, const char* op) {
#ifndef NDEBUG
  if (!m.allFinite()) {
    throw ContractError(std::string("non-finite values produced by ") + op);
  }
#else
  (void)m;
  (void)op;
#endif
}

}  // namespace detail

template <class Scalar>
class Tape;

// Handle to one tape node. Cheap to copy; valid as long as its tape lives.
template <class Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Mat<Scalar>& value() const;
  const Mat<Scalar>& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Reverse-mode tape. Every op appends a node holding its result and a closure
// that pushes the node's gradient into its inputs. Creation order is a
// topological order of the dataflow graph, so backward() is one reverse sweep
// that visits each node exactly once. Gradients are zero-initialized, which
// makes "parameter not reachable from the loss" read back as a zero gradient
// rather than garbage.
template <class Scalar>
class Tape {
 public:
  // A closure receives the tape and the id of the node it belongs to, so it
  // can read that node's gradient and accumulate into its inputs.
  using BackwardFn = std::function<void(Tape&, int)>;

  Var<Scalar> leaf(Mat<Scalar> value) { return emplace(std::move(value), {}); }
  Var<Scalar> constant(Mat<Scalar> value) { return emplace(std::move(value), {}); }

  const Mat<Scalar>& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Mat<Scalar>& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  Mat<Scalar>& grad_ref(int id) { return nodes_[static_cast<size_t>(id)].grad; }

  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = seed and sweeps the tape in reverse. The seed is
  // how callers weight one sample's contribution inside a batch.
  void backward(Var<Scalar> loss, Scalar seed = Scalar(1)) {
    if (loss.tape != this) throw ContractError("loss belongs to another tape");
    const Mat<Scalar>& v = val(loss.id);
    if (v.rows() != 1 || v.cols() != 1) {
      throw ContractError("backward needs a scalar loss, got " +
                          detail::shape_str(v.rows(), v.cols()));
    }
    if (backward_done_) throw ContractError("backward already ran on this tape");
    backward_done_ = true;
    grad_ref(loss.id)(0, 0) = seed;
    for (size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(*this, static_cast<int>(i));
    }
  }

  Var<Scalar> emplace(Mat<Scalar> value, BackwardFn backward) {
    Node n;
    n.grad = Mat<Scalar>::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

 private:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    BackwardFn backward;  // empty for leaves and constants
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

template <class Scalar>
const Mat<Scalar>& Var<Scalar>::value() const { return tape->val(id); }
template <class Scalar>
const Mat<Scalar>& Var<Scalar>::grad() const { return tape->grad(id); }

namespace detail {

template <class S>
Tape<S>& same_tape(Var<S> a, Var<S> b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape;
}

template <class S>
void require_same_shape(Var<S> a, Var<S> b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes disagree: " +
                     shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
}

}  // namespace detail

// ---- ops --------------------------------------------------------------

// C = A * B
template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree: " +
                     detail::shape_str(a.rows(), a.cols()) + " * " +
                     detail::shape_str(b.rows(), b.cols()));
  }
  Mat<S> c = a.value() * b.value();
  detail::check_finite(c, "matmul");
  return t.emplace(std::move(c), [ia = a.id, ib = b.id](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    t.grad_ref(ia).noalias() += g * t.val(ib).transpose();
    t.grad_ref(ib).noalias() += t.val(ia).transpose() * g;
  });
}

// C = A * B^T; saves materializing transposes in attention scores.
template <class S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions disagree: " +
                     detail::shape_str(a.rows(), a.cols()) + " * " +
                     detail::shape_str(b.rows(), b.cols()) + "^T");
  }
  Mat<S> c = a.value() * b.value().transpose();
  detail::check_finite(c, "matmul_nt");
  return t.emplace(std::move(c), [ia = a.id, ib = b.id](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    t.grad_ref(ia).noalias() += g * t.val(ib);
    t.grad_ref(ib).noalias() += g.transpose() * t.val(ia);
  });
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b, "add");
  detail::require_same_shape(a, b, "add");
  Mat<S> c = a.value() + b.value();
  return t.emplace(std::move(c), [ia = a.id, ib = b.id](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    t.grad_ref(ia) += g;
    t.grad_ref(ib) += g;
  });
}

// C = A with row vector b (1 x cols) added to every row: the bias pattern.
template <class S>
Var<S> add_rowvec(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b, "add_rowvec");
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw ShapeError("add_rowvec: need [1x" + std::to_string(a.cols()) + "] bias, got " +
                     detail::shape_str(b.rows(), b.cols()));
  }
  Mat<S> c = a.value().rowwise() + b.value().row(0);
  return t.emplace(std::move(c), [ia = a.id, ib = b.id](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    t.grad_ref(ia) += g;
    t.grad_ref(ib) += g.colwise().sum();
  });
}

// C = A + M for a plain matrix M (positional encodings, attention masks).
template <class S>
Var<S> add_const(Var<S> a, const Mat<S>& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols()) {
    throw ShapeError("add_const: shapes disagree: " + detail::shape_str(a.rows(), a.cols()) +
                     " vs " + detail::shape_str(m.rows(), m.cols()));
  }
  Mat<S> c = a.value() + m;
  return a.tape->emplace(std::move(c), [ia = a.id](Tape<S>& t, int out) {
    t.grad_ref(ia) += t.grad(out);
  });
}

template <class S>
Var<S> scale(Var<S> a, S factor) {
  Mat<S> c = a.value() * factor;
  return a.tape->emplace(std::move(c), [ia = a.id, factor](Tape<S>& t, int out) {
    t.grad_ref(ia) += t.grad(out) * factor;
  });
}

template <class S>
Var<S> hadamard(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b, "hadamard");
  detail::require_same_shape(a, b, "hadamard");
  Mat<S> c = a.value().cwiseProduct(b.value());
  return t.emplace(std::move(c), [ia = a.id, ib = b.id](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    t.grad_ref(ia) += g.cwiseProduct(t.val(ib));
    t.grad_ref(ib) += g.cwiseProduct(t.val(ia));
  });
}

template <class S>
Var<S> relu(Var<S> a) {
  Mat<S> c = a.value().cwiseMax(S(0));
  return a.tape->emplace(std::move(c), [ia = a.id](Tape<S>& t, int out) {
    // Subgradient 0 at the kink.
    t.grad_ref(ia) += t.grad(out).cwiseProduct(
        (t.val(ia).array() > S(0)).template cast<S>().matrix());
  });
}

// Row-wise softmax with max subtraction for stability. Masked entries should
// arrive as large negative scores (see attention_mask) and come out as 0.
template <class S>
Var<S> softmax_rows(Var<S> a) {
  Mat<S> y = a.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    S m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  detail::check_finite(y, "softmax_rows");
  return a.tape->emplace(std::move(y), [ia = a.id](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    const Mat<S>& y = t.val(out);
    Mat<S>& ga = t.grad_ref(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      S dot = g.row(r).cwiseProduct(y.row(r)).sum();
      ga.row(r) += (y.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
  });
}

// Per-row layer norm with learned gain/offset (1 x d each):
//   y = (x - mean) / sqrt(var + eps) .* gamma + beta
template <class S>
Var<S> layer_norm_rows(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-5)) {
  Tape<S>& t = detail::same_tape(x, gamma, "layer_norm_rows");
  detail::same_tape(x, beta, "layer_norm_rows");
  Eigen::Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ShapeError("layer_norm_rows: gamma/beta must be [1x" + std::to_string(d) + "], got " +
                     detail::shape_str(gamma.rows(), gamma.cols()) + " and " +
                     detail::shape_str(beta.rows(), beta.cols()));
  }
  const Mat<S>& xv = x.value();
  Mat<S> xhat(xv.rows(), d);
  Mat<S> inv_std(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    S mean = xv.row(r).mean();
    S var = (xv.row(r).array() - mean).square().mean();
    S is = S(1) / std::sqrt(var + eps);
    inv_std(r, 0) = is;
    xhat.row(r) = (xv.row(r).array() - mean) * is;
  }
  Mat<S> y = xhat;
  y.array().rowwise() *= gamma.value().row(0).array();
  y.array().rowwise() += beta.value().row(0).array();
  detail::check_finite(y, "layer_norm_rows");
  return t.emplace(std::move(y), [ix = x.id, ig = gamma.id, ib = beta.id, xhat,
                                  inv_std](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    t.grad_ref(ib) += g.colwise().sum();
    t.grad_ref(ig) += g.cwiseProduct(xhat).colwise().sum();
    Mat<S>& gx = t.grad_ref(ix);
    const Mat<S>& gamma_v = t.val(ig);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      Mat<S> dxhat = g.row(r).cwiseProduct(gamma_v.row(0));
      S m1 = dxhat.mean();
      S m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
      gx.row(r) += (inv_std(r, 0) *
                    (dxhat.array() - m1 - xhat.row(r).array() * m2)).matrix();
    }
  });
}

// Y[i, :] = table[ids[i], :]; gradient scatter-adds back into the table.
template <class S>
Var<S> embed_rows(Var<S> table, std::span<const int> ids) {
  const Mat<S>& tv = table.value();
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(tv.rows())) {
      throw InputError("token id " + std::to_string(id) + " out of vocabulary of size " +
                       std::to_string(tv.rows()));
    }
  }
  Mat<S> y(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (size_t i = 0; i < ids.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return table.tape->emplace(std::move(y), [it = table.id,
                                            ids = std::move(ids_copy)](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    Mat<S>& gt = t.grad_ref(it);
    for (size_t i = 0; i < ids.size(); ++i) {
      gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

// Column slice: Y = A[:, start : start+n]. Used to split attention heads.
template <class S>
Var<S> slice_cols(Var<S> a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n <= 0 || start + n > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + n) + ") out of " +
                     detail::shape_str(a.rows(), a.cols()));
  }
  Mat<S> y = a.value().middleCols(start, n);
  return a.tape->emplace(std::move(y), [ia = a.id, start, n](Tape<S>& t, int out) {
    t.grad_ref(ia).middleCols(start, n) += t.grad(out);
  });
}

// Y = [A_1 | A_2 | ... | A_h]. Used to merge attention heads.
template <class S>
Var<S> concat_cols(std::span<const Var<S>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  Tape<S>& t = *parts[0].tape;
  Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var<S>& p : parts) {
    detail::same_tape(parts[0], p, "concat_cols");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row counts disagree: " +
                       detail::shape_str(rows, parts[0].cols()) + " vs " +
                       detail::shape_str(p.rows(), p.cols()));
    }
    cols += p.cols();
  }
  Mat<S> y(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const Var<S>& p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    ids.push_back(p.id);
    widths.push_back(p.cols());
    at += p.cols();
  }
  return t.emplace(std::move(y), [ids = std::move(ids),
                                  widths = std::move(widths)](Tape<S>& t, int out) {
    const Mat<S>& g = t.grad(out);
    Eigen::Index at = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      t.grad_ref(ids[i]) += g.middleCols(at, widths[i]);
      at += widths[i];
    }
  });
}

// Scalar sum of all entries; handy for building test losses.
template <class S>
Var<S> sum_all(Var<S> a) {
  Mat<S> y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape->emplace(std::move(y), [ia = a.id](Tape<S>& t, int out) {
    t.grad_ref(ia).array() += t.grad(out)(0, 0);
  });
}

// Mean cross-entropy between logit rows and integer targets, skipping rows
// whose mask entry is 0 (padding). Fused log-softmax keeps it stable. The
// mean is over unmasked rows, so a batch-level mean over all positions is
// recovered by seeding backward with row_count / batch_row_count.
template <class S>
Var<S> cross_entropy_rows(Var<S> logits, std::span<const int> targets,
                          std::span<const uint8_t> mask) {
  const Mat<S>& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows() ||
      mask.size() != targets.size()) {
    throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                     " targets / " + std::to_string(mask.size()) + " mask entries for " +
                     detail::shape_str(z.rows(), z.cols()));
  }
  Eigen::Index n = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++n;
    if (targets[i] < 0 || targets[i] >= z.cols()) {
      throw InputError("target id " + std::to_string(targets[i]) +
                       " out of vocabulary of size " + std::to_string(z.cols()));
    }
  }
  if (n == 0) throw ContractError("cross_entropy_rows: all rows masked out");

  // probs saved for backward; loss accumulated in double regardless of S so
  // long sequences don't lose mass to float summation.
  Mat<S> probs = Mat<S>::Zero(z.rows(), z.cols());
  double loss = 0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    S m = z.row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (z.row(r).array() - m).exp();
    S sum = e.sum();
    probs.row(r) = (e / sum).matrix();
    loss += static_cast<double>(std::log(sum) + m - z(r, targets[static_cast<size_t>(r)]));
  }
  Mat<S> y(1, 1);
  y(0, 0) = static_cast<S>(loss / static_cast<double>(n));
  detail::check_finite(y, "cross_entropy_rows");

  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<uint8_t> msk(mask.begin(), mask.end());
  return logits.tape->emplace(
      std::move(y), [iz = logits.id, probs = std::move(probs), tgt = std::move(tgt),
                     msk = std::move(msk), n](Tape<S>& t, int out) {
        S g = t.grad(out)(0, 0) / static_cast<S>(n);
        Mat<S>& gz = t.grad_ref(iz);
        for (Eigen::Index r = 0; r < gz.rows(); ++r) {
          if (!msk[static_cast<size_t>(r)]) continue;
          gz.row(r) += probs.row(r) * g;
          gz(r, tgt[static_cast<size_t>(r)]) -= g;
        }
      });
}

}  // namespace tmap

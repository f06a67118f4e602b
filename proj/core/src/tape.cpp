#include "dualflood/tape.hpp"

#include <stdexcept>
#include <utility>

namespace dualflood::ad {

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::invalid_argument("Var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.touched) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!n.touched) {
    n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
    n.touched = true;
  }
  n.adjoint += g;
}

void Tape::backward(Var root) {
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("backward() requires a 1x1 root");
  for (auto& n : nodes_) {
    n.touched = false;
    n.adjoint.resize(0, 0);
  }
  r.adjoint = Matrix::Constant(1, 1, 1.0);
  r.touched = true;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.touched || !n.backward || !n.requires_grad) continue;
    n.backward(*this, n.adjoint);
  }
}

void Tape::clear() { nodes_.clear(); }

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  Matrix out = value(a) + value(b);
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  Matrix out = value(a) - value(b);
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var Tape::scale(Var a, double c) {
  Matrix out = value(a) * c;
  return push(std::move(out), node(a).requires_grad, [a, c](Tape& t, const Matrix& g) {
    t.accumulate(a, c * g);
  });
}

Var Tape::mul_elem(Var a, Var b) {
  check_same_shape(value(a), value(b), "mul_elem");
  Matrix out = value(a).cwiseProduct(value(b));
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(b)));
    t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows())
    throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out = value(a) * value(b);
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g * t.value(b).transpose());
    t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var Tape::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  return push(std::move(out), node(a).requires_grad, [a](Tape& t, const Matrix& g) {
    const Matrix mask = (t.value(a).array() > 0.0).cast<double>();
    t.accumulate(a, g.cwiseProduct(mask));
  });
}

Var Tape::abs(Var a) {
  Matrix out = value(a).cwiseAbs();
  return push(std::move(out), node(a).requires_grad, [a](Tape& t, const Matrix& g) {
    // sign(0) = 0
    const Matrix s = ((t.value(a).array() > 0.0).cast<double>() -
                      (t.value(a).array() < 0.0).cast<double>())
                         .matrix();
    t.accumulate(a, g.cwiseProduct(s));
  });
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty block list");
  const Eigen::Index rows = value(xs[0]).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var v : xs) {
    if (value(v).rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += value(v).cols();
    rg = rg || node(v).requires_grad;
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var v : xs) {
    out.middleCols(at, value(v).cols()) = value(v);
    at += value(v).cols();
  }
  std::vector<Var> blocks = xs;
  return push(std::move(out), rg, [blocks](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (Var v : blocks) {
      const Eigen::Index w = t.value(v).cols();
      t.accumulate(v, g.middleCols(at, w));
      at += w;
    }
  });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Matrix& src = value(a);
  Matrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= src.rows()) throw std::invalid_argument("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = src.row(idx[r]);
  }
  return push(std::move(out), node(a).requires_grad,
              [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
                Matrix acc = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
                for (std::size_t r = 0; r < idx.size(); ++r)
                  acc.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
                t.accumulate(a, acc);
              });
}

Var Tape::scatter_add_rows(Var a, std::vector<int> idx, int num_rows) {
  const Matrix& src = value(a);
  if (static_cast<Eigen::Index>(idx.size()) != src.rows())
    throw std::invalid_argument("scatter_add_rows: index count must equal row count");
  Matrix out = Matrix::Zero(num_rows, src.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= num_rows) throw std::invalid_argument("scatter_add_rows: index out of range");
    out.row(idx[r]) += src.row(static_cast<Eigen::Index>(r));
  }
  return push(std::move(out), node(a).requires_grad,
              [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
                Matrix acc(static_cast<Eigen::Index>(idx.size()), g.cols());
                for (std::size_t r = 0; r < idx.size(); ++r)
                  acc.row(static_cast<Eigen::Index>(r)) = g.row(idx[r]);
                t.accumulate(a, acc);
              });
}

Var Tape::affine_cols(Var a, Eigen::VectorXd scale, Eigen::VectorXd shift) {
  const Matrix& src = value(a);
  if (scale.size() != src.cols() || shift.size() != src.cols())
    throw std::invalid_argument("affine_cols: coefficient length must match column count");
  Matrix out = src;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    out.col(c) = out.col(c) * scale[c] + Eigen::VectorXd::Constant(out.rows(), shift[c]);
  return push(std::move(out), node(a).requires_grad,
              [a, scale = std::move(scale)](Tape& t, const Matrix& g) {
                Matrix acc = g;
                for (Eigen::Index c = 0; c < acc.cols(); ++c) acc.col(c) *= scale[c];
                t.accumulate(a, acc);
              });
}

Var Tape::sum(Var a) {
  Matrix out = Matrix::Constant(1, 1, value(a).sum());
  return push(std::move(out), node(a).requires_grad, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
  });
}

Var Tape::mean_sq(Var a) {
  const double n = static_cast<double>(value(a).size());
  Matrix out = Matrix::Constant(1, 1, value(a).array().square().sum() / n);
  return push(std::move(out), node(a).requires_grad, [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, (2.0 / n) * g(0, 0) * t.value(a));
  });
}

}  // namespace dualflood::ad

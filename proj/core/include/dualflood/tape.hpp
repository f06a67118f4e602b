#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

namespace dualflood::ad {

using Matrix = Eigen::MatrixXd;

/// Handle into a Tape. Cheap to copy; only valid for the tape that issued it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over dense double matrices.
///
/// Nodes are recorded in evaluation order, so reverse iteration is a valid
/// topological order for backpropagation. Gradients accumulate additively;
/// nodes whose ancestry contains no differentiable leaf skip their backward
/// pass entirely, which keeps value-only evaluation (e.g. inference rollouts)
/// close to the cost of plain Eigen arithmetic.
///
/// Subgradient conventions: relu'(0) = 0 and d|x|/dx at 0 = 0. An edge
/// carrying exactly zero flow therefore contributes no gradient.
class Tape {
 public:
  /// Differentiable leaf (weights, or states fed back during a rollout).
  Var leaf(Matrix value);
  /// Non-differentiable leaf (data, forcing, normalization constants).
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return node(v).value; }
  /// Gradient accumulated by the last backward(); zeros if untouched.
  Matrix grad(Var v) const;

  /// Backpropagates from a 1x1 root with seed 1.
  void backward(Var root);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  // ---- operations -------------------------------------------------------

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var mul_elem(Var a, Var b);
  Var matmul(Var a, Var b);
  Var relu(Var a);
  Var abs(Var a);

  /// Horizontal concatenation [a0 | a1 | ...]; all blocks share a row count.
  Var concat_cols(const std::vector<Var>& xs);
  /// out.row(r) = a.row(idx[r])
  Var gather_rows(Var a, std::vector<int> idx);
  /// out has num_rows rows; out.row(idx[r]) += a.row(r)
  Var scatter_add_rows(Var a, std::vector<int> idx, int num_rows);
  /// Per-column affine map: out.col(j) = a.col(j) * scale[j] + shift[j].
  Var affine_cols(Var a, Eigen::VectorXd scale, Eigen::VectorXd shift);

  /// Sum of all entries, as a 1x1 matrix.
  Var sum(Var a);
  /// Mean of squared entries, as a 1x1 matrix.
  Var mean_sq(Var a);

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;                                 // sized lazily
    std::function<void(Tape&, const Matrix&)> backward;
    bool requires_grad = false;
    bool touched = false;                           // adjoint initialized
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  void accumulate(Var v, const Matrix& g);
  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> backward);

  std::vector<Node> nodes_;
};

}  // namespace dualflood::ad

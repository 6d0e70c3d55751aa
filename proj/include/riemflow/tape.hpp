#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace riemflow::train {

/// Reverse-mode gradient tape over dense matrix values. Every node caches its
/// forward value; backward() accumulates adjoints from a 1x1 root.
class Tape {
 public:
  using Id = int;

  enum class Op : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    Sub,
    AddBias,     // a + b broadcast over columns (b is n x 1)
    CwiseMul,
    RowScale,    // diag(c) a, c constant
    Scale,       // s a
    AddConst,    // a + C
    Relu,
    Tanh,
    Exp,
    Transpose,
    ColSum,      // 1 x B
    SumAll,      // 1 x 1
    Cols,        // column block
    ConcatCols,
    GaussianNll,  // sum_j 0.5 r_j^T S^-1 r_j + 0.5 B logdet S
  };

  Id variable(const Eigen::MatrixXd& value);
  Id constant(const Eigen::MatrixXd& value);

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id add_bias(Id a, Id bias);
  Id cwise_mul(Id a, Id b);
  Id row_scale(Id a, const Eigen::VectorXd& c);
  Id scale(Id a, double s);
  Id add_const(Id a, const Eigen::MatrixXd& c);
  Id relu(Id a);
  Id tanh(Id a);
  Id exp(Id a);
  Id transpose(Id a);
  Id col_sum(Id a);
  Id sum_all(Id a);
  Id cols(Id a, int start, int count);
  Id concat_cols(Id a, Id b);
  /// Gaussian negative log-likelihood kernel of residual columns under
  /// covariance `cov` (without the 2*pi constant). Throws SingularCovariance.
  Id gaussian_nll(Id residuals, Id cov);

  const Eigen::MatrixXd& value(Id id) const { return nodes_[id].value; }
  const Eigen::MatrixXd& grad(Id id) const { return nodes_[id].grad; }
  double scalar(Id id) const { return nodes_[id].value(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 node. Gradients of earlier calls are cleared.
  void backward(Id root);

 private:
  struct Node {
    Op op = Op::Leaf;
    Id a = -1;
    Id b = -1;
    double s = 0.0;
    int start = 0;
    Eigen::MatrixXd aux;  // constant operand or cached factor
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool needs_grad = false;
  };

  Id push(Node node);
  bool needs(Id a) const { return nodes_[a].needs_grad; }

  std::vector<Node> nodes_;
};

}  // namespace riemflow::train

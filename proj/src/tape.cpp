#include "riemflow/tape.hpp"

#include <cmath>

#include "riemflow/errors.hpp"

namespace riemflow::train {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, std::string("tape: ") + what);
}

}  // namespace

Tape::Id Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::variable(const Eigen::MatrixXd& value) {
  Node n;
  n.value = value;
  n.needs_grad = true;
  return push(std::move(n));
}

Tape::Id Tape::constant(const Eigen::MatrixXd& value) {
  Node n;
  n.value = value;
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  require(value(a).cols() == value(b).rows(), "matmul shapes");
  Node n{Op::MatMul, a, b};
  n.value = value(a) * value(b);
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add shapes");
  Node n{Op::Add, a, b};
  n.value = value(a) + value(b);
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "sub shapes");
  Node n{Op::Sub, a, b};
  n.value = value(a) - value(b);
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

Tape::Id Tape::add_bias(Id a, Id bias) {
  require(value(bias).cols() == 1 && value(bias).rows() == value(a).rows(), "bias shape");
  Node n{Op::AddBias, a, bias};
  n.value = value(a);
  n.value.colwise() += value(bias).col(0);
  n.needs_grad = needs(a) || needs(bias);
  return push(std::move(n));
}

Tape::Id Tape::cwise_mul(Id a, Id b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "cwise_mul shapes");
  Node n{Op::CwiseMul, a, b};
  n.value = value(a).cwiseProduct(value(b));
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

Tape::Id Tape::row_scale(Id a, const Eigen::VectorXd& c) {
  require(c.size() == value(a).rows(), "row_scale size");
  Node n{Op::RowScale, a};
  n.aux = c;
  n.value = c.asDiagonal() * value(a);
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double s) {
  Node n{Op::Scale, a};
  n.s = s;
  n.value = s * value(a);
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::add_const(Id a, const Eigen::MatrixXd& c) {
  require(c.rows() == value(a).rows() && c.cols() == value(a).cols(), "add_const shapes");
  Node n{Op::AddConst, a};
  n.value = value(a) + c;
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  Node n{Op::Relu, a};
  n.value = value(a).cwiseMax(0.0);
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::tanh(Id a) {
  Node n{Op::Tanh, a};
  n.value = value(a).array().tanh().matrix();
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::exp(Id a) {
  Node n{Op::Exp, a};
  n.value = value(a).array().exp().matrix();
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::transpose(Id a) {
  Node n{Op::Transpose, a};
  n.value = value(a).transpose();
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::col_sum(Id a) {
  Node n{Op::ColSum, a};
  n.value = value(a).colwise().sum();
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) {
  Node n{Op::SumAll, a};
  n.value = Eigen::MatrixXd::Constant(1, 1, value(a).sum());
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::cols(Id a, int start, int count) {
  require(start >= 0 && count >= 0 && start + count <= value(a).cols(), "column block");
  Node n{Op::Cols, a};
  n.start = start;
  n.value = value(a).middleCols(start, count);
  n.needs_grad = needs(a);
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  require(value(a).rows() == value(b).rows(), "concat rows");
  Node n{Op::ConcatCols, a, b};
  n.value.resize(value(a).rows(), value(a).cols() + value(b).cols());
  n.value << value(a), value(b);
  n.needs_grad = needs(a) || needs(b);
  return push(std::move(n));
}

Tape::Id Tape::gaussian_nll(Id residuals, Id cov) {
  const Eigen::MatrixXd& r = value(residuals);
  const Eigen::MatrixXd& c = value(cov);
  require(c.rows() == c.cols() && c.rows() == r.rows(), "gaussian_nll shapes");
  const Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularCovariance, "covariance not positive definite");
  Node n{Op::GaussianNll, residuals, cov};
  n.aux = llt.solve(Eigen::MatrixXd::Identity(c.rows(), c.cols()));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double quad = (r.array() * (n.aux * r).array()).sum();
  n.value = Eigen::MatrixXd::Constant(1, 1, 0.5 * quad + 0.5 * static_cast<double>(r.cols()) * logdet);
  n.needs_grad = needs(residuals) || needs(cov);
  return push(std::move(n));
}

void Tape::backward(Id root) {
  require(value(root).size() == 1, "backward root must be scalar");
  for (auto& n : nodes_) {
    if (n.needs_grad) {
      n.grad.setZero(n.value.rows(), n.value.cols());
    } else {
      n.grad.resize(0, 0);
    }
  }
  if (!nodes_[root].needs_grad) return;
  nodes_[root].grad(0, 0) = 1.0;

  for (Id i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.op == Op::Leaf) continue;
    const Eigen::MatrixXd& g = n.grad;
    auto acc = [&](Id target) -> Eigen::MatrixXd* { return needs(target) ? &nodes_[target].grad : nullptr; };
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul:
        if (auto* ga = acc(n.a)) ga->noalias() += g * value(n.b).transpose();
        if (auto* gb = acc(n.b)) gb->noalias() += value(n.a).transpose() * g;
        break;
      case Op::Add:
        if (auto* ga = acc(n.a)) *ga += g;
        if (auto* gb = acc(n.b)) *gb += g;
        break;
      case Op::Sub:
        if (auto* ga = acc(n.a)) *ga += g;
        if (auto* gb = acc(n.b)) *gb -= g;
        break;
      case Op::AddBias:
        if (auto* ga = acc(n.a)) *ga += g;
        if (auto* gb = acc(n.b)) *gb += g.rowwise().sum();
        break;
      case Op::CwiseMul:
        if (auto* ga = acc(n.a)) *ga += g.cwiseProduct(value(n.b));
        if (auto* gb = acc(n.b)) *gb += g.cwiseProduct(value(n.a));
        break;
      case Op::RowScale:
        if (auto* ga = acc(n.a)) *ga += n.aux.col(0).asDiagonal() * g;
        break;
      case Op::Scale:
        if (auto* ga = acc(n.a)) *ga += n.s * g;
        break;
      case Op::AddConst:
        if (auto* ga = acc(n.a)) *ga += g;
        break;
      case Op::Relu:
        if (auto* ga = acc(n.a)) {
          *ga += (value(n.a).array() > 0.0).select(g.array(), 0.0).matrix();
        }
        break;
      case Op::Tanh:
        if (auto* ga = acc(n.a)) *ga += g.cwiseProduct((1.0 - n.value.array().square()).matrix());
        break;
      case Op::Exp:
        if (auto* ga = acc(n.a)) *ga += g.cwiseProduct(n.value);
        break;
      case Op::Transpose:
        if (auto* ga = acc(n.a)) *ga += g.transpose();
        break;
      case Op::ColSum:
        if (auto* ga = acc(n.a)) ga->rowwise() += g.row(0);
        break;
      case Op::SumAll:
        if (auto* ga = acc(n.a)) ga->array() += g(0, 0);
        break;
      case Op::Cols:
        if (auto* ga = acc(n.a)) ga->middleCols(n.start, g.cols()) += g;
        break;
      case Op::ConcatCols: {
        const auto ca = value(n.a).cols();
        if (auto* ga = acc(n.a)) *ga += g.leftCols(ca);
        if (auto* gb = acc(n.b)) *gb += g.rightCols(g.cols() - ca);
        break;
      }
      case Op::GaussianNll: {
        const double w = g(0, 0);
        const Eigen::MatrixXd& inv = n.aux;
        const Eigen::MatrixXd& r = value(n.a);
        const Eigen::MatrixXd inv_r = inv * r;
        if (auto* ga = acc(n.a)) *ga += w * inv_r;
        if (auto* gb = acc(n.b)) {
          *gb += w * 0.5 * (static_cast<double>(r.cols()) * inv - inv_r * inv_r.transpose());
        }
        break;
      }
    }
  }
}

}  // namespace riemflow::train

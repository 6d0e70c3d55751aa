#pragma once

#include <Eigen/Dense>

namespace riemflow::linalg {

// Minimum eigenvalue accepted by the SPD routines.
inline constexpr double kEigenvalueFloor = 1e-12;
// Clipping level used by nearest_spd.
inline constexpr double kClipFloor = 1e-10;

/// Dense symmetric matrix. The constructor symmetrizes its input as (A + A^T) / 2,
/// so entries(i, j) == entries(j, i) holds bitwise.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Eigen::MatrixXd& a);

  static SymMatrix zero(int dim);
  static SymMatrix identity(int dim);
  static SymMatrix diagonal(const Eigen::VectorXd& d);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Eigen::MatrixXd m_;
};

struct EigenPair {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // orthonormal columns
};

/// Cyclic Jacobi eigendecomposition. Throws NonFinite on NaN/Inf entries.
EigenPair sym_eig(const SymMatrix& a);

/// V f(diag(lambda)) V^T for a scalar function f.
template <typename F>
SymMatrix apply_spectral(const EigenPair& e, F&& f) {
  Eigen::VectorXd mapped = e.eigenvalues.unaryExpr(f);
  return SymMatrix(e.eigenvectors * mapped.asDiagonal() * e.eigenvectors.transpose());
}

SymMatrix logm(const SymMatrix& a);
SymMatrix expm(const SymMatrix& a);
SymMatrix sqrtm_spd(const SymMatrix& a);
SymMatrix invsqrtm_spd(const SymMatrix& a);

/// Nearest SPD matrix in Frobenius norm. For symmetric input Higham's projection
/// reduces to clipping eigenvalues at kClipFloor. `clipped`, when given, receives
/// the number of eigenvalues that were raised.
SymMatrix nearest_spd(const SymMatrix& a, int* clipped = nullptr);

bool is_spd(const SymMatrix& a, double floor = kEigenvalueFloor);
bool all_finite(const Eigen::MatrixXd& a);

}  // namespace riemflow::linalg

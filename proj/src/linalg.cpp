#include "riemflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "riemflow/errors.hpp"

namespace riemflow::linalg {

SymMatrix::SymMatrix(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "symmetric matrix must be square");
  }
  m_ = 0.5 * (a + a.transpose());
}

SymMatrix SymMatrix::zero(int dim) { return SymMatrix(Eigen::MatrixXd::Zero(dim, dim)); }

SymMatrix SymMatrix::identity(int dim) { return SymMatrix(Eigen::MatrixXd::Identity(dim, dim)); }

SymMatrix SymMatrix::diagonal(const Eigen::VectorXd& d) {
  return SymMatrix(Eigen::MatrixXd(d.asDiagonal()));
}

bool all_finite(const Eigen::MatrixXd& a) { return a.allFinite(); }

EigenPair sym_eig(const SymMatrix& sym) {
  if (!all_finite(sym.matrix())) throw Error(ErrorCode::NonFinite, "sym_eig input");
  const int n = sym.dim();
  Eigen::MatrixXd a = sym.matrix();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-17 * scale) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle that annihilates a(p, q).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });

  EigenPair out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (int i = 0; i < n; ++i) {
    out.eigenvalues(i) = a(order[i], order[i]);
    out.eigenvectors.col(i) = v.col(order[i]);
  }
  return out;
}

namespace {

EigenPair spd_eig(const SymMatrix& a, const char* who) {
  EigenPair e = sym_eig(a);
  if (!(e.eigenvalues(0) > kEigenvalueFloor)) {
    throw Error(ErrorCode::NotPositiveDefinite,
                std::string(who) + ": min eigenvalue " + std::to_string(e.eigenvalues(0)));
  }
  return e;
}

}  // namespace

SymMatrix logm(const SymMatrix& a) {
  return apply_spectral(spd_eig(a, "logm"), [](double l) { return std::log(l); });
}

SymMatrix expm(const SymMatrix& a) {
  return apply_spectral(sym_eig(a), [](double l) { return std::exp(l); });
}

SymMatrix sqrtm_spd(const SymMatrix& a) {
  return apply_spectral(spd_eig(a, "sqrtm_spd"), [](double l) { return std::sqrt(l); });
}

SymMatrix invsqrtm_spd(const SymMatrix& a) {
  return apply_spectral(spd_eig(a, "invsqrtm_spd"), [](double l) { return 1.0 / std::sqrt(l); });
}

SymMatrix nearest_spd(const SymMatrix& a, int* clipped) {
  EigenPair e = sym_eig(a);
  // Reconstruction rounding after a clip can leave an eigenvalue a few ulps of
  // ||A|| under the floor; those are not clipped again.
  const double slack = 1e3 * std::numeric_limits<double>::epsilon() * e.eigenvalues.cwiseAbs().maxCoeff();
  int count = 0;
  for (int i = 0; i < e.eigenvalues.size(); ++i) {
    if (e.eigenvalues(i) < kClipFloor - slack) ++count;
  }
  if (clipped) *clipped = count;
  // Already SPD above the clip floor: return the input untouched so the
  // projection is idempotent bit for bit.
  if (count == 0) return a;
  return apply_spectral(e, [](double l) { return std::max(l, kClipFloor); });
}

bool is_spd(const SymMatrix& a, double floor) {
  if (!all_finite(a.matrix())) return false;
  return sym_eig(a).eigenvalues(0) > floor;
}

}  // namespace riemflow::linalg

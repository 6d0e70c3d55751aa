#include "riemflow/manifolds.hpp"

#include <algorithm>
#include <cmath>

#include "riemflow/errors.hpp"

namespace riemflow {

namespace {

constexpr double kZeroVectorPart = 1e-12;
constexpr double kAntipodalDot = 1e-12;
constexpr double kUnitNormTolerance = 1e-12;

void require_same_dim(const SpdPoint& a, const SpdPoint& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "SPD dims " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
}

}  // namespace

const char* to_string(Manifold m) { return m == Manifold::Spd ? "spd" : "uq"; }

Manifold manifold_from_string(const std::string& s) {
  if (s == "spd") return Manifold::Spd;
  if (s == "uq") return Manifold::Uq;
  throw Error(ErrorCode::InvalidArgument, "unknown manifold '" + s + "' (expected spd|uq)");
}

SpdPoint::SpdPoint(const linalg::SymMatrix& m) : sym_(m) {
  if (!linalg::all_finite(m.matrix())) throw Error(ErrorCode::NonFinite, "SPD point");
  if (!linalg::is_spd(m)) throw Error(ErrorCode::NotPositiveDefinite, "SPD point");
}

UnitQuaternion::UnitQuaternion(double nu, const Eigen::Vector3d& u) {
  const double n = std::sqrt(nu * nu + u.squaredNorm());
  if (!std::isfinite(n)) throw Error(ErrorCode::NonFinite, "quaternion components");
  if (n == 0.0) throw Error(ErrorCode::InvalidArgument, "zero quaternion cannot be normalized");
  nu_ = nu / n;
  u_ = u / n;
}

UnitQuaternion UnitQuaternion::from_unit(double nu, const Eigen::Vector3d& u) {
  UnitQuaternion q;
  q.nu_ = nu;
  q.u_ = u;
  return q;
}

Manifold manifold_of(const ManifoldPoint& p) {
  return std::holds_alternative<SpdPoint>(p) ? Manifold::Spd : Manifold::Uq;
}

linalg::SymMatrix spd_log(const SpdPoint& g, const SpdPoint& p) {
  require_same_dim(g, p);
  const linalg::EigenPair e = linalg::sym_eig(g.sym());
  const linalg::SymMatrix half = linalg::apply_spectral(e, [](double l) { return std::sqrt(l); });
  const linalg::SymMatrix inv_half = linalg::apply_spectral(e, [](double l) { return 1.0 / std::sqrt(l); });
  const linalg::SymMatrix inner(inv_half.matrix() * p.matrix() * inv_half.matrix());
  return linalg::SymMatrix(half.matrix() * linalg::logm(inner).matrix() * half.matrix());
}

SpdPoint spd_exp(const SpdPoint& g, const linalg::SymMatrix& t) {
  if (t.dim() != g.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "tangent matrix does not match goal dimension");
  }
  if (!linalg::all_finite(t.matrix())) throw Error(ErrorCode::NonFinite, "spd_exp tangent");
  const linalg::EigenPair e = linalg::sym_eig(g.sym());
  const linalg::SymMatrix half = linalg::apply_spectral(e, [](double l) { return std::sqrt(l); });
  const linalg::SymMatrix inv_half = linalg::apply_spectral(e, [](double l) { return 1.0 / std::sqrt(l); });
  const linalg::SymMatrix inner(inv_half.matrix() * t.matrix() * inv_half.matrix());
  return SpdPoint(linalg::SymMatrix(half.matrix() * linalg::expm(inner).matrix() * half.matrix()));
}

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
  const double nu = a.nu() * b.nu() - a.u().dot(b.u());
  const Eigen::Vector3d u = a.nu() * b.u() + b.nu() * a.u() + a.u().cross(b.u());
  return UnitQuaternion(nu, u);
}

UnitQuaternion quat_conjugate(const UnitQuaternion& a) { return UnitQuaternion::from_unit(a.nu(), -a.u()); }

TangentVector uq_log(const UnitQuaternion& g, const UnitQuaternion& p) {
  const UnitQuaternion r = quat_multiply(p, quat_conjugate(g));
  const double norm_u = r.u().norm();
  if (norm_u < kZeroVectorPart) return {Eigen::Vector3d::Zero()};
  const double angle = std::acos(std::clamp(r.nu(), -1.0, 1.0));
  return {Eigen::VectorXd(angle * r.u() / norm_u)};
}

UnitQuaternion uq_exp(const UnitQuaternion& g, const TangentVector& t) {
  if (t.coords.size() != 3) throw Error(ErrorCode::DimensionMismatch, "quaternion tangent must be 3-D");
  if (!t.coords.allFinite()) throw Error(ErrorCode::NonFinite, "uq_exp tangent");
  const double n = t.coords.norm();
  if (n == 0.0) return g;
  const Eigen::Vector3d axis = t.coords / n;
  return quat_multiply(UnitQuaternion(std::cos(n), std::sin(n) * axis), g);
}

int mandel_size(int dim) { return dim * (dim + 1) / 2; }

// Layout: diagonal entries first, then sqrt(2)-scaled off-diagonals in row-major
// upper-triangle order. For d = 2 this is (a, b, sqrt(2) c).
TangentVector mandel_vec(const linalg::SymMatrix& t) {
  const int d = t.dim();
  Eigen::VectorXd v(mandel_size(d));
  int k = 0;
  for (int i = 0; i < d; ++i) v(k++) = t(i, i);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) v(k++) = std::sqrt(2.0) * t(i, j);
  return {v};
}

linalg::SymMatrix mandel_unvec(const TangentVector& v, int dim) {
  if (v.coords.size() != mandel_size(dim)) {
    throw Error(ErrorCode::DimensionMismatch, "Mandel vector of length " + std::to_string(v.coords.size()) +
                                                  " does not match dim " + std::to_string(dim));
  }
  Eigen::MatrixXd m(dim, dim);
  int k = 0;
  for (int i = 0; i < dim; ++i) m(i, i) = v.coords(k++);
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      m(i, j) = m(j, i) = v.coords(k++) / std::sqrt(2.0);
    }
  }
  return linalg::SymMatrix(m);
}

std::vector<UnitQuaternion> align_hemisphere(const std::vector<UnitQuaternion>& demo) {
  if (demo.empty()) throw Error(ErrorCode::EmptySequence, "align_hemisphere");
  std::vector<UnitQuaternion> out;
  out.reserve(demo.size());
  out.push_back(demo.front());
  for (std::size_t m = 1; m < demo.size(); ++m) {
    const double d = out.back().dot(demo[m]);
    if (std::abs(d) < kAntipodalDot) {
      throw Error(ErrorCode::AntipodalPair, "samples " + std::to_string(m - 1) + " and " + std::to_string(m));
    }
    out.push_back(d < 0 ? -demo[m] : demo[m]);
  }
  return out;
}

double led_distance(const SpdPoint& s, const SpdPoint& s_hat) {
  require_same_dim(s, s_hat);
  return (linalg::logm(s.sym()).matrix() - linalg::logm(s_hat.sym()).matrix()).norm();
}

double lqd_distance(const UnitQuaternion& q, const UnitQuaternion& q_hat) {
  // q and -q are the same orientation; measure the shorter relative rotation.
  UnitQuaternion r = quat_multiply(q, quat_conjugate(q_hat));
  if (r.nu() < 0) r = -r;
  return 2.0 * uq_log(UnitQuaternion::identity(), r).coords.norm();
}

double manifold_distance(const ManifoldPoint& a, const ManifoldPoint& b) {
  if (manifold_of(a) != manifold_of(b)) throw Error(ErrorCode::ManifoldMismatch, "distance between manifolds");
  if (const auto* sa = std::get_if<SpdPoint>(&a)) return led_distance(*sa, std::get<SpdPoint>(b));
  return lqd_distance(std::get<UnitQuaternion>(a), std::get<UnitQuaternion>(b));
}

TangentVector log_map(const ManifoldPoint& g, const ManifoldPoint& p) {
  if (manifold_of(g) != manifold_of(p)) throw Error(ErrorCode::ManifoldMismatch, "log_map");
  if (const auto* gs = std::get_if<SpdPoint>(&g)) return mandel_vec(spd_log(*gs, std::get<SpdPoint>(p)));
  return uq_log(std::get<UnitQuaternion>(g), std::get<UnitQuaternion>(p));
}

ManifoldPoint exp_map(const ManifoldPoint& g, const TangentVector& t) {
  if (const auto* gs = std::get_if<SpdPoint>(&g)) return spd_exp(*gs, mandel_unvec(t, gs->dim()));
  return uq_exp(std::get<UnitQuaternion>(g), t);
}

int tangent_dim(const ManifoldPoint& g) {
  if (const auto* gs = std::get_if<SpdPoint>(&g)) return mandel_size(gs->dim());
  return 3;
}

bool satisfies_constraint(const ManifoldPoint& p) {
  if (const auto* s = std::get_if<SpdPoint>(&p)) return linalg::is_spd(s->sym());
  const auto& q = std::get<UnitQuaternion>(p);
  return std::abs(q.coeffs().norm() - 1.0) <= kUnitNormTolerance;
}

}  // namespace riemflow

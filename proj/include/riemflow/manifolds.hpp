#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

#include "riemflow/linalg.hpp"

namespace riemflow {

enum class Manifold { Spd, Uq };

const char* to_string(Manifold m);
Manifold manifold_from_string(const std::string& s);

/// Symmetric positive definite matrix; the SPD property is checked on construction.
class SpdPoint {
 public:
  explicit SpdPoint(const linalg::SymMatrix& m);
  explicit SpdPoint(const Eigen::MatrixXd& m) : SpdPoint(linalg::SymMatrix(m)) {}

  int dim() const { return sym_.dim(); }
  const linalg::SymMatrix& sym() const { return sym_; }
  const Eigen::MatrixXd& matrix() const { return sym_.matrix(); }

 private:
  linalg::SymMatrix sym_;
};

/// Unit quaternion nu + u. Renormalized on construction.
class UnitQuaternion {
 public:
  UnitQuaternion() : UnitQuaternion(1.0, Eigen::Vector3d::Zero()) {}
  UnitQuaternion(double nu, const Eigen::Vector3d& u);

  static UnitQuaternion identity() { return {}; }
  /// Wraps already-normalized components without rescaling.
  static UnitQuaternion from_unit(double nu, const Eigen::Vector3d& u);

  double nu() const { return nu_; }
  const Eigen::Vector3d& u() const { return u_; }
  Eigen::Vector4d coeffs() const { return {nu_, u_.x(), u_.y(), u_.z()}; }
  double dot(const UnitQuaternion& o) const { return nu_ * o.nu_ + u_.dot(o.u_); }
  UnitQuaternion operator-() const { return from_unit(-nu_, -u_); }

 private:
  double nu_;
  Eigen::Vector3d u_;
};

using ManifoldPoint = std::variant<SpdPoint, UnitQuaternion>;

Manifold manifold_of(const ManifoldPoint& p);

/// Tangent coordinates at a goal: 3 for unit quaternions, d(d+1)/2 (Mandel) for SPD.
struct TangentVector {
  Eigen::VectorXd coords;
};

// SPD maps, goal-centered.
linalg::SymMatrix spd_log(const SpdPoint& g, const SpdPoint& p);
SpdPoint spd_exp(const SpdPoint& g, const linalg::SymMatrix& t);

// Unit-quaternion maps. Log_g(p) = Log(p * conj(g)); Exp_g(t) = exp(t) * g.
TangentVector uq_log(const UnitQuaternion& g, const UnitQuaternion& p);
UnitQuaternion uq_exp(const UnitQuaternion& g, const TangentVector& t);

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b);
UnitQuaternion quat_conjugate(const UnitQuaternion& a);

TangentVector mandel_vec(const linalg::SymMatrix& t);
linalg::SymMatrix mandel_unvec(const TangentVector& v, int dim);
int mandel_size(int dim);

/// Flips signs so every consecutive dot product is positive. Throws AntipodalPair
/// when a consecutive dot product is too close to zero to pick a sign.
std::vector<UnitQuaternion> align_hemisphere(const std::vector<UnitQuaternion>& demo);

double led_distance(const SpdPoint& s, const SpdPoint& s_hat);
double lqd_distance(const UnitQuaternion& q, const UnitQuaternion& q_hat);
/// LEd or LQd depending on the manifold; throws ManifoldMismatch on mixed inputs.
double manifold_distance(const ManifoldPoint& a, const ManifoldPoint& b);

// Log/Exp on the variant: tangent coordinates are Mandel-vectorized for SPD.
TangentVector log_map(const ManifoldPoint& g, const ManifoldPoint& p);
ManifoldPoint exp_map(const ManifoldPoint& g, const TangentVector& t);
int tangent_dim(const ManifoldPoint& g);

/// True when the point satisfies its manifold constraint (unit norm to 1e-12, or SPD).
bool satisfies_constraint(const ManifoldPoint& p);

}  // namespace riemflow

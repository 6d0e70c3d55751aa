#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "helpers.hpp"
#include "riemflow/errors.hpp"
#include "riemflow/linalg.hpp"

using namespace riemflow;
using namespace riemflow::linalg;

TEST_CASE("SymMatrix symmetrizes and rejects non-square input") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 4, 3;
  const SymMatrix s(a);
  CHECK(s(0, 1) == 3.0);
  CHECK(s(1, 0) == 3.0);
  CHECK_THROWS_AS(SymMatrix(Eigen::MatrixXd::Zero(2, 3)), Error);
  CHECK(SymMatrix::identity(3).matrix().isIdentity(0.0));
  CHECK(SymMatrix::diagonal(Eigen::Vector2d(2, 5))(1, 1) == 5.0);
}

TEST_CASE("Jacobi eigendecomposition agrees with Eigen's self-adjoint solver") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 5;
    Eigen::MatrixXd a(d, d);
    for (auto& v : a.reshaped()) v = n(rng);
    const SymMatrix s(a);
    const EigenPair e = sym_eig(s);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(s.matrix());
    CHECK((e.eigenvalues - oracle.eigenvalues()).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::MatrixXd recon = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
    CHECK((recon - s.matrix()).norm() < 1e-12);
    CHECK((e.eigenvectors.transpose() * e.eigenvectors - Eigen::MatrixXd::Identity(d, d)).norm() < 1e-13);
    for (int i = 1; i < d; ++i) CHECK(e.eigenvalues(i - 1) <= e.eigenvalues(i));
  }
}

TEST_CASE("sym_eig rejects non-finite input") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  a(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sym_eig(SymMatrix(a)), Error);
}

TEST_CASE("matrix functions on a diagonal matrix are elementwise") {
  const SymMatrix d = SymMatrix::diagonal(Eigen::Vector3d(1.0, 4.0, 9.0));
  CHECK((logm(d).matrix().diagonal() - Eigen::Vector3d(0.0, std::log(4.0), std::log(9.0))).norm() < 1e-15);
  CHECK((sqrtm_spd(d).matrix().diagonal() - Eigen::Vector3d(1, 2, 3)).norm() < 1e-15);
  CHECK((invsqrtm_spd(d).matrix().diagonal() - Eigen::Vector3d(1, 0.5, 1.0 / 3)).norm() < 1e-15);
  CHECK((expm(SymMatrix::zero(3)).matrix() - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("logm and expm are mutual inverses and sqrtm squares back") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const SymMatrix p(testing::random_spd(3, rng));
    CHECK((expm(logm(p)).matrix() - p.matrix()).norm() < 1e-10 * p.matrix().norm());
    const Eigen::MatrixXd r = sqrtm_spd(p).matrix();
    CHECK((r * r - p.matrix()).norm() < 1e-10 * p.matrix().norm());
    CHECK((invsqrtm_spd(p).matrix() * r - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-10);
  }
}

TEST_CASE("SPD-only functions reject indefinite matrices") {
  const SymMatrix bad = SymMatrix::diagonal(Eigen::Vector2d(1.0, -1.0));
  CHECK_THROWS_AS(logm(bad), Error);
  CHECK_THROWS_AS(sqrtm_spd(bad), Error);
  CHECK_THROWS_AS(invsqrtm_spd(bad), Error);
  CHECK_FALSE(is_spd(bad));
  CHECK(is_spd(SymMatrix::identity(2)));
}

TEST_CASE("nearest_spd clips negative eigenvalues and is idempotent") {
  const SymMatrix bad = SymMatrix::diagonal(Eigen::Vector2d(2.0, -3.0));
  int clipped = 0;
  const SymMatrix fixed = nearest_spd(bad, &clipped);
  CHECK(clipped == 1);
  CHECK(fixed(0, 0) == doctest::Approx(2.0));
  CHECK(fixed(1, 1) == doctest::Approx(kClipFloor));
  CHECK(is_spd(fixed, 0.0));

  int again = -1;
  const SymMatrix twice = nearest_spd(fixed, &again);
  CHECK(again == 0);
  CHECK(twice.matrix() == fixed.matrix());

  // Far inside the cone the projection leaves the matrix untouched.
  std::mt19937_64 rng(5);
  const SymMatrix good(testing::random_spd(3, rng));
  int none = -1;
  CHECK(nearest_spd(good, &none).matrix() == good.matrix());
  CHECK(none == 0);
}

TEST_CASE("nearest_spd is the Frobenius projection for symmetric input") {
  // Oracle: brute-force search over the clipped-spectrum family is not needed; the
  // Frobenius distance to any SPD candidate must not be smaller than to the projection.
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(3, 3);
  for (auto& v : a.reshaped()) v = n(rng);
  const SymMatrix s(a);
  const SymMatrix p = nearest_spd(s);
  const double best = (p.matrix() - s.matrix()).norm();
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd cand = testing::random_spd(3, rng, 0.7) - 0.49 * Eigen::MatrixXd::Identity(3, 3);
    if (!is_spd(SymMatrix(cand))) continue;
    CHECK((cand - s.matrix()).norm() >= best - 1e-12);
  }
}

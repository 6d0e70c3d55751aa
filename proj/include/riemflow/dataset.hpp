#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "riemflow/pipeline.hpp"

namespace riemflow::dataset {

inline constexpr int kLasaTrajectories = 7;
inline constexpr int kLasaLength = 1000;
inline constexpr double kDefaultDt = 0.004;
inline constexpr double kUqMaxTangentNorm = 0.9 * 3.14159265358979323846;

/// Planar handwriting demonstrations: each trajectory is 2 x M (rows x, y).
struct RawShape {
  std::string name;
  std::vector<Eigen::MatrixXd> trajectories;
  double dt = kDefaultDt;
};

/// Three-dimensional tangent-space demonstrations, each 3 x M.
struct RiemannianShape {
  std::string name;
  std::vector<Eigen::MatrixXd> demos;
  double dt = kDefaultDt;
};

/// Stacks the 7 trajectories into a 14 x M matrix (trajectory j on rows 2j, 2j+1)
/// and selects the row triples [0,1,2], [4,5,6], [8,9,10], [12,3,0].
RiemannianShape recombine(const RawShape& raw);

/// Goal used for each manifold: diag(100, 100) for SPD, the identity quaternion for UQ.
ManifoldPoint default_goal(Manifold manifold);

/// Factor applied to the tangent data before lifting: 1 for SPD; for UQ the data
/// are rescaled so the largest tangent norm is 0.9 pi.
double tangent_scale(const RiemannianShape& shape, Manifold manifold);

/// Exp at the default goal (inverse Mandel first for SPD). Each demonstration is
/// shifted so its last sample is exactly the origin. Throws ChartOverflow if a UQ
/// tangent norm reaches pi.
DemoSet lift_to_manifold(const RiemannianShape& shape, Manifold manifold);

enum class ShapeKind { Spiral, SCurve, Angle, NLike };

const char* to_string(ShapeKind k);
ShapeKind shape_from_string(const std::string& s);
inline const std::vector<ShapeKind>& all_shapes() {
  static const std::vector<ShapeKind> shapes{ShapeKind::Spiral, ShapeKind::SCurve, ShapeKind::Angle,
                                             ShapeKind::NLike};
  return shapes;
}

/// Seven planar trajectories of a handwriting-like shape ending exactly at the
/// origin, with per-trajectory jitter of relative size `noise`.
RawShape synth_raw(ShapeKind kind, int length, double noise, std::uint64_t seed, double dt = kDefaultDt);

/// Deterministic synthetic demonstrations. Four demos go through recombine();
/// other counts pair trajectory j's (x, y) with trajectory j+1's x.
RiemannianShape synth_shape(ShapeKind kind, int n_demos, int length, double noise, std::uint64_t seed,
                            double dt = kDefaultDt);

/// CSV with header demo,t,x,y. With `strict`, exactly 7 trajectories of 1000 samples.
RawShape load_raw(const std::string& path, bool strict = true);
void save_raw(const std::string& path, const RawShape& raw);

/// Writes dir/demos.csv and dir/manifest.json.
void save_demoset(const std::string& dir, const DemoSet& demos, const std::string& name = "");
DemoSet load_demoset(const std::string& dir, std::string* name = nullptr);

/// Trajectory CSV: t,nu,ux,uy,uz for quaternions; t,m11,m22,m12 for 2x2 SPD
/// (lower triangle m_ij, i >= j, for larger matrices).
void write_trajectory_csv(const std::string& path, const std::vector<ManifoldPoint>& points, double dt);
std::vector<ManifoldPoint> read_trajectory_csv(const std::string& path, Manifold* manifold = nullptr);

}  // namespace riemflow::dataset

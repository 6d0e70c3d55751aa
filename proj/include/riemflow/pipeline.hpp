#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "riemflow/flow.hpp"
#include "riemflow/manifolds.hpp"

namespace riemflow {

inline constexpr double kGoalTolerance = 1e-9;
inline constexpr double kStdFloor = 1e-8;
inline constexpr double kDefaultXi = 1e-3;
inline constexpr int kMaxStepsFactor = 20;

/// N demonstrations of M manifold points sharing goal and sampling time.
struct DemoSet {
  Manifold manifold = Manifold::Uq;
  ManifoldPoint goal = UnitQuaternion::identity();
  double dt = 0.004;
  std::vector<std::vector<ManifoldPoint>> demos;

  /// Throws GoalMismatch / ManifoldMismatch / EmptySequence.
  void validate() const;
  int length() const { return demos.empty() ? 0 : static_cast<int>(demos.front().size()); }
};

/// Demonstrations as k x M coordinate matrices, unnormalized, plus per-dimension
/// statistics. The flow sees goal-centered normalized coordinates x = p / std, which
/// equals normalize(p) - normalize(0), so the tangent origin stays the latent origin.
struct TangentDemoSet {
  flow::Chart chart = flow::Chart::Tangent;
  Manifold manifold = Manifold::Uq;
  std::optional<ManifoldPoint> goal;
  double dt = 0.004;
  std::vector<Eigen::MatrixXd> sequences;
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  int dim() const { return sequences.empty() ? 0 : static_cast<int>(sequences.front().rows()); }
  /// (p - mean) / std, the zero-mean unit-variance view.
  Eigen::MatrixXd normalized(std::size_t i) const;
};

void compute_normalization(TangentDemoSet& data);

/// Hemisphere alignment (UQ), Log at the goal, Mandel vectorization (SPD), statistics.
TangentDemoSet preprocess(const DemoSet& demos);

struct GenerateOptions {
  double xi = kDefaultXi;
  int max_steps = 20000;
  std::optional<double> dt;  // defaults to the model's sampling time
  bool stochastic = false;
  std::uint64_t noise_seed = 0;
};

struct TangentTrajectory {
  std::vector<Eigen::VectorXd> states;  // unnormalized chart coordinates
  bool converged = false;               // false: stopped at max_steps
};

/// Runs the learned dynamics from an unnormalized chart point until the norm drops
/// below xi. The latent state is carried between steps, which is the same map as
/// repeated generate_velocity_step without re-inverting the flow.
TangentTrajectory generate_tangent(const flow::FlowModel& model, const Eigen::VectorXd& start,
                                   const GenerateOptions& options);

/// normalize -> inverse flow -> Euler step of the latent drift -> forward flow -> denormalize.
Eigen::VectorXd generate_velocity_step(const flow::FlowModel& model, const Eigen::VectorXd& tangent,
                                       std::optional<double> dt = std::nullopt);

struct Trajectory {
  std::vector<ManifoldPoint> points;
  std::vector<Eigen::VectorXd> tangent;
  double dt = 0.0;
  bool converged = false;
};

/// Riemannian generation: Log at the goal, tangent dynamics, Exp back on every step.
Trajectory generate(const flow::FlowModel& model, const ManifoldPoint& start, const GenerateOptions& options);

}  // namespace riemflow

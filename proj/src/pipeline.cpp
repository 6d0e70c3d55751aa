#include "riemflow/pipeline.hpp"

#include <cmath>
#include <random>

#include "riemflow/errors.hpp"

namespace riemflow {

void DemoSet::validate() const {
  if (demos.empty()) throw Error(ErrorCode::EmptySequence, "demo set has no demonstrations");
  if (manifold_of(goal) != manifold) throw Error(ErrorCode::ManifoldMismatch, "goal is on the wrong manifold");
  if (!(dt > 0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  for (std::size_t n = 0; n < demos.size(); ++n) {
    if (demos[n].empty()) throw Error(ErrorCode::EmptySequence, "demonstration " + std::to_string(n));
    for (const auto& p : demos[n]) {
      if (manifold_of(p) != manifold) {
        throw Error(ErrorCode::ManifoldMismatch, "demonstration " + std::to_string(n) + " mixes manifolds");
      }
    }
    const double d = manifold_distance(demos[n].back(), goal);
    if (d > kGoalTolerance) {
      throw Error(ErrorCode::GoalMismatch,
                  "demonstration " + std::to_string(n) + " ends " + std::to_string(d) + " away from the goal");
    }
  }
}

Eigen::MatrixXd TangentDemoSet::normalized(std::size_t i) const {
  const Eigen::MatrixXd& s = sequences.at(i);
  return (s.colwise() - mean).array().colwise() / std.array();
}

void compute_normalization(TangentDemoSet& data) {
  const int k = data.dim();
  Eigen::Index total = 0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
  for (const auto& s : data.sequences) {
    sum += s.rowwise().sum();
    total += s.cols();
  }
  if (total == 0) throw Error(ErrorCode::EmptySequence, "no samples to normalize");
  data.mean = sum / static_cast<double>(total);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(k);
  for (const auto& s : data.sequences) sq += (s.colwise() - data.mean).rowwise().squaredNorm();
  data.std = (sq / static_cast<double>(total)).cwiseSqrt().cwiseMax(kStdFloor);
}

TangentDemoSet preprocess(const DemoSet& demos) {
  demos.validate();
  TangentDemoSet out;
  out.chart = flow::Chart::Tangent;
  out.manifold = demos.manifold;
  out.goal = demos.goal;
  out.dt = demos.dt;
  const int k = tangent_dim(demos.goal);
  for (const auto& demo : demos.demos) {
    std::vector<ManifoldPoint> points = demo;
    if (demos.manifold == Manifold::Uq) {
      std::vector<UnitQuaternion> q;
      q.reserve(demo.size());
      for (const auto& p : demo) q.push_back(std::get<UnitQuaternion>(p));
      q = align_hemisphere(q);
      // Keep the chart of the goal itself: the aligned sequence must end at +g.
      if (q.back().dot(std::get<UnitQuaternion>(demos.goal)) < 0) {
        for (auto& x : q) x = -x;
      }
      points.assign(q.begin(), q.end());
    }
    Eigen::MatrixXd seq(k, static_cast<Eigen::Index>(points.size()));
    for (std::size_t m = 0; m < points.size(); ++m) seq.col(static_cast<Eigen::Index>(m)) = log_map(demos.goal, points[m]).coords;
    out.sequences.push_back(std::move(seq));
  }
  compute_normalization(out);
  return out;
}

Eigen::VectorXd generate_velocity_step(const flow::FlowModel& model, const Eigen::VectorXd& tangent,
                                       std::optional<double> dt) {
  const double h = dt.value_or(model.dt);
  const Eigen::VectorXd x = tangent.cwiseQuotient(model.norm_std);
  Eigen::VectorXd q = flow::flow_inverse(model, x).values;
  q += h * flow::latent_drift(model.latent, q);
  return flow::flow_forward(model, q).values.col(0).cwiseProduct(model.norm_std);
}

TangentTrajectory generate_tangent(const flow::FlowModel& model, const Eigen::VectorXd& start,
                                   const GenerateOptions& options) {
  if (!(options.xi > 0)) throw Error(ErrorCode::InvalidArgument, "xi must be positive");
  if (start.size() != model.dim()) throw Error(ErrorCode::DimensionMismatch, "start point dimension");
  const double h = options.dt.value_or(model.dt);
  TangentTrajectory out;
  out.states.push_back(start);
  if (start.norm() < options.xi) {
    out.converged = true;
    return out;
  }
  const Eigen::MatrixXd step = Eigen::MatrixXd::Identity(model.dim(), model.dim()) + h * model.latent.v();
  const Eigen::MatrixXd noise_gain = std::sqrt(h) * model.latent.f_phi;
  std::mt19937_64 rng(options.noise_seed);
  std::normal_distribution<double> normal;

  Eigen::VectorXd q = flow::flow_inverse(model, start.cwiseQuotient(model.norm_std)).values;
  for (int s = 0; s < options.max_steps; ++s) {
    q = step * q;
    if (options.stochastic) {
      Eigen::VectorXd w(model.dim());
      for (auto& v : w) v = normal(rng);
      q += noise_gain * w;
    }
    Eigen::VectorXd p = flow::flow_forward(model, q).values.col(0).cwiseProduct(model.norm_std);
    const double norm = p.norm();
    out.states.push_back(std::move(p));
    if (norm < options.xi) {
      out.converged = true;
      break;
    }
  }
  return out;
}

Trajectory generate(const flow::FlowModel& model, const ManifoldPoint& start, const GenerateOptions& options) {
  if (!model.goal) throw Error(ErrorCode::InvalidArgument, "model has no goal");
  if (model.chart != flow::Chart::Tangent) {
    throw Error(ErrorCode::InvalidArgument, "Riemannian generation needs a tangent-chart model");
  }
  if (manifold_of(start) != model.manifold || manifold_of(*model.goal) != model.manifold) {
    throw Error(ErrorCode::ManifoldMismatch, "start point is not on the model's manifold");
  }
  Trajectory out;
  out.dt = options.dt.value_or(model.dt);
  TangentTrajectory tangent = generate_tangent(model, log_map(*model.goal, start).coords, options);
  out.converged = tangent.converged;
  out.points.reserve(tangent.states.size());
  out.points.push_back(start);
  for (std::size_t i = 1; i < tangent.states.size(); ++i) {
    out.points.push_back(exp_map(*model.goal, TangentVector{tangent.states[i]}));
  }
  out.tangent = std::move(tangent.states);
  return out;
}

}  // namespace riemflow

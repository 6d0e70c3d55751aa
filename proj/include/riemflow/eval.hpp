#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riemflow/pipeline.hpp"
#include "riemflow/train.hpp"

namespace riemflow::eval {

/// Shortest round-trip decimal with 17 significant digits.
std::string format_double(double x);

/// Cumulative DTW with Euclidean point cost over match/insert/delete steps.
double dtw(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b);

/// Index-proportional linear interpolation to n samples.
std::vector<Eigen::VectorXd> resample(const std::vector<Eigen::VectorXd>& seq, std::size_t n);

/// Per-index LEd/LQd between a generated trajectory and a demonstration. The
/// generation is resampled to the demonstration's length in tangent coordinates at g.
std::vector<double> distance_profile(const std::vector<ManifoldPoint>& generated,
                                     const std::vector<ManifoldPoint>& demo, const ManifoldPoint& goal);

enum class Method { RiemannianFlow, Naive };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

/// Naive chart: embedding components minus the goal. Unit quaternions are taken as
/// 4-vectors (hemisphere-aligned), SPD matrices as Mandel vectors of the matrix itself.
TangentDemoSet embed_naive(const DemoSet& demos);

struct NaiveTrajectory {
  std::vector<ManifoldPoint> points;         // after renormalization / SPD projection
  std::vector<Eigen::VectorXd> states;       // raw chart states as generated
  bool converged = false;
  int violations = 0;                        // raw states off the manifold before repair
};

/// Generation for a model trained on embed_naive data, repairing every state.
NaiveTrajectory naive_generate(const flow::FlowModel& model, const ManifoldPoint& start,
                               const GenerateOptions& options);

struct MetricReport {
  std::string shape;
  Manifold manifold = Manifold::Uq;
  Method method = Method::RiemannianFlow;
  std::uint64_t seed = 0;
  double dtw = 0.0;
  double mean_dist = 0.0;
  double max_dist = 0.0;
  int clip_events = 0;
  double runtime_s = 0.0;
  bool converged = false;  // every reproduction terminated by xi
  std::string error;       // non-empty when the cell failed
};

struct SummaryRow {
  Method method = Method::RiemannianFlow;
  Manifold manifold = Manifold::Uq;
  double dtw_mean = 0.0;
  double dtw_std = 0.0;  // population std over successful cells
  int cells = 0;
};

struct NamedDemoSet {
  std::string name;
  DemoSet demos;
};

struct CellResult {
  MetricReport report;
  std::optional<flow::FlowModel> model;
  std::vector<train::HistoryRow> history;
  std::vector<std::vector<ManifoldPoint>> generated;  // one per demonstration
};

/// Trains one model and reproduces every demonstration from its first point.
CellResult run_cell(const NamedDemoSet& shape, Method method, std::uint64_t seed, const train::TrainConfig& config);

struct BenchmarkResult {
  std::vector<CellResult> cells;  // shape-major, then method, then seed
  std::vector<SummaryRow> summary;
};

BenchmarkResult benchmark(const std::vector<NamedDemoSet>& shapes, const std::vector<Method>& methods,
                          const std::vector<std::uint64_t>& seeds, const train::TrainConfig& config, int jobs = 1);

std::vector<SummaryRow> summarize(const std::vector<MetricReport>& rows);

void write_benchmark_csv(const std::string& path, const std::vector<MetricReport>& rows);
void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);

/// Two-dimensional plane through the origin of the normalized flow coordinates.
struct Plane {
  Eigen::VectorXd u;  // orthonormal basis
  Eigen::VectorXd v;
  Eigen::Vector2d lo;  // extent in plane coordinates
  Eigen::Vector2d hi;
};

/// Least-squares plane through the goal (the origin) of the normalized demonstrations,
/// spanned by the two leading right singular vectors; extent padded by 10%.
Plane fit_plane(const TangentDemoSet& data);

struct StreamField {
  Plane plane;
  int resolution = 0;
  std::vector<Eigen::Vector2d> points;      // plane coordinates, row-major grid
  std::vector<Eigen::Vector2d> velocities;  // projected one-step velocity, normalized units/s
};

/// One-step velocities of generate_velocity_step on an r x r grid of the plane.
StreamField stream_field(const flow::FlowModel& model, const Plane& plane, int resolution);

struct Streamline {
  std::vector<Eigen::VectorXd> points;  // normalized coordinates, subsampled for plotting
  double final_norm = 0.0;
};

/// Integrates the continuous dynamics from `count` random plane points. The flow is
/// a diffeomorphism, so the latent ODE q' = V q is integrated with RK4 and states are
/// mapped through the forward flow; the final norm is in normalized units.
std::vector<Streamline> streamlines(const flow::FlowModel& model, const Plane& plane, int count, int steps,
                                    double step_size, std::uint64_t seed);

void write_stream_csv(const std::string& path, const StreamField& field);
void write_stream_svg(const std::string& path, const StreamField& field, const std::vector<Streamline>& lines,
                      const TangentDemoSet& data);

}  // namespace riemflow::eval

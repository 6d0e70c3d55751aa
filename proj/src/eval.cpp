#include "riemflow/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "riemflow/errors.hpp"
#include "riemflow/parallel.hpp"

namespace riemflow::eval {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double dtw(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySequence, "dtw needs nonempty sequences");
  const std::size_t n = a.size(), m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Two rolling rows of the (n+1) x (m+1) table.
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      if (a[i - 1].size() != b[j - 1].size()) throw Error(ErrorCode::DimensionMismatch, "dtw point dimensions");
      const double cost = (a[i - 1] - b[j - 1]).norm();
      cur[j] = cost + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::vector<Eigen::VectorXd> resample(const std::vector<Eigen::VectorXd>& seq, std::size_t n) {
  if (seq.empty() || n == 0) throw Error(ErrorCode::LengthMismatch, "cannot resample an empty sequence");
  std::vector<Eigen::VectorXd> out(n);
  if (n == 1 || seq.size() == 1) {
    std::fill(out.begin(), out.end(), seq.front());
    return out;
  }
  const double scale = static_cast<double>(seq.size() - 1) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * scale;
    const auto lo = std::min(static_cast<std::size_t>(pos), seq.size() - 2);
    const double w = pos - static_cast<double>(lo);
    out[i] = (1.0 - w) * seq[lo] + w * seq[lo + 1];
  }
  return out;
}

std::vector<double> distance_profile(const std::vector<ManifoldPoint>& generated,
                                     const std::vector<ManifoldPoint>& demo, const ManifoldPoint& goal) {
  if (generated.empty() || demo.empty()) throw Error(ErrorCode::EmptySequence, "distance_profile");
  std::vector<Eigen::VectorXd> tangent;
  tangent.reserve(generated.size());
  for (const auto& p : generated) tangent.push_back(log_map(goal, p).coords);
  const auto aligned = resample(tangent, demo.size());
  if (aligned.size() != demo.size()) throw Error(ErrorCode::LengthMismatch, "resampling failed");
  std::vector<double> out(demo.size());
  for (std::size_t i = 0; i < demo.size(); ++i) {
    out[i] = manifold_distance(exp_map(goal, TangentVector{aligned[i]}), demo[i]);
  }
  return out;
}

const char* to_string(Method m) { return m == Method::RiemannianFlow ? "riemannian_flow" : "naive"; }

Method method_from_string(const std::string& s) {
  if (s == "riemannian" || s == "riemannian_flow") return Method::RiemannianFlow;
  if (s == "naive") return Method::Naive;
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + s + "'");
}

namespace {

Eigen::VectorXd embed_point(const ManifoldPoint& p) {
  if (const auto* q = std::get_if<UnitQuaternion>(&p)) return q->coeffs();
  return mandel_vec(std::get<SpdPoint>(p).sym()).coords;
}

// Maps a raw naive state back onto the manifold; returns true when repair was needed.
bool repair(const ManifoldPoint& goal, const Eigen::VectorXd& state, ManifoldPoint& out) {
  const Eigen::VectorXd x = state + embed_point(goal);
  if (manifold_of(goal) == Manifold::Uq) {
    const double n = x.norm();
    if (!(n > 0) || !std::isfinite(n)) throw Error(ErrorCode::NonFinite, "naive quaternion state has zero norm");
    out = UnitQuaternion(x(0), x.tail<3>());
    return std::abs(n - 1.0) > 1e-12;
  }
  const int d = std::get<SpdPoint>(goal).dim();
  int clipped = 0;
  const linalg::SymMatrix projected = linalg::nearest_spd(mandel_unvec(TangentVector{x}, d), &clipped);
  out = SpdPoint(projected);
  return clipped > 0;
}

}  // namespace

TangentDemoSet embed_naive(const DemoSet& demos) {
  demos.validate();
  TangentDemoSet out;
  out.chart = flow::Chart::Embedded;
  out.manifold = demos.manifold;
  out.goal = demos.goal;
  out.dt = demos.dt;
  const Eigen::VectorXd g = embed_point(demos.goal);
  for (const auto& demo : demos.demos) {
    std::vector<ManifoldPoint> points = demo;
    if (demos.manifold == Manifold::Uq) {
      std::vector<UnitQuaternion> q;
      for (const auto& p : demo) q.push_back(std::get<UnitQuaternion>(p));
      q = align_hemisphere(q);
      if (q.back().dot(std::get<UnitQuaternion>(demos.goal)) < 0) {
        for (auto& x : q) x = -x;
      }
      points.assign(q.begin(), q.end());
    }
    Eigen::MatrixXd seq(g.size(), static_cast<Eigen::Index>(points.size()));
    for (std::size_t m = 0; m < points.size(); ++m) seq.col(static_cast<Eigen::Index>(m)) = embed_point(points[m]) - g;
    out.sequences.push_back(std::move(seq));
  }
  compute_normalization(out);
  return out;
}

namespace {

NaiveTrajectory naive_from_state(const flow::FlowModel& model, const Eigen::VectorXd& start,
                                 const GenerateOptions& options) {
  TangentTrajectory gen = generate_tangent(model, start, options);
  NaiveTrajectory out;
  out.converged = gen.converged;
  out.points.reserve(gen.states.size());
  for (const auto& s : gen.states) {
    ManifoldPoint p = *model.goal;
    if (repair(*model.goal, s, p)) ++out.violations;
    out.points.push_back(std::move(p));
  }
  out.states = std::move(gen.states);
  return out;
}

}  // namespace

NaiveTrajectory naive_generate(const flow::FlowModel& model, const ManifoldPoint& start,
                               const GenerateOptions& options) {
  if (!model.goal || model.chart != flow::Chart::Embedded) {
    throw Error(ErrorCode::InvalidArgument, "naive generation needs an embedded-chart model with a goal");
  }
  if (manifold_of(start) != model.manifold) throw Error(ErrorCode::ManifoldMismatch, "start point manifold");
  Eigen::VectorXd x = embed_point(start);
  // Put a quaternion start on the goal's hemisphere, as the training data were.
  if (model.manifold == Manifold::Uq && x.dot(embed_point(*model.goal)) < 0) x = -x;
  return naive_from_state(model, x - embed_point(*model.goal), options);
}

CellResult run_cell(const NamedDemoSet& shape, Method method, std::uint64_t seed, const train::TrainConfig& config) {
  CellResult cell;
  MetricReport& r = cell.report;
  r.shape = shape.name;
  r.manifold = shape.demos.manifold;
  r.method = method;
  r.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const TangentDemoSet data = method == Method::RiemannianFlow ? preprocess(shape.demos) : embed_naive(shape.demos);
    train::TrainConfig cfg = config;
    cfg.seed = seed;
    train::TrainResult trained = train::train(train::initial_model(data, cfg), data, cfg);
    const flow::FlowModel& model = trained.model;

    GenerateOptions options;
    options.xi = cfg.xi;
    double dtw_sum = 0.0, dist_sum = 0.0;
    r.converged = true;
    for (std::size_t n = 0; n < data.sequences.size(); ++n) {
      const Eigen::MatrixXd& seq = data.sequences[n];
      options.max_steps = cfg.max_steps_factor * static_cast<int>(seq.cols());
      std::vector<Eigen::VectorXd> states;
      std::vector<ManifoldPoint> points;
      if (method == Method::RiemannianFlow) {
        TangentTrajectory gen = generate_tangent(model, seq.col(0), options);
        r.converged = r.converged && gen.converged;
        for (const auto& s : gen.states) {
          points.push_back(exp_map(*model.goal, TangentVector{s}));
          if (!satisfies_constraint(points.back())) ++r.clip_events;
        }
        states = std::move(gen.states);
      } else {
        NaiveTrajectory gen = naive_from_state(model, seq.col(0), options);
        r.converged = r.converged && gen.converged;
        r.clip_events += gen.violations;
        points = std::move(gen.points);
        states = std::move(gen.states);
      }
      std::vector<Eigen::VectorXd> demo(static_cast<std::size_t>(seq.cols()));
      for (Eigen::Index m = 0; m < seq.cols(); ++m) demo[static_cast<std::size_t>(m)] = seq.col(m);
      dtw_sum += dtw(states, demo);
      const auto profile = distance_profile(points, shape.demos.demos[n], shape.demos.goal);
      double mean = 0.0;
      for (double d : profile) {
        mean += d;
        r.max_dist = std::max(r.max_dist, d);
      }
      dist_sum += mean / static_cast<double>(profile.size());
      cell.generated.push_back(std::move(points));
    }
    const auto n_demos = static_cast<double>(data.sequences.size());
    r.dtw = dtw_sum / n_demos;
    r.mean_dist = dist_sum / n_demos;
    cell.history = std::move(trained.history);
    cell.model = std::move(trained.model);
  } catch (const std::exception& e) {
    r.error = e.what();
    r.dtw = std::numeric_limits<double>::infinity();
  }
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

std::vector<SummaryRow> summarize(const std::vector<MetricReport>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const SummaryRow& s) { return s.method == r.method && s.manifold == r.manifold; });
    if (it == out.end()) {
      out.push_back({r.method, r.manifold, 0.0, 0.0, 0});
      values.emplace_back();
      it = out.end() - 1;
    }
    if (r.error.empty() && std::isfinite(r.dtw)) values[static_cast<std::size_t>(it - out.begin())].push_back(r.dtw);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& v = values[i];
    out[i].cells = static_cast<int>(v.size());
    if (v.empty()) {
      out[i].dtw_mean = out[i].dtw_std = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    out[i].dtw_mean = mean;
    out[i].dtw_std = std::sqrt(var / static_cast<double>(v.size()));
  }
  return out;
}

BenchmarkResult benchmark(const std::vector<NamedDemoSet>& shapes, const std::vector<Method>& methods,
                          const std::vector<std::uint64_t>& seeds, const train::TrainConfig& config, int jobs) {
  if (shapes.empty() || methods.empty() || seeds.empty()) {
    throw Error(ErrorCode::InvalidArgument, "benchmark needs at least one shape, method and seed");
  }
  struct Task {
    std::size_t shape;
    Method method;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    for (Method m : methods) {
      for (auto seed : seeds) tasks.push_back({s, m, seed});
    }
  }
  BenchmarkResult result;
  result.cells.resize(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    result.cells[i] = run_cell(shapes[tasks[i].shape], tasks[i].method, tasks[i].seed, config);
  });
  std::vector<MetricReport> rows;
  for (const auto& c : result.cells) rows.push_back(c.report);
  result.summary = summarize(rows);
  return result;
}

void write_benchmark_csv(const std::string& path, const std::vector<MetricReport>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "shape,manifold,method,seed,dtw,mean_dist,max_dist,clip_events,runtime_s\n";
  for (const auto& r : rows) {
    out << r.shape << ',' << to_string(r.manifold) << ',' << to_string(r.method) << ',' << r.seed << ','
        << format_double(r.dtw) << ',' << format_double(r.mean_dist) << ',' << format_double(r.max_dist) << ','
        << r.clip_events << ',' << format_double(r.runtime_s) << '\n';
  }
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "method,manifold,dtw_mean,dtw_std\n";
  for (const auto& r : rows) {
    out << to_string(r.method) << ',' << to_string(r.manifold) << ',' << format_double(r.dtw_mean) << ','
        << format_double(r.dtw_std) << '\n';
  }
}

Plane fit_plane(const TangentDemoSet& data) {
  const int k = data.dim();
  if (k < 2) throw Error(ErrorCode::DimensionMismatch, "a plane needs at least two dimensions");
  Eigen::Index total = 0;
  for (const auto& s : data.sequences) total += s.cols();
  Eigen::MatrixXd x(total, k);
  Eigen::Index row = 0;
  for (const auto& s : data.sequences) {
    x.middleRows(row, s.cols()) = (s.array().colwise() / data.std.array()).matrix().transpose();
    row += s.cols();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  Plane plane;
  plane.u = svd.matrixV().col(0);
  plane.v = svd.matrixV().col(1);
  Eigen::MatrixXd uv(total, 2);
  uv.col(0) = x * plane.u;
  uv.col(1) = x * plane.v;
  const Eigen::Vector2d lo = uv.colwise().minCoeff(), hi = uv.colwise().maxCoeff();
  const Eigen::Vector2d pad = 0.1 * (hi - lo).cwiseMax(1e-6);
  plane.lo = lo - pad;
  plane.hi = hi + pad;
  return plane;
}

StreamField stream_field(const flow::FlowModel& model, const Plane& plane, int resolution) {
  if (resolution < 2) throw Error(ErrorCode::InvalidArgument, "resolution must be >= 2");
  StreamField field;
  field.plane = plane;
  field.resolution = resolution;
  const auto r = static_cast<std::size_t>(resolution);
  Eigen::MatrixXd grid(model.dim(), static_cast<Eigen::Index>(r * r));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      const double a = plane.lo.x() + (plane.hi.x() - plane.lo.x()) * static_cast<double>(j) / (resolution - 1);
      const double b = plane.lo.y() + (plane.hi.y() - plane.lo.y()) * static_cast<double>(i) / (resolution - 1);
      field.points.emplace_back(a, b);
      grid.col(static_cast<Eigen::Index>(i * r + j)) = a * plane.u + b * plane.v;
    }
  }
  // One batched velocity step: inverse flow, Euler latent step, forward flow.
  Eigen::MatrixXd q = flow::flow_inverse(model, grid).values;
  q += model.dt * (model.latent.v() * q);
  const Eigen::MatrixXd next = flow::flow_forward(model, q).values;
  const Eigen::MatrixXd vel = (next - grid) / model.dt;
  for (Eigen::Index c = 0; c < vel.cols(); ++c) {
    field.velocities.emplace_back(plane.u.dot(vel.col(c)), plane.v.dot(vel.col(c)));
  }
  return field;
}

std::vector<Streamline> streamlines(const flow::FlowModel& model, const Plane& plane, int count, int steps,
                                    double step_size, std::uint64_t seed) {
  if (count < 0 || steps < 1 || !(step_size > 0)) throw Error(ErrorCode::InvalidArgument, "streamline settings");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ua(plane.lo.x(), plane.hi.x()), ub(plane.lo.y(), plane.hi.y());
  const int k = model.dim();
  Eigen::MatrixXd starts(k, count);
  for (int c = 0; c < count; ++c) {
    const double a = ua(rng);
    starts.col(c) = a * plane.u + ub(rng) * plane.v;
  }
  const Eigen::MatrixXd v = model.latent.v();
  const Eigen::MatrixXd q0 = flow::flow_inverse(model, starts).values;
  constexpr int kSamples = 200;
  const int stride = std::max(1, steps / kSamples);
  std::vector<Eigen::MatrixXd> samples;  // latent states of every line at sample times
  Eigen::MatrixXd q = q0;
  samples.push_back(q);
  const double h = step_size;
  for (int s = 1; s <= steps; ++s) {
    const Eigen::MatrixXd k1 = v * q;
    const Eigen::MatrixXd k2 = v * (q + 0.5 * h * k1);
    const Eigen::MatrixXd k3 = v * (q + 0.5 * h * k2);
    const Eigen::MatrixXd k4 = v * (q + h * k3);
    q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (s % stride == 0 || s == steps) samples.push_back(q);
  }
  std::vector<Streamline> lines(static_cast<std::size_t>(count));
  for (const auto& snapshot : samples) {
    const Eigen::MatrixXd x = flow::flow_forward(model, snapshot).values;
    for (int c = 0; c < count; ++c) lines[static_cast<std::size_t>(c)].points.push_back(x.col(c));
  }
  for (auto& line : lines) line.final_norm = line.points.back().norm();
  return lines;
}

void write_stream_csv(const std::string& path, const StreamField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "a,b,va,vb\n";
  for (std::size_t i = 0; i < field.points.size(); ++i) {
    out << format_double(field.points[i].x()) << ',' << format_double(field.points[i].y()) << ','
        << format_double(field.velocities[i].x()) << ',' << format_double(field.velocities[i].y()) << '\n';
  }
}

void write_stream_svg(const std::string& path, const StreamField& field, const std::vector<Streamline>& lines,
                      const TangentDemoSet& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  constexpr double size = 600.0, margin = 20.0;
  const Plane& pl = field.plane;
  const Eigen::Vector2d span = (pl.hi - pl.lo).cwiseMax(1e-12);
  auto px = [&](const Eigen::Vector2d& p) {
    return Eigen::Vector2d(margin + (p.x() - pl.lo.x()) / span.x() * (size - 2 * margin),
                           size - margin - (p.y() - pl.lo.y()) / span.y() * (size - 2 * margin));
  };
  auto project = [&](const Eigen::VectorXd& x) { return Eigen::Vector2d(pl.u.dot(x), pl.v.dot(x)); };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  double vmax = 1e-12;
  for (const auto& v : field.velocities) vmax = std::max(vmax, v.norm());
  const double cell = (size - 2 * margin) / std::max(1, field.resolution - 1);
  for (std::size_t i = 0; i < field.points.size(); ++i) {
    const Eigen::Vector2d a = px(field.points[i]);
    Eigen::Vector2d d(field.velocities[i].x() / span.x(), -field.velocities[i].y() / span.y());
    if (d.norm() > 0) d = d.normalized() * 0.8 * cell * std::sqrt(field.velocities[i].norm() / vmax);
    out << "<line x1=\"" << a.x() << "\" y1=\"" << a.y() << "\" x2=\"" << a.x() + d.x() << "\" y2=\""
        << a.y() + d.y() << "\" stroke=\"#888\" stroke-width=\"1\"/>\n";
  }
  auto polyline = [&](const std::vector<Eigen::Vector2d>& pts, const char* color, double width) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\" points=\"";
    for (const auto& p : pts) {
      const Eigen::Vector2d q = px(p);
      out << q.x() << ',' << q.y() << ' ';
    }
    out << "\"/>\n";
  };
  for (const auto& line : lines) {
    std::vector<Eigen::Vector2d> pts;
    for (const auto& x : line.points) pts.push_back(project(x));
    polyline(pts, "#3b6ea8", 0.8);
  }
  for (const auto& seq : data.sequences) {
    std::vector<Eigen::Vector2d> pts;
    for (Eigen::Index m = 0; m < seq.cols(); ++m) pts.push_back(project(seq.col(m).cwiseQuotient(data.std)));
    polyline(pts, "#c0392b", 2.0);
  }
  const Eigen::Vector2d goal = px(Eigen::Vector2d::Zero());
  out << "<circle cx=\"" << goal.x() << "\" cy=\"" << goal.y() << "\" r=\"4\" fill=\"black\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"" << margin - 6
      << "\" font-family=\"sans-serif\" font-size=\"11\">axes: normalized tangent units</text>\n";
  out << "</svg>\n";
}

}  // namespace riemflow::eval

#include "riemflow/dataset.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "riemflow/errors.hpp"
#include "riemflow/eval.hpp"
#include "riemflow/json_io.hpp"

namespace riemflow::dataset {

namespace fs = std::filesystem;
using eval::format_double;

RiemannianShape recombine(const RawShape& raw) {
  if (static_cast<int>(raw.trajectories.size()) != kLasaTrajectories) {
    throw Error(ErrorCode::ShapeMismatch, "recombine needs 7 trajectories, got " +
                                              std::to_string(raw.trajectories.size()));
  }
  const Eigen::Index m = raw.trajectories.front().cols();
  for (const auto& t : raw.trajectories) {
    if (t.rows() != 2 || t.cols() != m || m < 2) {
      throw Error(ErrorCode::ShapeMismatch, "trajectories must all be 2 x M with the same M >= 2");
    }
  }
  Eigen::MatrixXd stacked(2 * kLasaTrajectories, m);
  for (int j = 0; j < kLasaTrajectories; ++j) stacked.middleRows(2 * j, 2) = raw.trajectories[static_cast<std::size_t>(j)];

  static constexpr int kTriples[4][3] = {{0, 1, 2}, {4, 5, 6}, {8, 9, 10}, {12, 3, 0}};
  RiemannianShape out;
  out.name = raw.name;
  out.dt = raw.dt;
  for (const auto& triple : kTriples) {
    Eigen::MatrixXd demo(3, m);
    for (int r = 0; r < 3; ++r) demo.row(r) = stacked.row(triple[r]);
    out.demos.push_back(std::move(demo));
  }
  return out;
}

ManifoldPoint default_goal(Manifold manifold) {
  if (manifold == Manifold::Uq) return UnitQuaternion::identity();
  return SpdPoint(linalg::SymMatrix::diagonal(Eigen::Vector2d(100.0, 100.0)));
}

namespace {

Eigen::MatrixXd anchored(const Eigen::MatrixXd& demo) {
  const Eigen::VectorXd last = demo.col(demo.cols() - 1);
  if (last.isZero(0.0)) return demo;
  return demo.colwise() - last;
}

}  // namespace

double tangent_scale(const RiemannianShape& shape, Manifold manifold) {
  if (manifold == Manifold::Spd) return 1.0;
  double max_norm = 0.0;
  for (const auto& d : shape.demos) max_norm = std::max(max_norm, anchored(d).colwise().norm().maxCoeff());
  return max_norm > 0 ? kUqMaxTangentNorm / max_norm : 1.0;
}

DemoSet lift_to_manifold(const RiemannianShape& shape, Manifold manifold) {
  if (shape.demos.empty()) throw Error(ErrorCode::EmptySequence, "shape has no demonstrations");
  DemoSet out;
  out.manifold = manifold;
  out.goal = default_goal(manifold);
  out.dt = shape.dt;
  const double scale = tangent_scale(shape, manifold);
  for (const auto& raw : shape.demos) {
    if (raw.rows() != 3 || raw.cols() < 1) throw Error(ErrorCode::ShapeMismatch, "demonstrations must be 3 x M");
    const Eigen::MatrixXd demo = scale == 1.0 ? anchored(raw) : Eigen::MatrixXd(scale * anchored(raw));
    std::vector<ManifoldPoint> points;
    points.reserve(static_cast<std::size_t>(demo.cols()));
    for (Eigen::Index m = 0; m < demo.cols(); ++m) {
      if (manifold == Manifold::Uq && demo.col(m).norm() >= M_PI) {
        throw Error(ErrorCode::ChartOverflow, "tangent norm reaches pi at sample " + std::to_string(m));
      }
      points.push_back(exp_map(out.goal, TangentVector{demo.col(m)}));
    }
    out.demos.push_back(std::move(points));
  }
  return out;
}

const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Spiral: return "spiral";
    case ShapeKind::SCurve: return "s-curve";
    case ShapeKind::Angle: return "angle";
    case ShapeKind::NLike: return "n-like";
  }
  return "?";
}

ShapeKind shape_from_string(const std::string& s) {
  for (ShapeKind k : all_shapes()) {
    if (s == to_string(k)) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown shape '" + s + "'");
}

namespace {

// Point on a polyline at arc-length fraction s in [0, 1].
Eigen::Vector2d polyline_at(const std::vector<Eigen::Vector2d>& pts, double s) {
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) cum.push_back(cum.back() + (pts[i] - pts[i - 1]).norm());
  const double target = s * cum.back();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (target <= cum[i] || i + 1 == pts.size()) {
      const double w = (target - cum[i - 1]) / (cum[i] - cum[i - 1]);
      return (1.0 - w) * pts[i - 1] + w * pts[i];
    }
  }
  return pts.back();
}

// Shape curve at phase s in [0, 1]; c(1) is the origin.
Eigen::Vector2d shape_curve(ShapeKind kind, double s) {
  switch (kind) {
    case ShapeKind::Spiral: {
      const double r = 40.0 * (1.0 - s);
      const double th = 2.5 * M_PI * s;
      return {r * std::cos(th), r * std::sin(th)};
    }
    case ShapeKind::SCurve:
      return {20.0 * std::sin(2.0 * M_PI * s), -40.0 * (1.0 - s)};
    case ShapeKind::Angle:
      return polyline_at({{-40.0, 10.0}, {-12.0, 35.0}, {0.0, 0.0}}, s);
    case ShapeKind::NLike:
      return polyline_at({{-40.0, -30.0}, {-34.0, 22.0}, {-10.0, -22.0}, {0.0, 0.0}}, s);
  }
  return {0.0, 0.0};
}

}  // namespace

RawShape synth_raw(ShapeKind kind, int length, double noise, std::uint64_t seed, double dt) {
  if (length < 10) throw Error(ErrorCode::InvalidArgument, "synthetic length must be >= 10");
  if (!(noise >= 0)) throw Error(ErrorCode::InvalidArgument, "noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  RawShape raw;
  raw.name = to_string(kind);
  raw.dt = dt;
  for (int j = 0; j < kLasaTrajectories; ++j) {
    const double gain = 1.0 + noise * normal(rng);
    const double angle = 0.5 * noise * normal(rng);
    const Eigen::Vector2d offset(40.0 * noise * normal(rng), 40.0 * noise * normal(rng));
    const Eigen::Matrix2d rot = Eigen::Rotation2Dd(angle).toRotationMatrix();
    Eigen::MatrixXd traj(2, length);
    for (int m = 0; m < length; ++m) {
      const double tau = static_cast<double>(m) / (length - 1);
      // Fast departure and a decelerating approach, like recorded handwriting.
      const double s = 1.0 - std::pow(1.0 - tau, 2.0);
      traj.col(m) = gain * (rot * shape_curve(kind, s)) + (1.0 - s) * (1.0 - s) * offset;
    }
    traj.col(length - 1).setZero();
    raw.trajectories.push_back(std::move(traj));
  }
  return raw;
}

RiemannianShape synth_shape(ShapeKind kind, int n_demos, int length, double noise, std::uint64_t seed, double dt) {
  if (n_demos < 1) throw Error(ErrorCode::InvalidArgument, "n_demos must be >= 1");
  if (n_demos == 4) return recombine(synth_raw(kind, length, noise, seed, dt));
  RiemannianShape out;
  out.name = to_string(kind);
  out.dt = dt;
  // Enough raw trajectories for n_demos + 1 sources; extra batches use derived seeds.
  std::vector<Eigen::MatrixXd> pool;
  for (std::uint64_t batch = 0; static_cast<int>(pool.size()) < n_demos + 1; ++batch) {
    RawShape raw = synth_raw(kind, length, noise, seed + 7919 * batch, dt);
    for (auto& t : raw.trajectories) pool.push_back(std::move(t));
  }
  for (int j = 0; j < n_demos; ++j) {
    Eigen::MatrixXd demo(3, length);
    demo.topRows(2) = pool[static_cast<std::size_t>(j)];
    demo.row(2) = pool[static_cast<std::size_t>(j + 1)].row(0);
    out.demos.push_back(std::move(demo));
  }
  return out;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> line_numbers;
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(std::string_view s, const std::string& path, int line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double value = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return value;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  CsvTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (table.header.empty()) {
      table.header = split(line);
      continue;
    }
    const auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(table.header.size()) + " fields, got " +
                                             std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_number(f, path, line_no));
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw Error(ErrorCode::ParseError, path + ": empty file");
  return table;
}

void expect_header(const CsvTable& t, const std::vector<std::string>& want, const std::string& path) {
  if (t.header != want) throw Error(ErrorCode::ParseError, path + ":1: unexpected header");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  return out;
}

// Column names after the time/demo columns.
std::vector<std::string> point_columns(Manifold manifold, int spd_dim) {
  if (manifold == Manifold::Uq) return {"nu", "ux", "uy", "uz"};
  if (spd_dim == 2) return {"m11", "m22", "m12"};
  std::vector<std::string> cols;
  for (int i = 0; i < spd_dim; ++i) {
    for (int j = 0; j <= i; ++j) cols.push_back("m" + std::to_string(i + 1) + std::to_string(j + 1));
  }
  return cols;
}

std::vector<double> point_values(const ManifoldPoint& p) {
  if (const auto* q = std::get_if<UnitQuaternion>(&p)) return {q->nu(), q->u().x(), q->u().y(), q->u().z()};
  const Eigen::MatrixXd& m = std::get<SpdPoint>(p).matrix();
  if (m.rows() == 2) return {m(0, 0), m(1, 1), m(1, 0)};
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) out.push_back(m(i, j));
  }
  return out;
}

ManifoldPoint point_from_values(Manifold manifold, int spd_dim, const double* v) {
  if (manifold == Manifold::Uq) {
    const Eigen::Vector3d u(v[0 + 1], v[2], v[3]);
    // Keep stored unit quaternions bit-exact; renormalize anything else.
    if (std::abs(std::sqrt(v[0] * v[0] + u.squaredNorm()) - 1.0) <= 1e-12) return UnitQuaternion::from_unit(v[0], u);
    return UnitQuaternion(v[0], u);
  }
  Eigen::MatrixXd m(spd_dim, spd_dim);
  if (spd_dim == 2) {
    m << v[0], v[2], v[2], v[1];
  } else {
    int c = 0;
    for (int i = 0; i < spd_dim; ++i) {
      for (int j = 0; j <= i; ++j, ++c) m(i, j) = m(j, i) = v[c];
    }
  }
  return SpdPoint(m);
}

// Infers the manifold and SPD size from the columns after `skip` leading ones.
std::pair<Manifold, int> layout_from_header(const std::vector<std::string>& header, std::size_t skip,
                                            const std::string& path) {
  const std::vector<std::string> cols(header.begin() + static_cast<std::ptrdiff_t>(std::min(skip, header.size())),
                                      header.end());
  if (cols == point_columns(Manifold::Uq, 0)) return {Manifold::Uq, 0};
  for (int d = 2; d <= 8; ++d) {
    if (cols == point_columns(Manifold::Spd, d)) return {Manifold::Spd, d};
  }
  throw Error(ErrorCode::ParseError, path + ":1: unrecognized trajectory columns");
}

std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (const auto& c : cols) out += (out.empty() ? "" : ",") + c;
  return out;
}

template <typename Fn>
ManifoldPoint checked_point(Fn&& make, const std::string& path, int line) {
  try {
    return make();
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace

RawShape load_raw(const std::string& path, bool strict) {
  const CsvTable t = read_csv(path);
  expect_header(t, {"demo", "t", "x", "y"}, path);
  RawShape raw;
  raw.name = fs::path(path).stem().string();
  std::vector<std::vector<Eigen::Vector2d>> cols;
  std::vector<double> first_t, second_t;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const double demo = r[0];
    if (demo < 0 || demo != std::floor(demo) || demo > 1e6) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(t.line_numbers[i]) + ": bad demo index");
    }
    const auto d = static_cast<std::size_t>(demo);
    if (d > cols.size()) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(t.line_numbers[i]) + ": demo indices must be contiguous");
    }
    if (d == cols.size()) cols.emplace_back();
    cols[d].emplace_back(r[2], r[3]);
    if (d == 0 && first_t.size() < 2) first_t.push_back(r[1]);
  }
  if (cols.empty()) throw Error(ErrorCode::ParseError, path + ": no samples");
  for (auto& c : cols) {
    Eigen::MatrixXd traj(2, static_cast<Eigen::Index>(c.size()));
    for (std::size_t m = 0; m < c.size(); ++m) traj.col(static_cast<Eigen::Index>(m)) = c[m];
    raw.trajectories.push_back(std::move(traj));
  }
  raw.dt = first_t.size() == 2 && first_t[1] > first_t[0] ? first_t[1] - first_t[0] : kDefaultDt;
  if (strict) {
    if (static_cast<int>(raw.trajectories.size()) != kLasaTrajectories) {
      throw Error(ErrorCode::SchemaError, path + ": expected 7 trajectories, got " +
                                              std::to_string(raw.trajectories.size()));
    }
    for (const auto& tr : raw.trajectories) {
      if (tr.cols() != kLasaLength) {
        throw Error(ErrorCode::SchemaError, path + ": expected 1000 samples per trajectory, got " +
                                                std::to_string(tr.cols()));
      }
    }
  }
  return raw;
}

void save_raw(const std::string& path, const RawShape& raw) {
  auto out = open_out(path);
  out << "demo,t,x,y\n";
  for (std::size_t j = 0; j < raw.trajectories.size(); ++j) {
    const auto& tr = raw.trajectories[j];
    for (Eigen::Index m = 0; m < tr.cols(); ++m) {
      out << j << ',' << format_double(static_cast<double>(m) * raw.dt) << ',' << format_double(tr(0, m)) << ','
          << format_double(tr(1, m)) << '\n';
    }
  }
}

void save_demoset(const std::string& dir, const DemoSet& demos, const std::string& name) {
  demos.validate();
  fs::create_directories(dir);
  const int spd_dim = demos.manifold == Manifold::Spd ? std::get<SpdPoint>(demos.goal).dim() : 0;
  {
    auto out = open_out((fs::path(dir) / "demos.csv").string());
    out << "demo,t," << join(point_columns(demos.manifold, spd_dim)) << '\n';
    for (std::size_t n = 0; n < demos.demos.size(); ++n) {
      for (std::size_t m = 0; m < demos.demos[n].size(); ++m) {
        out << n << ',' << format_double(static_cast<double>(m) * demos.dt);
        for (double v : point_values(demos.demos[n][m])) out << ',' << format_double(v);
        out << '\n';
      }
    }
  }
  const nlohmann::json manifest = {
      {"schema", "riemflow.demoset"},
      {"version", 1},
      {"name", name},
      {"manifold", to_string(demos.manifold)},
      {"goal", io::manifold_point_to_json(demos.goal)},
      {"dt", demos.dt},
      {"n_demos", demos.demos.size()},
      {"length", demos.length()},
  };
  auto out = open_out((fs::path(dir) / "manifest.json").string());
  out << manifest.dump(1) << '\n';
}

DemoSet load_demoset(const std::string& dir, std::string* name) {
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + manifest_path);
  DemoSet demos;
  std::size_t n_demos = 0, length = 0;
  try {
    const auto manifest = nlohmann::json::parse(in);
    if (manifest.at("schema").get<std::string>() != "riemflow.demoset") {
      throw Error(ErrorCode::SchemaError, manifest_path + ": not a demo set manifest");
    }
    demos.manifold = manifold_from_string(manifest.at("manifold").get<std::string>());
    demos.goal = io::manifold_point_from_json(manifest.at("goal"));
    demos.dt = manifest.at("dt").get<double>();
    n_demos = manifest.at("n_demos").get<std::size_t>();
    length = manifest.at("length").get<std::size_t>();
    if (name) *name = manifest.value("name", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, manifest_path + ": " + e.what());
  }

  const std::string csv_path = (fs::path(dir) / "demos.csv").string();
  const CsvTable t = read_csv(csv_path);
  const auto [manifold, spd_dim] = layout_from_header(t.header, 2, csv_path);
  if (t.header[0] != "demo" || t.header[1] != "t") throw Error(ErrorCode::ParseError, csv_path + ":1: bad header");
  if (manifold != demos.manifold) throw Error(ErrorCode::SchemaError, csv_path + ": columns disagree with manifest");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const auto d = static_cast<std::size_t>(r[0]);
    if (r[0] < 0 || static_cast<double>(d) != r[0] || d > demos.demos.size()) {
      throw Error(ErrorCode::ParseError, csv_path + ":" + std::to_string(t.line_numbers[i]) + ": bad demo index");
    }
    if (d == demos.demos.size()) demos.demos.emplace_back();
    demos.demos[d].push_back(checked_point([&] { return point_from_values(manifold, spd_dim, r.data() + 2); },
                                           csv_path, t.line_numbers[i]));
  }
  if (demos.demos.size() != n_demos) {
    throw Error(ErrorCode::SchemaError, csv_path + ": manifest lists " + std::to_string(n_demos) +
                                            " demonstrations, file has " + std::to_string(demos.demos.size()));
  }
  for (const auto& d : demos.demos) {
    if (d.size() != length) {
      throw Error(ErrorCode::SchemaError, csv_path + ": demonstration length " + std::to_string(d.size()) +
                                              " differs from manifest length " + std::to_string(length));
    }
  }
  demos.validate();
  return demos;
}

void write_trajectory_csv(const std::string& path, const std::vector<ManifoldPoint>& points, double dt) {
  if (points.empty()) throw Error(ErrorCode::EmptySequence, "empty trajectory");
  const Manifold manifold = manifold_of(points.front());
  const int spd_dim = manifold == Manifold::Spd ? std::get<SpdPoint>(points.front()).dim() : 0;
  auto out = open_out(path);
  out << "t," << join(point_columns(manifold, spd_dim)) << '\n';
  for (std::size_t m = 0; m < points.size(); ++m) {
    out << format_double(static_cast<double>(m) * dt);
    for (double v : point_values(points[m])) out << ',' << format_double(v);
    out << '\n';
  }
}

std::vector<ManifoldPoint> read_trajectory_csv(const std::string& path, Manifold* manifold_out) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header[0] != "t") throw Error(ErrorCode::ParseError, path + ":1: bad header");
  const auto [manifold, spd_dim] = layout_from_header(t.header, 1, path);
  std::vector<ManifoldPoint> points;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    points.push_back(checked_point([&] { return point_from_values(manifold, spd_dim, t.rows[i].data() + 1); }, path,
                                   t.line_numbers[i]));
  }
  if (points.empty()) throw Error(ErrorCode::EmptySequence, path + ": no samples");
  if (manifold_out) *manifold_out = manifold;
  return points;
}

}  // namespace riemflow::dataset

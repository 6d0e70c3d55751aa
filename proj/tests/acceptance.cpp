// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "riemflow/cli.hpp"
#include "riemflow/dataset.hpp"
#include "riemflow/eval.hpp"
#include "riemflow/flow.hpp"
#include "riemflow/train.hpp"

using namespace riemflow;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::map<int, std::pair<bool, std::string>> results;

void report(int id, bool pass, const std::string& detail) {
  results[id] = {pass, detail};
  std::cout << "[progress] criterion " << id << " evaluated" << std::endl;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

// Reduced-scale benchmark shared by the training-based criteria.
constexpr int kLength = 250;
constexpr double kDt = 0.016;
constexpr std::uint64_t kDataSeed = 20;
const std::vector<std::uint64_t> kSeeds{20, 21, 22};

train::TrainConfig table1_config() {
  train::TrainConfig cfg;  // Table 1 defaults: 11 layers, ReLU, Adam, lr 0.00098, 100 epochs
  cfg.batch_size = 64;
  cfg.eval_every = 20;
  cfg.monitor_dtw = true;
  return cfg;
}

void criterion_round_trips() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  double spd_worst = 0.0, uq_worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const int d = 2 + i % 2;
    const SpdPoint g(testing::random_spd(d, rng)), p(testing::random_spd(d, rng));
    const ManifoldPoint back = exp_map(g, log_map(g, p));
    spd_worst = std::max(spd_worst, (std::get<SpdPoint>(back).matrix() - p.matrix()).norm());

    const UnitQuaternion qg = testing::random_quaternion(rng), qp = testing::random_quaternion(rng);
    const Eigen::Vector4d qb = std::get<UnitQuaternion>(exp_map(qg, log_map(qg, qp))).coeffs();
    // Sign-invariant chordal distance between quaternions.
    uq_worst = std::max(uq_worst, std::min((qb - qp.coeffs()).norm(), (qb + qp.coeffs()).norm()));
  }
  const double elapsed = seconds_since(t0);
  report(1, spd_worst <= 1e-8 && uq_worst <= 1e-10 && elapsed < 5.0,
         "500 pairs each: SPD max Frobenius error " + fmt(spd_worst) + " (<= 1e-8), UQ max quaternion error " +
             fmt(uq_worst) + " (<= 1e-10), " + fmt(elapsed) + " s (< 5 s)");
}

void criterion_flow() {
  const flow::FlowModel model = testing::random_model(3, 6, 42, 0.5);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.5);
  Eigen::MatrixXd q(3, 1000);
  for (auto& v : q.reshaped()) v = n(rng);
  const flow::FlowResult fwd = flow::flow_forward(model, q);
  const double inv_err = (flow::flow_inverse(model, fwd.values).values - q).cwiseAbs().maxCoeff();

  double logdet_err = 0.0;
  const double h = 1e-6;
  for (Eigen::Index c = 0; c < 50; ++c) {
    Eigen::Matrix3d j;
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e(k) = h;
      j.col(k) = (flow::flow_forward(model, Eigen::VectorXd(q.col(c) + e)).values -
                  flow::flow_forward(model, Eigen::VectorXd(q.col(c) - e)).values) /
                 (2 * h);
    }
    logdet_err = std::max(logdet_err, std::abs(fwd.logdet(c) - std::log(std::abs(j.determinant()))));
  }
  report(3, inv_err <= 1e-9 && logdet_err <= 1e-4,
         "inverse(forward) max error " + fmt(inv_err) + " on 1000 points (<= 1e-9), logdet vs FD Jacobian " +
             fmt(logdet_err) + " on 50 points (<= 1e-4)");
}

void criterion_gradient() {
  const flow::FlowModel model = testing::random_model(3, 3, 6, 0.3, 16);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  train::PairBatch batch{Eigen::MatrixXd(3, 16), Eigen::MatrixXd(3, 16)};
  for (auto& v : batch.from.reshaped()) v = n(rng);
  for (Eigen::Index i = 0; i < batch.to.size(); ++i) batch.to.data()[i] = 0.95 * batch.from.data()[i] + 0.05 * n(rng);
  const double dt = 0.02, h = 1e-5;
  const train::LossAndGrad lg = train::nll_loss_and_grad(model, batch, dt);
  flow::FlowModel probe = model;
  const auto params = probe.parameters();
  double worst = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p]->size(); ++i, ++count) {
      const double keep = params[p]->data()[i];
      params[p]->data()[i] = keep + h;
      const double up = train::nll_loss(probe, batch, dt);
      params[p]->data()[i] = keep - h;
      const double down = train::nll_loss(probe, batch, dt);
      params[p]->data()[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double ad = lg.grads[p].data()[i];
      worst = std::max(worst, std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-3}));
    }
  }
  report(4, worst < 1e-4,
         "k=3, L=3, h=1e-5 over " + std::to_string(count) + " parameters: max relative error " + fmt(worst) +
             " (< 1e-4, denominators floored at 1e-3)");
}

void criterion_dtw() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(1, 10);
  std::normal_distribution<double> n;
  int equal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Eigen::VectorXd> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
    for (auto& v : a) v = Eigen::Vector2d(n(rng), n(rng));
    for (auto& v : b) v = Eigen::Vector2d(n(rng), n(rng));
    std::map<std::pair<std::size_t, std::size_t>, double> memo;
    std::function<double(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t j) {
      if (auto it = memo.find({i, j}); it != memo.end()) return it->second;
      double best = (a[i] - b[j]).norm();
      if (i > 0 && j > 0) {
        best += std::min({rec(i - 1, j - 1), rec(i - 1, j), rec(i, j - 1)});
      } else if (i > 0) {
        best += rec(i - 1, 0);
      } else if (j > 0) {
        best += rec(0, j - 1);
      }
      return memo[{i, j}] = best;
    };
    if (eval::dtw(a, b) == rec(a.size() - 1, b.size() - 1)) ++equal;
  }
  report(9, equal == 100, std::to_string(equal) + "/100 random pairs exactly equal to the memoized recursion");
}

void criterion_recombine() {
  const dataset::RawShape raw = dataset::load_raw(std::string(RIEMFLOW_FIXTURE_DIR) + "/lasa_fixture.csv");
  const dataset::RiemannianShape shape = dataset::recombine(raw);
  const int triples[4][3] = {{0, 1, 2}, {4, 5, 6}, {8, 9, 10}, {12, 3, 0}};
  bool exact = shape.demos.size() == 4;
  for (int d = 0; exact && d < 4; ++d) {
    for (int c = 0; c < 3; ++c) {
      const int r = triples[d][c];
      const Eigen::RowVectorXd want = raw.trajectories[static_cast<std::size_t>(r / 2)].row(r % 2);
      exact = exact && shape.demos[static_cast<std::size_t>(d)].row(c) == want;
    }
  }
  report(11, exact, "7x1000x2 fixture recombined into row triples [0,1,2],[4,5,6],[8,9,10],[12,3,0] bitwise");
}

// Runs the CLI twice in separate directories and compares numeric CSV outputs.
void criterion_determinism(const fs::path& root) {
  auto run = [](std::vector<std::string> args) {
    std::ostringstream out, err;
    return cli::run(args, out, err);
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  // benchmark.csv carries a wall-clock runtime_s column, which is dropped before comparing.
  auto without_runtime = [&](const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string out;
    for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + '\n';
    return out;
  };
  bool ok = true;
  std::vector<std::string> compared;
  for (const char* tag : {"a", "b"}) {
    const fs::path d = root / tag;
    fs::remove_all(d);
    fs::create_directories(d);
    const std::string demos = (d / "demos").string();
    ok = ok && run({"dataset", "--synth", "n-like", "--manifold", "uq", "--length", "60", "--dt", "0.05", "--out",
                    demos}) == 0;
    ok = ok && run({"train", "--demos", demos, "--layers", "3", "--epochs", "3", "--batch", "32", "--out",
                    (d / "model.json").string()}) == 0;
    const DemoSet set = dataset::load_demoset(demos);
    dataset::write_trajectory_csv((d / "start.csv").string(), {set.demos[1][0]}, set.dt);
    ok = ok && run({"generate", "--model", (d / "model.json").string(), "--start", (d / "start.csv").string(),
                    "--allow-partial", "--out", (d / "traj.csv").string()}) == 0;
    ok = ok && run({"eval", "--demos", demos, "--seeds", "20,21", "--layers", "3", "--epochs", "2", "--batch", "32",
                    "--out", (d / "eval").string()}) == 0;
    ok = ok && run({"search", "--demos", demos, "--trials", "2", "--min-layers", "2", "--max-layers", "3",
                    "--epochs", "1", "--batch", "32", "--out", (d / "search").string()}) == 0;
  }
  for (const char* f : {"demos/demos.csv", "model_history.csv", "traj.csv", "eval/summary.csv",
                        "search/ranked_configs.csv"}) {
    ok = ok && slurp(root / "a" / f) == slurp(root / "b" / f) && !slurp(root / "a" / f).empty();
    compared.push_back(f);
  }
  ok = ok && without_runtime(root / "a" / "eval/benchmark.csv") == without_runtime(root / "b" / "eval/benchmark.csv");
  compared.push_back("eval/benchmark.csv (without runtime_s)");
  std::string list;
  for (const auto& c : compared) list += (list.empty() ? "" : ", ") + c;
  report(12, ok, "repeated dataset/train/generate/eval/search runs byte-identical: " + list);
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "riemflow_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  criterion_round_trips();

  // Criterion 5, first half: the certificate on random raw matrices.
  std::mt19937_64 rng(47);
  std::normal_distribution<double> n(0.0, 3.0);
  double max_eig = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd raw(3, 3);
    for (auto& v : raw.reshaped()) v = n(rng);
    const Eigen::MatrixXd v = flow::make_stable(raw);
    const linalg::SymMatrix sym(0.5 * (v + v.transpose()));
    max_eig = std::max(max_eig, linalg::sym_eig(sym).eigenvalues.maxCoeff());
  }

  criterion_flow();
  criterion_gradient();
  criterion_dtw();
  criterion_recombine();

  // Benchmark: 4 shapes x 2 methods x 3 seeds per manifold, Table 1 defaults at reduced scale.
  std::vector<eval::CellResult> cells;
  std::map<Manifold, std::vector<eval::NamedDemoSet>> suites;
  double seed20_runtime = 0.0;
  for (Manifold m : {Manifold::Spd, Manifold::Uq}) {
    for (auto kind : dataset::all_shapes()) {
      suites[m].push_back({dataset::to_string(kind),
                           dataset::lift_to_manifold(dataset::synth_shape(kind, 4, kLength, 0.05, kDataSeed, kDt), m)});
    }
    const auto t0 = Clock::now();
    auto result = eval::benchmark(suites[m], {eval::Method::RiemannianFlow, eval::Method::Naive}, kSeeds,
                                  table1_config());
    std::cout << "benchmark " << to_string(m) << " finished in " << fmt(seconds_since(t0)) << " s" << std::endl;
    for (auto& c : result.cells) cells.push_back(std::move(c));
  }
  std::vector<eval::MetricReport> rows;
  for (const auto& c : cells) rows.push_back(c.report);
  eval::write_benchmark_csv((work / "benchmark.csv").string(), rows);
  const auto summary = eval::summarize(rows);
  eval::write_summary_csv((work / "summary.csv").string(), summary);
  std::cout << "method,manifold,dtw_mean,dtw_std,cells" << std::endl;
  for (const auto& s : summary) {
    std::cout << to_string(s.method) << ',' << to_string(s.manifold) << ',' << eval::format_double(s.dtw_mean) << ','
              << eval::format_double(s.dtw_std) << ',' << s.cells << std::endl;
  }

  // Seed-20 Riemannian cells stand for "the trained models" of the remaining criteria.
  std::vector<const eval::CellResult*> trained;
  for (const auto& c : cells) {
    if (c.report.method == eval::Method::RiemannianFlow && c.report.seed == 20) {
      trained.push_back(&c);
      seed20_runtime += c.report.runtime_s;
    }
  }
  std::string failed_cells;
  for (const auto& c : cells) {
    if (!c.report.error.empty()) failed_cells += " " + c.report.shape + "/" + to_string(c.report.method) + ": " + c.report.error;
  }
  if (!failed_cells.empty()) std::cout << "failed cells:" << failed_cells << std::endl;

  // Criterion 2.
  std::size_t trajectories = 0, points = 0, good = 0;
  for (const auto* c : trained) {
    for (const auto& traj : c->generated) {
      ++trajectories;
      for (const auto& p : traj) {
        ++points;
        good += satisfies_constraint(p) ? 1 : 0;
      }
    }
  }
  report(2, trajectories >= 20 && good == points && points > 0,
         std::to_string(good) + "/" + std::to_string(points) + " points on " + std::to_string(trajectories) +
             " generated trajectories satisfy unit norm (1e-12) / SPD");

  // Criterion 5, second half: noiseless Euler rollouts of the learned latent systems.
  int rollouts = 0, reached = 0;
  for (const auto* c : trained) {
    if (!c->model) continue;
    const flow::FlowModel& model = *c->model;
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(model.dim(), model.dim()) + model.dt * model.latent.v();
    const auto& suite = suites[c->report.manifold];
    const auto it = std::find_if(suite.begin(), suite.end(),
                                 [&](const eval::NamedDemoSet& s) { return s.name == c->report.shape; });
    for (const auto& seq : preprocess(it->demos).sequences) {
      if (rollouts == 20) break;
      ++rollouts;
      Eigen::VectorXd q = flow::flow_inverse(model, seq.col(0).cwiseQuotient(model.norm_std)).values;
      int step = 0;
      while (q.norm() >= 1e-6 && step < 100000) {
        q = a * q;
        ++step;
      }
      reached += q.norm() < 1e-6 ? 1 : 0;
    }
  }
  report(5, max_eig <= -1e-3 + 1e-12 && rollouts == 20 && reached == 20,
         "200 random V_raw: max eigenvalue of sym(V) " + fmt(max_eig) + " (<= -1e-3); " + std::to_string(reached) +
             "/20 latent rollouts below 1e-6 within 1e5 Euler steps");

  // Criterion 6.
  int starts = 0, converged = 0;
  double worst_dist = 0.0;
  for (const auto* c : trained) {
    for (const auto& traj : c->generated) {
      ++starts;
      const double dist = manifold_distance(traj.back(), suites[c->report.manifold].front().demos.goal);
      worst_dist = std::max(worst_dist, dist);
      converged += dist < 1e-2 ? 1 : 0;
    }
    if (!c->report.converged) converged -= 1000;  // a non-converged generation fails the criterion
  }
  report(6, trained.size() == 8 && starts == 32 && converged == starts && seed20_runtime < 1800.0,
         std::to_string(std::max(converged, 0)) + "/" + std::to_string(starts) +
             " demo starts terminated by xi = 1e-3 within 20*M steps, max final distance " + fmt(worst_dist) +
             " (< 1e-2); 8 trainings took " + fmt(seed20_runtime) + " s (< 1800 s)");

  // Criterion 7.
  std::string seven;
  bool seven_ok = trained.size() == 8;
  for (const auto* c : trained) {
    std::optional<double> d0, d40;
    for (const auto& row : c->history) {
      if (row.epoch == 0) d0 = row.dtw;
      if (row.epoch == 40) d40 = row.dtw;
    }
    const bool ok = d0 && d40 && *d40 < 0.5 * *d0;
    seven_ok = seven_ok && ok;
    seven += " " + c->report.shape + "/" + to_string(c->report.manifold) + " " + (d0 ? fmt(*d0) : "?") + "->" +
             (d40 ? fmt(*d40) : "?");
  }
  report(7, seven_ok, "DTW epoch 0 -> epoch 40 (< 50%):" + seven);

  // Criterion 8.
  auto mean_of = [&](eval::Method method, Manifold m) {
    for (const auto& s : summary) {
      if (s.method == method && s.manifold == m) return s.dtw_mean;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  int naive_violations = 0, flow_violations = 0;
  for (const auto& r : rows) {
    if (r.manifold != Manifold::Uq) continue;
    (r.method == eval::Method::Naive ? naive_violations : flow_violations) += r.clip_events;
  }
  for (const auto& r : rows) {
    if (r.manifold == Manifold::Spd && r.method == eval::Method::RiemannianFlow) flow_violations += r.clip_events;
  }
  const double spd_flow = mean_of(eval::Method::RiemannianFlow, Manifold::Spd);
  const double spd_naive = mean_of(eval::Method::Naive, Manifold::Spd);
  report(8, spd_flow <= spd_naive && naive_violations > 0 && flow_violations == 0 && failed_cells.empty(),
         "SPD mean DTW riemannian " + fmt(spd_flow) + " <= naive " + fmt(spd_naive) + " over 3 seeds; UQ riemannian " +
             fmt(mean_of(eval::Method::RiemannianFlow, Manifold::Uq)) + " vs naive " +
             fmt(mean_of(eval::Method::Naive, Manifold::Uq)) + " (reported); naive UQ violations " +
             std::to_string(naive_violations) + " (> 0), riemannian violations " + std::to_string(flow_violations) +
             " (= 0)");

  // Criterion 10.
  int lines_total = 0, lines_ok = 0;
  double worst_final = 0.0;
  for (const auto* c : trained) {
    if (!c->model) continue;
    const auto& suite = suites[c->report.manifold];
    const auto it = std::find_if(suite.begin(), suite.end(),
                                 [&](const eval::NamedDemoSet& s) { return s.name == c->report.shape; });
    const eval::Plane plane = eval::fit_plane(preprocess(it->demos));
    for (const auto& line : eval::streamlines(*c->model, plane, 100, 10000, c->model->dt, 20)) {
      ++lines_total;
      worst_final = std::max(worst_final, line.final_norm);
      lines_ok += line.final_norm < kDefaultXi ? 1 : 0;
    }
  }
  report(10, lines_total == 800 && lines_ok == lines_total,
         std::to_string(lines_ok) + "/" + std::to_string(lines_total) +
             " streamlines (100 per trained model) end within xi of the origin, worst " + fmt(worst_final));

  criterion_determinism(work / "determinism");

  int failures = 0;
  for (const auto& [id, r] : results) {
    failures += r.first ? 0 : 1;
    std::cout << "criterion " << id << ": " << (r.first ? "PASS" : "FAIL") << " - " << r.second << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}

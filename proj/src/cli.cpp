#include "riemflow/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "riemflow/dataset.hpp"
#include "riemflow/errors.hpp"
#include "riemflow/eval.hpp"
#include "riemflow/train.hpp"

namespace riemflow::cli {

namespace fs = std::filesystem;

namespace {

struct TrainFlags {
  int layers = 11;
  std::string activation = "relu";
  std::string optimizer = "adam";
  double lr = train::kTable1LearningRate;
  int epochs = 100;
  int batch = 128;
  std::uint64_t seed = 20;
  bool freeze_f = false;
  double xi = kDefaultXi;

  void add_to(CLI::App* app) {
    app->add_option("--layers", layers, "Coupling layers")->capture_default_str();
    app->add_option("--activation", activation, "relu | tanh")->capture_default_str();
    app->add_option("--optimizer", optimizer, "adam | adamax | sgd | rmsprop")->capture_default_str();
    app->add_option("--lr", lr, "Learning rate")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--batch", batch, "Mini-batch size")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_flag("--freeze-f", freeze_f, "Keep the latent diffusion fixed");
    app->add_option("--xi", xi, "Convergence threshold on the tangent norm")->capture_default_str();
  }

  train::TrainConfig config() const {
    train::TrainConfig c;
    c.layers = layers;
    c.activation = flow::activation_from_string(activation);
    c.optimizer = train::optimizer_from_string(optimizer);
    c.learning_rate = lr;
    c.epochs = epochs;
    c.batch_size = batch;
    c.seed = seed;
    c.freeze_f = freeze_f;
    c.xi = xi;
    c.validate();
    return c;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string stem_path(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

// Echoes the resolved options of a subcommand as a config section that
// `riemflow --config <file> <subcommand>` reads back.
void echo_config(const CLI::App& app, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << '[' << app.get_name() << "]\n";
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help" || opt->get_lnames().front() == "config") {
      continue;
    }
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
      if (opt->results().size() > 1) value = '[' + value + ']';
    } else {
      value = opt->get_default_str();
    }
    if (opt->get_type_size() == 0 && value.empty()) value = "false";
    if (value.empty()) continue;
    out << opt->get_lnames().front() << '=' << value << '\n';
  }
}

int cmd_dataset(const std::string& input, const std::string& synth, const std::string& manifold_name,
                const std::string& out_dir, std::uint64_t seed, int length, double noise, double dt, bool verify,
                std::ostream& out) {
  if (input.empty() == synth.empty()) throw Error(ErrorCode::InvalidArgument, "give exactly one of --input or --synth");
  const Manifold manifold = manifold_from_string(manifold_name);
  dataset::RiemannianShape shape;
  if (!input.empty()) {
    dataset::RawShape raw = dataset::load_raw(input);
    shape = dataset::recombine(raw);
  } else {
    shape = dataset::synth_shape(dataset::shape_from_string(synth), 4, length, noise, seed, dt);
  }
  const DemoSet demos = dataset::lift_to_manifold(shape, manifold);
  if (verify) {
    const TangentDemoSet tangent = preprocess(demos);
    const double scale = dataset::tangent_scale(shape, manifold);
    double worst = 0.0;
    for (std::size_t n = 0; n < shape.demos.size(); ++n) {
      const Eigen::MatrixXd& d = shape.demos[n];
      const Eigen::MatrixXd want = scale * (d.colwise() - Eigen::VectorXd(d.col(d.cols() - 1)));
      worst = std::max(worst, (tangent.sequences[n] - want).cwiseAbs().maxCoeff());
    }
    out << "round-trip max error " << eval::format_double(worst) << '\n';
    if (worst > 1e-8) throw Error(ErrorCode::InvalidArgument, "lift round-trip exceeds 1e-8");
  }
  dataset::save_demoset(out_dir, demos, shape.name);
  out << "wrote " << demos.demos.size() << " demonstrations of " << demos.length() << " samples to " << out_dir
      << '\n';
  return kExitOk;
}

TangentDemoSet prepare(const DemoSet& demos, eval::Method method) {
  return method == eval::Method::RiemannianFlow ? preprocess(demos) : eval::embed_naive(demos);
}

int cmd_train(const std::string& demos_dir, const TrainFlags& flags, const std::string& method_name,
              const std::string& out_path, const std::string& history_path, const std::string& checkpoint,
              std::ostream& out) {
  const train::TrainConfig config = flags.config();
  const DemoSet demos = dataset::load_demoset(demos_dir);
  const TangentDemoSet data = prepare(demos, eval::method_from_string(method_name));
  train::TrainResult result = train::train(train::initial_model(data, config), data, config);
  flow::save_model(result.model, out_path);
  train::write_history_csv(history_path.empty() ? stem_path(out_path, "_history.csv") : history_path, result.history);
  if (!checkpoint.empty()) train::save_checkpoint(checkpoint, result.model, result.optimizer);
  if (!result.history.empty()) {
    out << "final loss " << eval::format_double(result.history.back().loss);
    if (result.history.back().dtw) out << ", dtw " << eval::format_double(*result.history.back().dtw);
    out << '\n';
  }
  if (result.learning_rate_halved) out << "note: learning rate halved after a non-finite epoch\n";
  return kExitOk;
}

int cmd_generate(const std::string& model_path, const std::string& start_path, double xi, int max_steps,
                 std::optional<double> dt, bool stochastic, std::uint64_t noise_seed, bool allow_partial, bool verify,
                 const std::string& out_path, std::ostream& out, std::ostream& err) {
  const flow::FlowModel model = flow::load_model(model_path);
  const ManifoldPoint start = dataset::read_trajectory_csv(start_path).front();
  GenerateOptions options;
  options.xi = xi;
  options.max_steps = max_steps;
  options.dt = dt;
  options.stochastic = stochastic;
  options.noise_seed = noise_seed;
  std::vector<ManifoldPoint> points;
  bool converged = false;
  double step_dt = dt.value_or(model.dt);
  if (model.chart == flow::Chart::Tangent) {
    Trajectory traj = generate(model, start, options);
    points = std::move(traj.points);
    converged = traj.converged;
  } else {
    eval::NaiveTrajectory traj = eval::naive_generate(model, start, options);
    points = std::move(traj.points);
    converged = traj.converged;
    out << "repaired " << traj.violations << " off-manifold states\n";
  }
  dataset::write_trajectory_csv(out_path, points, step_dt);
  if (verify) {
    std::size_t bad = 0;
    for (const auto& p : points) bad += satisfies_constraint(p) ? 0 : 1;
    out << "verify: " << points.size() - bad << "/" << points.size() << " points satisfy the manifold constraint\n";
    if (bad > 0) return kExitUsage;
  }
  out << "generated " << points.size() << " points, final distance to goal "
      << eval::format_double(manifold_distance(points.back(), *model.goal)) << '\n';
  if (!converged) {
    err << "generation stopped at max steps before reaching xi\n";
    if (!allow_partial) return kExitNotConverged;
  }
  return kExitOk;
}

std::vector<eval::NamedDemoSet> load_shapes(const std::vector<std::string>& demo_dirs, const std::string& synth,
                                            const std::string& manifold_name, int length, double noise,
                                            std::uint64_t data_seed, double dt) {
  std::vector<eval::NamedDemoSet> shapes;
  for (const auto& dir : demo_dirs) {
    std::string name;
    DemoSet d = dataset::load_demoset(dir, &name);
    shapes.push_back({name.empty() ? fs::path(dir).filename().string() : name, std::move(d)});
  }
  if (!synth.empty()) {
    const Manifold manifold = manifold_from_string(manifold_name);
    std::vector<dataset::ShapeKind> kinds;
    if (synth == "all") {
      kinds = dataset::all_shapes();
    } else {
      for (const auto& s : split_list(synth)) kinds.push_back(dataset::shape_from_string(s));
    }
    for (auto kind : kinds) {
      shapes.push_back({dataset::to_string(kind),
                        dataset::lift_to_manifold(dataset::synth_shape(kind, 4, length, noise, data_seed, dt), manifold)});
    }
  }
  if (shapes.empty()) throw Error(ErrorCode::InvalidArgument, "give --demos and/or --synth");
  return shapes;
}

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

int cmd_eval(const std::vector<eval::NamedDemoSet>& shapes, const std::string& methods, const std::string& seeds,
             const TrainFlags& flags, bool stream, int jobs, const std::string& out_dir, std::ostream& out,
             std::ostream& err) {
  train::TrainConfig config = flags.config();
  config.monitor_dtw = false;
  std::vector<eval::Method> method_list;
  for (const auto& m : split_list(methods)) method_list.push_back(eval::method_from_string(m));
  std::vector<std::uint64_t> seed_list;
  for (const auto& s : split_list(seeds)) {
    try {
      seed_list.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad seed '" + s + "'");
    }
  }
  fs::create_directories(out_dir);
  const eval::BenchmarkResult result = eval::benchmark(shapes, method_list, seed_list, config, jobs);
  std::vector<eval::MetricReport> rows;
  int ok = 0;
  for (const auto& c : result.cells) {
    rows.push_back(c.report);
    if (c.report.error.empty()) {
      ++ok;
    } else {
      err << c.report.shape << '/' << to_string(c.report.method) << '/' << c.report.seed << ": " << c.report.error
          << '\n';
    }
  }
  eval::write_benchmark_csv((fs::path(out_dir) / "benchmark.csv").string(), rows);
  eval::write_summary_csv((fs::path(out_dir) / "summary.csv").string(), result.summary);
  for (const auto& s : result.summary) {
    out << to_string(s.method) << ' ' << to_string(s.manifold) << ": dtw " << eval::format_double(s.dtw_mean)
        << " +- " << eval::format_double(s.dtw_std) << " over " << s.cells << " cells\n";
  }
  if (stream) {
    for (const auto& shape : shapes) {
      const auto it = std::find_if(result.cells.begin(), result.cells.end(), [&](const eval::CellResult& c) {
        return c.report.shape == shape.name && c.report.method == eval::Method::RiemannianFlow && c.model;
      });
      if (it == result.cells.end()) continue;
      const TangentDemoSet data = preprocess(shape.demos);
      const eval::Plane plane = eval::fit_plane(data);
      const eval::StreamField field = eval::stream_field(*it->model, plane, 20);
      const auto lines = eval::streamlines(*it->model, plane, 100, 10000, it->model->dt, flags.seed);
      const std::string base =
          (fs::path(out_dir) / ("stream_" + file_safe(shape.name) + "_" + to_string(shape.demos.manifold))).string();
      eval::write_stream_csv(base + ".csv", field);
      eval::write_stream_svg(base + ".svg", field, lines, data);
    }
  }
  return ok > 0 ? kExitOk : kExitBenchmarkFailed;
}

int cmd_search(const std::string& demos_dir, const std::string& method_name, const TrainFlags& flags, int trials,
               train::SearchSpace space, int jobs, const std::string& out_dir, const std::string& save_best,
               std::ostream& out) {
  train::TrainConfig base = flags.config();
  base.monitor_dtw = false;
  const DemoSet demos = dataset::load_demoset(demos_dir);
  const TangentDemoSet data = prepare(demos, eval::method_from_string(method_name));
  auto results = train::random_search(data, space, trials, flags.seed, base, jobs);
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "ranked_configs.csv").string();
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw Error(ErrorCode::Io, "cannot write " + path);
  csv << "rank,trial,layers,activation,optimizer,lr,dtw,error\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    std::string error = r.error;
    for (char& c : error) {
      if (c == ',' || c == '\n') c = ';';
    }
    csv << i + 1 << ',' << r.trial << ',' << r.config.layers << ',' << flow::to_string(r.config.activation) << ','
        << train::to_string(r.config.optimizer) << ',' << eval::format_double(r.config.learning_rate) << ','
        << eval::format_double(r.dtw) << ',' << error << '\n';
  }
  if (!save_best.empty() && results.front().model) flow::save_model(*results.front().model, save_best);
  out << "best trial " << results.front().trial << ": dtw " << eval::format_double(results.front().dtw) << '\n';
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::TrainingDiverged: return kExitDiverged;
    default: return kExitUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stable motion learning on Riemannian manifolds", "riemflow"};
  app.require_subcommand(0, 1);
  app.set_config("--config", "", "INI file with one [subcommand] section of flag=value lines");
  int jobs = 1;
  app.add_option("--jobs", jobs, "Worker threads for eval and search")->capture_default_str();
  bool version = false;
  app.add_flag("--version", version, "Print version and schema versions");

  // dataset
  auto* ds = app.add_subcommand("dataset", "Build a demonstration set");
  std::string ds_input, ds_synth, ds_manifold, ds_out;
  std::uint64_t ds_seed = 20;
  int ds_length = dataset::kLasaLength;
  double ds_noise = 0.05, ds_dt = dataset::kDefaultDt;
  bool ds_verify = false;
  ds->add_option("--input", ds_input, "Raw CSV with header demo,t,x,y (7 x 1000 samples)");
  ds->add_option("--synth", ds_synth, "spiral | s-curve | angle | n-like");
  ds->add_option("--manifold", ds_manifold, "spd | uq")->required();
  ds->add_option("--out", ds_out, "Output directory")->required();
  ds->add_option("--seed", ds_seed, "Synthetic jitter seed")->capture_default_str();
  ds->add_option("--length", ds_length, "Synthetic samples per demonstration")->capture_default_str();
  ds->add_option("--noise", ds_noise, "Synthetic jitter scale")->capture_default_str();
  ds->add_option("--dt", ds_dt, "Sampling time of synthetic data")->capture_default_str();
  ds->add_flag("--verify", ds_verify, "Check the lift/preprocess round trip");

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a demonstration set");
  TrainFlags tr_flags;
  std::string tr_demos, tr_method = "riemannian", tr_out, tr_history, tr_checkpoint;
  tr->add_option("--demos", tr_demos, "Demonstration directory")->required();
  tr->add_option("--method", tr_method, "riemannian | naive")->capture_default_str();
  tr->add_option("--out", tr_out, "Model file")->required();
  tr->add_option("--history", tr_history, "History CSV (default <out>_history.csv)");
  tr->add_option("--checkpoint", tr_checkpoint, "Also write model + optimizer state");
  tr_flags.add_to(tr);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a trajectory from a start point");
  std::string gen_model, gen_start, gen_out;
  double gen_xi = kDefaultXi;
  int gen_max_steps = 20000;
  std::optional<double> gen_dt;
  bool gen_stochastic = false, gen_partial = false, gen_verify = false;
  std::uint64_t gen_noise_seed = 0;
  gen->add_option("--model", gen_model, "Model file")->required();
  gen->add_option("--start", gen_start, "Trajectory CSV whose first row is the start point")->required();
  gen->add_option("--xi", gen_xi, "Stop when the tangent norm drops below xi")->capture_default_str();
  gen->add_option("--max-steps", gen_max_steps, "Step limit")->capture_default_str();
  gen->add_option("--dt", gen_dt, "Integration step (default: the model's)");
  gen->add_flag("--stochastic", gen_stochastic, "Add the learned latent diffusion");
  gen->add_option("--noise-seed", gen_noise_seed, "Seed for --stochastic")->capture_default_str();
  gen->add_flag("--allow-partial", gen_partial, "Exit 0 even when max steps is reached");
  gen->add_flag("--verify", gen_verify, "Check every point against its manifold constraint");
  gen->add_option("--out", gen_out, "Trajectory CSV")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Benchmark methods over shapes and seeds");
  TrainFlags ev_flags;
  std::vector<std::string> ev_demos;
  std::string ev_synth, ev_manifold = "spd", ev_methods = "riemannian,naive", ev_seeds = "20,21,22", ev_out;
  int ev_length = dataset::kLasaLength;
  double ev_noise = 0.05, ev_dt = dataset::kDefaultDt;
  std::uint64_t ev_data_seed = 20;
  bool ev_stream = false;
  ev->add_option("--demos", ev_demos, "Demonstration directories, one per shape");
  ev->add_option("--synth", ev_synth, "Synthetic shapes: all or a comma list");
  ev->add_option("--manifold", ev_manifold, "Manifold of synthetic shapes")->capture_default_str();
  ev->add_option("--length", ev_length, "Synthetic samples per demonstration")->capture_default_str();
  ev->add_option("--noise", ev_noise, "Synthetic jitter scale")->capture_default_str();
  ev->add_option("--dt", ev_dt, "Sampling time of synthetic data")->capture_default_str();
  ev->add_option("--data-seed", ev_data_seed, "Synthetic jitter seed")->capture_default_str();
  ev->add_option("--methods", ev_methods, "Comma list of riemannian, naive")->capture_default_str();
  ev->add_option("--seeds", ev_seeds, "Comma list of training seeds")->capture_default_str();
  ev->add_flag("--stream", ev_stream, "Emit stream fields and SVG plots per shape");
  ev->add_option("--out", ev_out, "Output directory")->required();
  ev_flags.add_to(ev);
  ev->remove_option(ev->get_option("--seed"));

  // search
  auto* se = app.add_subcommand("search", "Random hyperparameter search");
  TrainFlags se_flags;
  std::string se_demos, se_method = "riemannian", se_out, se_best, se_activations = "relu,tanh",
                        se_optimizers = "adam,adamax,sgd,rmsprop";
  int se_trials = 20;
  train::SearchSpace space;
  se->add_option("--demos", se_demos, "Demonstration directory")->required();
  se->add_option("--method", se_method, "riemannian | naive")->capture_default_str();
  se->add_option("--trials", se_trials, "Number of sampled configurations")->capture_default_str();
  se->add_option("--min-layers", space.min_layers)->capture_default_str();
  se->add_option("--max-layers", space.max_layers)->capture_default_str();
  se->add_option("--activations", se_activations)->capture_default_str();
  se->add_option("--optimizers", se_optimizers)->capture_default_str();
  se->add_option("--min-lr", space.min_lr)->capture_default_str();
  se->add_option("--max-lr", space.max_lr)->capture_default_str();
  se->add_option("--save-best", se_best, "Write the best trial's model");
  se->add_option("--out", se_out, "Output directory")->required();
  se_flags.add_to(se);
  for (const char* name : {"--layers", "--activation", "--optimizer", "--lr"}) se->remove_option(se->get_option(name));

  std::vector<std::string> argv_store{"riemflow"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (version) {
      out << "riemflow " << kVersion << " (model schema " << flow::kModelSchemaVersion
          << ", checkpoint schema " << flow::kModelSchemaVersion << ", demoset schema 1)\n";
      return kExitOk;
    }
    if (*ds) {
      if (ds_input.empty() == ds_synth.empty()) {
        throw Error(ErrorCode::InvalidArgument, "give exactly one of --input or --synth");
      }
      const int code = cmd_dataset(ds_input, ds_synth, ds_manifold, ds_out, ds_seed, ds_length, ds_noise, ds_dt,
                                   ds_verify, out);
      echo_config(*ds, (fs::path(ds_out) / "run.cfg").string());
      return code;
    }
    if (*tr) {
      const int code = cmd_train(tr_demos, tr_flags, tr_method, tr_out, tr_history, tr_checkpoint, out);
      echo_config(*tr, stem_path(tr_out, "_run.cfg"));
      return code;
    }
    if (*gen) {
      return cmd_generate(gen_model, gen_start, gen_xi, gen_max_steps, gen_dt, gen_stochastic, gen_noise_seed,
                          gen_partial, gen_verify, gen_out, out, err);
    }
    if (*ev) {
      const auto shapes = load_shapes(ev_demos, ev_synth, ev_manifold, ev_length, ev_noise, ev_data_seed, ev_dt);
      const int code = cmd_eval(shapes, ev_methods, ev_seeds, ev_flags, ev_stream, jobs, ev_out, out, err);
      echo_config(*ev, (fs::path(ev_out) / "run.cfg").string());
      return code;
    }
    if (*se) {
      space.activations.clear();
      for (const auto& a : split_list(se_activations)) space.activations.push_back(flow::activation_from_string(a));
      space.optimizers.clear();
      for (const auto& o : split_list(se_optimizers)) space.optimizers.push_back(train::optimizer_from_string(o));
      const int code = cmd_search(se_demos, se_method, se_flags, se_trials, space, jobs, se_out, se_best, out);
      echo_config(*se, (fs::path(se_out) / "run.cfg").string());
      return code;
    }
    out << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "riemflow: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "riemflow: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace riemflow::cli

#include "riemflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "riemflow/errors.hpp"
#include "riemflow/eval.hpp"
#include "riemflow/json_io.hpp"
#include "riemflow/parallel.hpp"
#include "riemflow/tape.hpp"

namespace riemflow::train {

using flow::FlowModel;
using flow::Mlp;

void TrainConfig::validate() const {
  if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
  if (eval_every < 1) throw Error(ErrorCode::InvalidArgument, "eval_every must be positive");
  if (layers < 1 || hidden < 1) throw Error(ErrorCode::InvalidArgument, "layers and hidden must be positive");
  if (!(learning_rate > 0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (!(xi > 0) || max_steps_factor < 1) throw Error(ErrorCode::InvalidArgument, "xi / max steps factor");
}

PairBatch all_pairs(const TangentDemoSet& data) {
  Eigen::Index count = 0;
  for (const auto& s : data.sequences) count += std::max<Eigen::Index>(0, s.cols() - 1);
  const int k = data.dim();
  PairBatch out{Eigen::MatrixXd(k, count), Eigen::MatrixXd(k, count)};
  const Eigen::VectorXd inv_std = data.std.cwiseInverse();
  Eigen::Index c = 0;
  for (const auto& s : data.sequences) {
    for (Eigen::Index m = 0; m + 1 < s.cols(); ++m, ++c) {
      out.from.col(c) = s.col(m).cwiseProduct(inv_std);
      out.to.col(c) = s.col(m + 1).cwiseProduct(inv_std);
    }
  }
  return out;
}

double nll_loss(const FlowModel& model, const PairBatch& batch, double dt) {
  const auto inv_from = flow::flow_inverse(model, batch.from);
  const auto inv_to = flow::flow_inverse(model, batch.to);
  double total = 0.0;
  for (Eigen::Index j = 0; j < batch.from.cols(); ++j) {
    total -= flow::latent_transition_logpdf(model.latent, inv_from.values.col(j), inv_to.values.col(j), dt) +
             inv_to.logdet(j);
  }
  const double loss = total / static_cast<double>(batch.from.cols());
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFinite, "loss");
  return loss;
}

namespace {

using Id = Tape::Id;

struct MlpIds {
  std::vector<Id> weights;
  std::vector<Id> biases;
};

Id mlp_on_tape(Tape& tape, const Mlp& net, const MlpIds& ids, Id x) {
  Id h = x;
  for (std::size_t l = 0; l + 1 < ids.weights.size(); ++l) {
    h = tape.add_bias(tape.matmul(ids.weights[l], h), ids.biases[l]);
    h = net.activation == flow::Activation::Relu ? tape.relu(h) : tape.tanh(h);
  }
  return tape.matmul(ids.weights.back(), h);
}

}  // namespace

LossAndGrad nll_loss_and_grad(const FlowModel& model, const PairBatch& batch, double dt) {
  const int k = model.dim();
  const auto b = static_cast<int>(batch.from.cols());
  Tape tape;

  // Parameter leaves in FlowModel::parameters() order.
  std::vector<Id> param_ids;
  struct LayerIds {
    MlpIds scale, shift;
  };
  std::vector<LayerIds> layer_ids;
  for (const auto& layer : model.layers) {
    LayerIds ids;
    for (auto [net, out] : {std::pair{&layer.scale_net, &ids.scale}, std::pair{&layer.shift_net, &ids.shift}}) {
      for (const auto& w : net->weights) param_ids.push_back(out->weights.emplace_back(tape.variable(w)));
      for (const auto& bias : net->biases) param_ids.push_back(out->biases.emplace_back(tape.variable(bias)));
    }
    layer_ids.push_back(std::move(ids));
  }
  const Id v_raw = tape.variable(model.latent.v_raw);
  param_ids.push_back(v_raw);
  const Id f_phi = model.latent.freeze_f ? tape.constant(model.latent.f_phi) : tape.variable(model.latent.f_phi);
  if (!model.latent.freeze_f) param_ids.push_back(f_phi);

  // Pull both ends of every pair back through the inverse flow in one pass.
  Eigen::MatrixXd stacked(k, 2 * b);
  stacked << batch.from, batch.to;
  Id y = tape.constant(stacked);
  Id log_scale_sum = -1;
  const Id zero = tape.constant(Eigen::VectorXd::Zero(k));
  for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = model.layers[l];
    const Eigen::VectorXd low = layer.lower_mask();
    const Id x_up = tape.row_scale(y, layer.upper_mask());
    const Id raw = mlp_on_tape(tape, layer.scale_net, layer_ids[l].scale, x_up);
    const Id s = tape.row_scale(tape.scale(tape.tanh(tape.scale(raw, 1.0 / flow::kScaleClamp)), flow::kScaleClamp), low);
    const Id g = mlp_on_tape(tape, layer.shift_net, layer_ids[l].shift, x_up);
    const Id g0 = mlp_on_tape(tape, layer.shift_net, layer_ids[l].shift, zero);
    const Id t = tape.row_scale(tape.add_bias(g, tape.scale(g0, -1.0)), low);
    y = tape.cwise_mul(tape.sub(y, t), tape.exp(tape.scale(s, -1.0)));
    const Id cs = tape.col_sum(s);
    log_scale_sum = log_scale_sum < 0 ? cs : tape.add(log_scale_sum, cs);
  }
  const Id q_from = tape.cols(y, 0, b);
  const Id q_to = tape.cols(y, b, b);

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);
  const Id vt = tape.transpose(v_raw);
  const Id sym = tape.scale(tape.add(v_raw, vt), 0.5);
  const Id skew = tape.scale(tape.sub(v_raw, vt), 0.5);
  const Id v = tape.sub(skew, tape.add_const(tape.matmul(sym, tape.transpose(sym)), flow::kStabilityMargin * eye));
  const Id mean = tape.add(q_from, tape.scale(tape.matmul(v, q_from), dt));
  const Id residual = tape.sub(q_to, mean);
  const Id cov = tape.add_const(tape.scale(tape.matmul(f_phi, tape.transpose(f_phi)), dt), flow::kCovarianceJitter * eye);
  Id total = tape.gaussian_nll(residual, cov);
  // -log|det J_inv(p_next)| = +sum of log-scales along the inverse pass.
  if (log_scale_sum >= 0) total = tape.add(total, tape.sum_all(tape.cols(log_scale_sum, b, b)));
  const double constant = 0.5 * k * std::log(2.0 * M_PI);
  const Id loss = tape.add_const(tape.scale(total, 1.0 / b), Eigen::MatrixXd::Constant(1, 1, constant));

  tape.backward(loss);
  LossAndGrad out;
  out.loss = tape.scalar(loss);
  out.grads.reserve(param_ids.size());
  for (Id id : param_ids) out.grads.push_back(tape.grad(id));
  return out;
}

FlowModel initial_model(const TangentDemoSet& data, const TrainConfig& config) {
  flow::FlowConfig fc;
  fc.dim = data.dim();
  fc.layers = config.layers;
  fc.hidden = config.hidden;
  fc.activation = config.activation;
  fc.seed = config.seed;
  fc.freeze_f = config.freeze_f;
  FlowModel model = flow::make_model(fc);
  model.norm_mean = data.mean;
  model.norm_std = data.std;
  model.dt = data.dt;
  model.manifold = data.manifold;
  model.chart = data.chart;
  model.goal = data.goal;
  return model;
}

double reproduction_dtw(const FlowModel& model, const TangentDemoSet& data, const TrainConfig& config) {
  GenerateOptions options;
  options.xi = config.xi;
  double total = 0.0;
  for (const auto& seq : data.sequences) {
    options.max_steps = config.max_steps_factor * static_cast<int>(seq.cols());
    const TangentTrajectory gen = generate_tangent(model, seq.col(0), options);
    std::vector<Eigen::VectorXd> demo(static_cast<std::size_t>(seq.cols()));
    for (Eigen::Index m = 0; m < seq.cols(); ++m) demo[static_cast<std::size_t>(m)] = seq.col(m);
    total += eval::dtw(gen.states, demo);
  }
  return total / static_cast<double>(data.sequences.size());
}

namespace {

bool all_finite(const LossAndGrad& lg) {
  if (!std::isfinite(lg.loss)) return false;
  return std::all_of(lg.grads.begin(), lg.grads.end(), [](const Eigen::MatrixXd& g) { return g.allFinite(); });
}

}  // namespace

TrainResult train(FlowModel model, const TangentDemoSet& data, const TrainConfig& config) {
  config.validate();
  if (data.sequences.empty()) throw Error(ErrorCode::EmptySequence, "no demonstrations to train on");
  TrainResult result;
  result.optimizer = make_optimizer(config.optimizer, config.learning_rate);
  if (config.epochs == 0) {
    result.model = std::move(model);
    return result;
  }

  const PairBatch pairs = all_pairs(data);
  const auto n_pairs = static_cast<std::size_t>(pairs.from.cols());
  if (n_pairs == 0) throw Error(ErrorCode::EmptySequence, "demonstrations need at least two samples");
  std::vector<std::size_t> order(n_pairs);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);

  auto evaluate = [&](int epoch, double loss) {
    HistoryRow row{epoch, loss, std::nullopt};
    if (config.monitor_dtw && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      row.dtw = reproduction_dtw(model, data, config);
    }
    result.history.push_back(row);
  };
  evaluate(0, nll_loss(model, pairs, data.dt));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const FlowModel snapshot = model;
    const OptimizerState opt_snapshot = result.optimizer;
    const auto rng_snapshot = rng;
    double epoch_loss = 0.0;
    bool diverged = false;
    do {
      diverged = false;
      epoch_loss = 0.0;
      std::shuffle(order.begin(), order.end(), rng);
      std::size_t seen = 0;
      for (std::size_t start = 0; start < n_pairs; start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n_pairs - start);
        PairBatch batch{Eigen::MatrixXd(pairs.from.rows(), static_cast<Eigen::Index>(count)),
                        Eigen::MatrixXd(pairs.from.rows(), static_cast<Eigen::Index>(count))};
        for (std::size_t i = 0; i < count; ++i) {
          batch.from.col(static_cast<Eigen::Index>(i)) = pairs.from.col(static_cast<Eigen::Index>(order[start + i]));
          batch.to.col(static_cast<Eigen::Index>(i)) = pairs.to.col(static_cast<Eigen::Index>(order[start + i]));
        }
        LossAndGrad lg;
        try {
          lg = nll_loss_and_grad(model, batch, data.dt);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::SingularCovariance && e.code() != ErrorCode::NonFinite) throw;
          lg.loss = std::numeric_limits<double>::quiet_NaN();
        }
        if (!all_finite(lg)) {
          diverged = true;
          break;
        }
        epoch_loss += lg.loss * static_cast<double>(count);
        seen += count;
        optimizer_step(result.optimizer, model.parameters(), lg.grads);
      }
      if (!diverged) {
        // A step can still push parameters to a non-finite state.
        for (const auto* p : std::as_const(model).parameters()) {
          if (!p->allFinite()) diverged = true;
        }
      }
      if (diverged) {
        if (result.learning_rate_halved) {
          throw Error(ErrorCode::TrainingDiverged,
                      "non-finite loss at epoch " + std::to_string(epoch) + " after halving the learning rate");
        }
        model = snapshot;
        const double lr = result.optimizer.learning_rate;
        result.optimizer = opt_snapshot;
        result.optimizer.learning_rate = 0.5 * lr;
        rng = rng_snapshot;
        result.learning_rate_halved = true;
      } else {
        epoch_loss /= static_cast<double>(seen);
      }
    } while (diverged);
    evaluate(epoch, epoch_loss);
  }
  result.model = std::move(model);
  return result;
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "epoch,loss,dtw\n";
  for (const auto& row : history) {
    out << row.epoch << ',' << eval::format_double(row.loss) << ',';
    if (row.dtw) out << eval::format_double(*row.dtw);
    out << '\n';
  }
}

void save_checkpoint(const std::string& path, const FlowModel& model, const OptimizerState& optimizer) {
  nlohmann::json buffers_first = nlohmann::json::array(), buffers_second = nlohmann::json::array();
  for (const auto& m : optimizer.first) buffers_first.push_back(io::matrix_to_json(m));
  for (const auto& v : optimizer.second) buffers_second.push_back(io::matrix_to_json(v));
  const nlohmann::json doc = {
      {"schema", "riemflow.checkpoint"},
      {"version", flow::kModelSchemaVersion},
      {"model", nlohmann::json::parse(flow::model_to_string(model))},
      {"optimizer",
       {{"kind", to_string(optimizer.kind)},
        {"learning_rate", optimizer.learning_rate},
        {"beta1", optimizer.beta1},
        {"beta2", optimizer.beta2},
        {"epsilon", optimizer.epsilon},
        {"rms_alpha", optimizer.rms_alpha},
        {"step", optimizer.step},
        {"first", buffers_first},
        {"second", buffers_second}}},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << doc.dump(1) << '\n';
}

std::pair<FlowModel, OptimizerState> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    const auto doc = nlohmann::json::parse(buf.str());
    if (doc.at("schema").get<std::string>() != "riemflow.checkpoint") {
      throw Error(ErrorCode::SchemaError, "not a riemflow checkpoint");
    }
    FlowModel model = flow::model_from_string(doc.at("model").dump());
    const auto& o = doc.at("optimizer");
    OptimizerState state = make_optimizer(optimizer_from_string(o.at("kind").get<std::string>()),
                                          o.at("learning_rate").get<double>());
    state.beta1 = o.at("beta1").get<double>();
    state.beta2 = o.at("beta2").get<double>();
    state.epsilon = o.at("epsilon").get<double>();
    state.rms_alpha = o.at("rms_alpha").get<double>();
    state.step = o.at("step").get<long>();
    for (const auto& m : o.at("first")) state.first.push_back(io::matrix_from_json(m));
    for (const auto& v : o.at("second")) state.second.push_back(io::matrix_from_json(v));
    return {std::move(model), std::move(state)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("checkpoint: ") + e.what());
  }
}

std::vector<TrialResult> random_search(const TangentDemoSet& data, const SearchSpace& space, int trials,
                                       std::uint64_t seed, const TrainConfig& base, int jobs) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  if (space.min_layers < 1 || space.max_layers < space.min_layers || space.activations.empty() ||
      space.optimizers.empty() || !(space.min_lr > 0) || space.max_lr < space.min_lr) {
    throw Error(ErrorCode::InvalidArgument, "empty or invalid search space");
  }
  std::vector<TrialResult> results(static_cast<std::size_t>(trials));
  // Sample every configuration up front so the set does not depend on `jobs`.
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(t));
    TrainConfig cfg = base;
    cfg.seed = seed;
    cfg.layers = std::uniform_int_distribution<int>(space.min_layers, space.max_layers)(rng);
    cfg.activation = space.activations[std::uniform_int_distribution<std::size_t>(0, space.activations.size() - 1)(rng)];
    cfg.optimizer = space.optimizers[std::uniform_int_distribution<std::size_t>(0, space.optimizers.size() - 1)(rng)];
    const double log_lr = std::uniform_real_distribution<double>(std::log(space.min_lr), std::log(space.max_lr))(rng);
    cfg.learning_rate = space.min_lr == space.max_lr ? space.min_lr : std::exp(log_lr);
    results[static_cast<std::size_t>(t)].trial = t;
    results[static_cast<std::size_t>(t)].config = cfg;
  }
  parallel_for(results.size(), jobs, [&](std::size_t i) {
    TrialResult& r = results[i];
    try {
      TrainConfig cfg = r.config;
      cfg.monitor_dtw = false;
      TrainResult trained = train(initial_model(data, cfg), data, cfg);
      r.dtw = reproduction_dtw(trained.model, data, cfg);
      r.model = std::move(trained.model);
    } catch (const std::exception& e) {
      r.dtw = std::numeric_limits<double>::infinity();
      r.error = e.what();
    }
  });
  std::stable_sort(results.begin(), results.end(),
                   [](const TrialResult& a, const TrialResult& b) { return a.dtw < b.dtw; });
  return results;
}

}  // namespace riemflow::train

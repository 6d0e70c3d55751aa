#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riemflow/flow.hpp"
#include "riemflow/optim.hpp"
#include "riemflow/pipeline.hpp"

namespace riemflow::train {

/// Defaults are the best values of the hyperparameter search (11 layers, ReLU,
/// Adam, lr 0.00098), batch 128, 100 epochs, evaluation every 5 epochs.
struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  std::uint64_t seed = 20;
  int eval_every = 5;
  int layers = 11;
  int hidden = flow::kDefaultHidden;
  flow::Activation activation = flow::Activation::Relu;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = kTable1LearningRate;
  bool freeze_f = false;
  bool monitor_dtw = true;
  double xi = kDefaultXi;
  int max_steps_factor = kMaxStepsFactor;

  void validate() const;
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> dtw;  // only on evaluation epochs
};

struct TrainResult {
  flow::FlowModel model;
  std::vector<HistoryRow> history;
  OptimizerState optimizer;
  bool learning_rate_halved = false;
};

/// Consecutive transition pairs in flow coordinates (x = p / std), one per column.
struct PairBatch {
  Eigen::MatrixXd from;
  Eigen::MatrixXd to;
};

PairBatch all_pairs(const TangentDemoSet& data);

/// Mean over pairs of -[log N(q_next; q + dt V q, dt F F^T + jitter) + log|det J_inv(p_next)|],
/// evaluated directly from flow_inverse and latent_transition_logpdf.
double nll_loss(const flow::FlowModel& model, const PairBatch& batch, double dt);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> grads;  // aligned with FlowModel::parameters()
};

/// Same objective recorded on a Tape and differentiated in reverse mode.
LossAndGrad nll_loss_and_grad(const flow::FlowModel& model, const PairBatch& batch, double dt);

/// Freshly initialized model carrying the data's goal, chart, dt and statistics.
flow::FlowModel initial_model(const TangentDemoSet& data, const TrainConfig& config);

/// Mean DTW between generations from each demonstration's first point and the
/// demonstration, in unnormalized chart coordinates.
double reproduction_dtw(const flow::FlowModel& model, const TangentDemoSet& data, const TrainConfig& config);

TrainResult train(flow::FlowModel model, const TangentDemoSet& data, const TrainConfig& config);

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

void save_checkpoint(const std::string& path, const flow::FlowModel& model, const OptimizerState& optimizer);
std::pair<flow::FlowModel, OptimizerState> load_checkpoint(const std::string& path);

struct SearchSpace {
  int min_layers = 8;
  int max_layers = 12;
  std::vector<flow::Activation> activations{flow::Activation::Relu, flow::Activation::Tanh};
  std::vector<OptimizerKind> optimizers{OptimizerKind::Adam, OptimizerKind::Adamax, OptimizerKind::Sgd,
                                        OptimizerKind::RmsProp};
  double min_lr = 1e-5;
  double max_lr = 1e-1;
};

struct TrialResult {
  int trial = 0;
  TrainConfig config;
  double dtw = 0.0;  // +inf for failed trials
  std::string error;
  std::optional<flow::FlowModel> model;
};

/// Samples `trials` configurations (uniform discrete options, log-uniform lr) and
/// trains each with the base seed so trials differ only in hyperparameters.
/// Results are sorted by ascending final DTW.
std::vector<TrialResult> random_search(const TangentDemoSet& data, const SearchSpace& space, int trials,
                                       std::uint64_t seed, const TrainConfig& base, int jobs = 1);

}  // namespace riemflow::train

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace riemflow::train {

enum class OptimizerKind { Adam, Adamax, Sgd, RmsProp };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

inline constexpr double kTable1LearningRate = 0.00098;

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = kTable1LearningRate;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double rms_alpha = 0.99;
  long step = 0;
  std::vector<Eigen::MatrixXd> first;   // m (Adam, Adamax)
  std::vector<Eigen::MatrixXd> second;  // v (Adam), u (Adamax), mean square (RMSprop)
};

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate);

/// One update of every parameter. Buffers are sized on the first call; a later
/// call with different shapes throws ShapeMismatch.
void optimizer_step(OptimizerState& state, const std::vector<Eigen::MatrixXd*>& params,
                    const std::vector<Eigen::MatrixXd>& grads);

}  // namespace riemflow::train

#include "riemflow/optim.hpp"

#include <cmath>

#include "riemflow/errors.hpp"

namespace riemflow::train {

const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Adamax: return "adamax";
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::RmsProp: return "rmsprop";
  }
  return "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "adamax") return OptimizerKind::Adamax;
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "rmsprop") return OptimizerKind::RmsProp;
  throw Error(ErrorCode::InvalidArgument, "unknown optimizer '" + s + "' (expected adam|adamax|sgd|rmsprop)");
}

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate) {
  OptimizerState s;
  s.kind = kind;
  s.learning_rate = learning_rate;
  return s;
}

void optimizer_step(OptimizerState& state, const std::vector<Eigen::MatrixXd*>& params,
                    const std::vector<Eigen::MatrixXd>& grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter and gradient counts differ");
  }
  if (state.first.empty()) {
    for (const auto* p : params) {
      state.first.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      state.second.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer buffer count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = *params[i];
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols() || state.first[i].rows() != p.rows() ||
        state.first[i].cols() != p.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double lr = state.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& p = *params[i];
    const Eigen::MatrixXd& g = grads[i];
    Eigen::MatrixXd& m = state.first[i];
    Eigen::MatrixXd& v = state.second[i];
    switch (state.kind) {
      case OptimizerKind::Sgd:
        p -= lr * g;
        break;
      case OptimizerKind::Adam: {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(state.beta1, t);
        const double c2 = 1.0 - std::pow(state.beta2, t);
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
        break;
      }
      case OptimizerKind::Adamax: {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = (state.beta2 * v).cwiseMax(g.cwiseAbs());
        const double c1 = 1.0 - std::pow(state.beta1, t);
        p.array() -= (lr / c1) * m.array() / (v.array() + state.epsilon);
        break;
      }
      case OptimizerKind::RmsProp:
        v = state.rms_alpha * v + (1.0 - state.rms_alpha) * g.cwiseAbs2();
        p.array() -= lr * g.array() / (v.array().sqrt() + state.epsilon);
        break;
    }
  }
}

}  // namespace riemflow::train

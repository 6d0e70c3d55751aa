#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riemflow/manifolds.hpp"

namespace riemflow::flow {

inline constexpr double kStabilityMargin = 1e-3;  // eps_stab
inline constexpr double kScaleClamp = 5.0;        // |s| <= 5
inline constexpr double kCovarianceJitter = 1e-6;
inline constexpr int kDefaultHidden = 64;
inline constexpr int kModelSchemaVersion = 1;

enum class Activation { Relu, Tanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Where the flow's coordinates live: the goal-centered tangent space (the
/// Riemannian pipeline) or raw embedding components minus the goal (naive baselines).
enum class Chart { Tangent, Embedded };

const char* to_string(Chart c);
Chart chart_from_string(const std::string& s);

/// Fully connected net with hidden biases and a bias-free output layer.
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // weights[l] is out x in
  std::vector<Eigen::MatrixXd> biases;   // one column per hidden layer
  Activation activation = Activation::Relu;

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& x) const;
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
};

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

/// Affine coupling: y_upper = x_upper, y_lower = x_lower * exp(s(x_upper)) + t(x_upper).
/// The upper group is the single coordinate `upper`; nets see the masked input.
/// t is centered, t(x) = G(x) - G(0), so every layer fixes the origin.
struct CouplingLayer {
  int dim = 0;
  int upper = 0;
  Mlp scale_net;  // F
  Mlp shift_net;  // G

  Eigen::VectorXd upper_mask() const;
  Eigen::VectorXd lower_mask() const { return Eigen::VectorXd::Ones(dim) - upper_mask(); }

  /// Per-column clamped log-scale s and shift t, zero on the upper row.
  void scale_shift(const Eigen::MatrixXd& x, Eigen::MatrixXd& s, Eigen::MatrixXd& t) const;
};

struct StableLatentDynamics {
  Eigen::MatrixXd v_raw;
  Eigen::MatrixXd f_phi;
  bool freeze_f = false;

  Eigen::MatrixXd v() const;
  int dim() const { return static_cast<int>(v_raw.rows()); }
};

/// V = skew(V_raw) - (S S^T + eps I) with S the symmetric part of V_raw.
Eigen::MatrixXd make_stable(const Eigen::MatrixXd& v_raw);

Eigen::VectorXd latent_drift(const StableLatentDynamics& dyn, const Eigen::VectorXd& q);

/// Euler-Maruyama transition density N(q_next; q_t + dt V q_t, dt F F^T + jitter I).
double latent_transition_logpdf(const StableLatentDynamics& dyn, const Eigen::VectorXd& q_t,
                                const Eigen::VectorXd& q_next, double dt);

struct FlowConfig {
  int dim = 3;
  int layers = 11;
  int hidden = kDefaultHidden;
  Activation activation = Activation::Relu;
  double init_range = 0.05;
  std::uint64_t seed = 20;
  bool freeze_f = false;
};

struct FlowModel {
  std::vector<CouplingLayer> layers;
  StableLatentDynamics latent;
  Eigen::VectorXd norm_mean;
  Eigen::VectorXd norm_std;
  double dt = 0.004;
  Manifold manifold = Manifold::Uq;
  Chart chart = Chart::Tangent;
  std::optional<ManifoldPoint> goal;

  int dim() const { return latent.dim(); }

  /// Parameters in a fixed order: per layer scale then shift (weights, biases), then
  /// V_raw, then F_phi unless frozen.
  std::vector<Eigen::MatrixXd*> parameters();
  std::vector<const Eigen::MatrixXd*> parameters() const;
};

/// Builds identity-initialized layers: hidden weights/biases uniform in
/// [-init_range, init_range], output layers zero. V_raw = I, F_phi = 0.1 I.
FlowModel make_model(const FlowConfig& config);

struct FlowResult {
  Eigen::MatrixXd values;      // k x B
  Eigen::RowVectorXd logdet;   // 1 x B
};

FlowResult flow_forward(const FlowModel& model, const Eigen::MatrixXd& q);
FlowResult flow_inverse(const FlowModel& model, const Eigen::MatrixXd& p);

/// Forward map and its directional derivative J(q) w.
std::pair<Eigen::VectorXd, Eigen::VectorXd> flow_forward_jvp(const FlowModel& model, const Eigen::VectorXd& q,
                                                             const Eigen::VectorXd& w);

// Serialization to a versioned JSON document.
std::string model_to_string(const FlowModel& model);
FlowModel model_from_string(const std::string& text);
void save_model(const FlowModel& model, const std::string& path);
FlowModel load_model(const std::string& path);

}  // namespace riemflow::flow

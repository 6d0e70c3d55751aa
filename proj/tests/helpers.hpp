#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <random>
#include <string>

#include "riemflow/flow.hpp"
#include "riemflow/manifolds.hpp"

namespace testing {

// A model whose every parameter is random, so no coupling layer is the identity.
inline riemflow::flow::FlowModel random_model(int dim, int layers, std::uint64_t seed, double scale = 0.3,
                                              int hidden = 16,
                                              riemflow::flow::Activation act = riemflow::flow::Activation::Tanh) {
  riemflow::flow::FlowConfig cfg;
  cfg.dim = dim;
  cfg.layers = layers;
  cfg.hidden = hidden;
  cfg.activation = act;
  cfg.seed = seed;
  riemflow::flow::FlowModel model = riemflow::flow::make_model(cfg);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Eigen::MatrixXd* p : model.parameters()) p->noalias() = p->unaryExpr([&](double) { return u(rng); });
  model.latent.f_phi += 0.3 * Eigen::MatrixXd::Identity(dim, dim);
  model.latent.v_raw += Eigen::MatrixXd::Identity(dim, dim);  // keep the latent decay well away from zero
  return model;
}

inline Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng, double spread = 1.0) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = spread * n(rng);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
}

inline riemflow::UnitQuaternion random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return riemflow::UnitQuaternion(n(rng), Eigen::Vector3d(n(rng), n(rng), n(rng)));
}

// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("riemflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing

#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include "riemflow/manifolds.hpp"

// JSON encodings shared by the model, checkpoint and manifest files.
namespace riemflow::io {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
nlohmann::json manifold_point_to_json(const ManifoldPoint& p);
ManifoldPoint manifold_point_from_json(const nlohmann::json& j);

}  // namespace riemflow::io

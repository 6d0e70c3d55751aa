#include "riemflow/json_io.hpp"

#include "riemflow/errors.hpp"

namespace riemflow::io {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorCode::SchemaError, "matrix payload size does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j2 = 0; j2 < cols; ++j2) m(i, j2) = data[static_cast<std::size_t>(i) * cols + j2];
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json manifold_point_to_json(const ManifoldPoint& p) {
  if (const auto* s = std::get_if<SpdPoint>(&p)) return {{"type", "spd"}, {"matrix", matrix_to_json(s->matrix())}};
  const auto& q = std::get<UnitQuaternion>(p);
  return {{"type", "uq"}, {"nu", q.nu()}, {"u", {q.u().x(), q.u().y(), q.u().z()}}};
}

ManifoldPoint manifold_point_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "spd") return SpdPoint(matrix_from_json(j.at("matrix")));
  if (type == "uq") {
    const auto u = j.at("u").get<std::vector<double>>();
    if (u.size() != 3) throw Error(ErrorCode::SchemaError, "quaternion vector part must have 3 entries");
    return UnitQuaternion(j.at("nu").get<double>(), Eigen::Vector3d(u[0], u[1], u[2]));
  }
  throw Error(ErrorCode::SchemaError, "unknown point type '" + type + "'");
}

}  // namespace riemflow::io

#include "riemflow/flow.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "riemflow/errors.hpp"
#include "riemflow/json_io.hpp"

namespace riemflow::flow {

using nlohmann::json;

const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + s + "' (expected relu|tanh)");
}

const char* to_string(Chart c) { return c == Chart::Tangent ? "tangent" : "embedded"; }

Chart chart_from_string(const std::string& s) {
  if (s == "tangent") return Chart::Tangent;
  if (s == "embedded") return Chart::Embedded;
  throw Error(ErrorCode::SchemaError, "unknown chart '" + s + "'");
}

double activate(Activation a, double x) { return a == Activation::Relu ? (x > 0 ? x : 0.0) : std::tanh(x); }

double activate_derivative(Activation a, double x) {
  if (a == Activation::Relu) return x > 0 ? 1.0 : 0.0;
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

Eigen::MatrixXd Mlp::operator()(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l + 1 < weights.size(); ++l) {
    Eigen::MatrixXd z = weights[l] * h;
    z.colwise() += biases[l].col(0);
    h = z.unaryExpr([this](double v) { return activate(activation, v); });
  }
  return weights.back() * h;
}

namespace {

// Value and directional derivative of an MLP.
std::pair<Eigen::VectorXd, Eigen::VectorXd> mlp_jvp(const Mlp& net, const Eigen::VectorXd& x,
                                                    const Eigen::VectorXd& dx) {
  Eigen::VectorXd h = x, dh = dx;
  for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
    const Eigen::VectorXd z = net.weights[l] * h + net.biases[l].col(0);
    const Eigen::VectorXd dz = net.weights[l] * dh;
    h = z.unaryExpr([&](double v) { return activate(net.activation, v); });
    dh = dz.cwiseProduct(z.unaryExpr([&](double v) { return activate_derivative(net.activation, v); }));
  }
  return {net.weights.back() * h, net.weights.back() * dh};
}

}  // namespace

Eigen::VectorXd CouplingLayer::upper_mask() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
  m(upper) = 1.0;
  return m;
}

void CouplingLayer::scale_shift(const Eigen::MatrixXd& x, Eigen::MatrixXd& s, Eigen::MatrixXd& t) const {
  const Eigen::VectorXd up = upper_mask();
  const Eigen::VectorXd low = lower_mask();
  const Eigen::MatrixXd x_up = up.asDiagonal() * x;
  s = low.asDiagonal() *
      scale_net(x_up).unaryExpr([](double v) { return kScaleClamp * std::tanh(v / kScaleClamp); });
  const Eigen::VectorXd shift_at_zero = shift_net(Eigen::VectorXd::Zero(dim));
  Eigen::MatrixXd g = shift_net(x_up);
  g.colwise() -= shift_at_zero;
  t = low.asDiagonal() * g;
}

Eigen::MatrixXd make_stable(const Eigen::MatrixXd& v_raw) {
  const Eigen::MatrixXd sym = 0.5 * (v_raw + v_raw.transpose());
  const Eigen::MatrixXd skew = 0.5 * (v_raw - v_raw.transpose());
  const auto k = v_raw.rows();
  return skew - (sym * sym.transpose() + kStabilityMargin * Eigen::MatrixXd::Identity(k, k));
}

Eigen::MatrixXd StableLatentDynamics::v() const { return make_stable(v_raw); }

Eigen::VectorXd latent_drift(const StableLatentDynamics& dyn, const Eigen::VectorXd& q) { return dyn.v() * q; }

double latent_transition_logpdf(const StableLatentDynamics& dyn, const Eigen::VectorXd& q_t,
                                const Eigen::VectorXd& q_next, double dt) {
  if (!(dt > 0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  const auto k = dyn.dim();
  const Eigen::MatrixXd cov =
      dt * dyn.f_phi * dyn.f_phi.transpose() + kCovarianceJitter * Eigen::MatrixXd::Identity(k, k);
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularCovariance, "transition covariance");
  const Eigen::VectorXd r = q_next - (q_t + dt * dyn.v() * q_t);
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * static_cast<double>(k) * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * w.squaredNorm();
}

std::vector<Eigen::MatrixXd*> FlowModel::parameters() {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& layer : layers) {
    for (Mlp* net : {&layer.scale_net, &layer.shift_net}) {
      for (auto& w : net->weights) out.push_back(&w);
      for (auto& b : net->biases) out.push_back(&b);
    }
  }
  out.push_back(&latent.v_raw);
  if (!latent.freeze_f) out.push_back(&latent.f_phi);
  return out;
}

std::vector<const Eigen::MatrixXd*> FlowModel::parameters() const {
  auto mutable_params = const_cast<FlowModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

FlowModel make_model(const FlowConfig& config) {
  if (config.dim < 2) throw Error(ErrorCode::InvalidArgument, "flow dimension must be >= 2");
  if (config.layers < 0 || config.hidden < 1) throw Error(ErrorCode::InvalidArgument, "layer sizes");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> uniform(-config.init_range, config.init_range);
  auto random_matrix = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = uniform(rng);
    return m;
  };
  auto make_net = [&]() {
    Mlp net;
    net.activation = config.activation;
    net.weights = {random_matrix(config.hidden, config.dim), random_matrix(config.hidden, config.hidden),
                   Eigen::MatrixXd::Zero(config.dim, config.hidden)};
    net.biases = {random_matrix(config.hidden, 1), random_matrix(config.hidden, 1)};
    return net;
  };

  FlowModel model;
  for (int l = 0; l < config.layers; ++l) {
    CouplingLayer layer;
    layer.dim = config.dim;
    layer.upper = l % config.dim;
    layer.scale_net = make_net();
    layer.shift_net = make_net();
    model.layers.push_back(std::move(layer));
  }
  model.latent.v_raw = Eigen::MatrixXd::Identity(config.dim, config.dim);
  model.latent.f_phi = 0.1 * Eigen::MatrixXd::Identity(config.dim, config.dim);
  model.latent.freeze_f = config.freeze_f;
  model.norm_mean = Eigen::VectorXd::Zero(config.dim);
  model.norm_std = Eigen::VectorXd::Ones(config.dim);
  return model;
}

FlowResult flow_forward(const FlowModel& model, const Eigen::MatrixXd& q) {
  if (!q.allFinite()) throw Error(ErrorCode::NonFinite, "flow_forward input");
  if (q.rows() != model.dim()) throw Error(ErrorCode::DimensionMismatch, "flow_forward input");
  FlowResult r{q, Eigen::RowVectorXd::Zero(q.cols())};
  Eigen::MatrixXd s, t;
  for (const auto& layer : model.layers) {
    layer.scale_shift(r.values, s, t);
    r.values = r.values.cwiseProduct(s.array().exp().matrix()) + t;
    r.logdet += s.colwise().sum();
  }
  if (!r.values.allFinite()) throw Error(ErrorCode::NonFinite, "flow_forward output");
  return r;
}

FlowResult flow_inverse(const FlowModel& model, const Eigen::MatrixXd& p) {
  if (!p.allFinite()) throw Error(ErrorCode::NonFinite, "flow_inverse input");
  if (p.rows() != model.dim()) throw Error(ErrorCode::DimensionMismatch, "flow_inverse input");
  FlowResult r{p, Eigen::RowVectorXd::Zero(p.cols())};
  Eigen::MatrixXd s, t;
  for (auto it = model.layers.rbegin(); it != model.layers.rend(); ++it) {
    it->scale_shift(r.values, s, t);
    r.values = (r.values - t).cwiseProduct((-s).array().exp().matrix());
    r.logdet -= s.colwise().sum();
  }
  if (!r.values.allFinite()) throw Error(ErrorCode::NonFinite, "flow_inverse output");
  return r;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> flow_forward_jvp(const FlowModel& model, const Eigen::VectorXd& q,
                                                             const Eigen::VectorXd& w) {
  Eigen::VectorXd x = q, dx = w;
  for (const auto& layer : model.layers) {
    const Eigen::VectorXd up = layer.upper_mask();
    const Eigen::VectorXd low = layer.lower_mask();
    const Eigen::VectorXd x_up = up.cwiseProduct(x);
    const Eigen::VectorXd dx_up = up.cwiseProduct(dx);

    const auto [raw, draw] = mlp_jvp(layer.scale_net, x_up, dx_up);
    const Eigen::VectorXd th = (raw / kScaleClamp).array().tanh().matrix();
    const Eigen::VectorXd s = low.cwiseProduct(kScaleClamp * th);
    const Eigen::VectorXd ds = low.cwiseProduct((1.0 - th.array().square()).matrix().cwiseProduct(draw));

    const auto [g, dg] = mlp_jvp(layer.shift_net, x_up, dx_up);
    const Eigen::VectorXd t = low.cwiseProduct(g - layer.shift_net(Eigen::VectorXd::Zero(layer.dim)));
    const Eigen::VectorXd dt = low.cwiseProduct(dg);

    const Eigen::VectorXd es = s.array().exp().matrix();
    const Eigen::VectorXd y = x.cwiseProduct(es) + t;
    dx = dx.cwiseProduct(es) + x.cwiseProduct(es).cwiseProduct(ds) + dt;
    x = y;
  }
  return {x, dx};
}

namespace {

json mlp_to_json(const Mlp& net) {
  json weights = json::array(), biases = json::array();
  for (const auto& w : net.weights) weights.push_back(io::matrix_to_json(w));
  for (const auto& b : net.biases) biases.push_back(io::matrix_to_json(b));
  return {{"activation", to_string(net.activation)}, {"weights", weights}, {"biases", biases}};
}

Mlp mlp_from_json(const json& j) {
  Mlp net;
  net.activation = activation_from_string(j.at("activation").get<std::string>());
  for (const auto& w : j.at("weights")) net.weights.push_back(io::matrix_from_json(w));
  for (const auto& b : j.at("biases")) net.biases.push_back(io::matrix_from_json(b));
  if (net.weights.empty() || net.biases.size() + 1 != net.weights.size()) {
    throw Error(ErrorCode::SchemaError, "MLP needs one bias per hidden layer");
  }
  for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
    if (net.weights[l + 1].cols() != net.weights[l].rows() || net.biases[l].rows() != net.weights[l].rows()) {
      throw Error(ErrorCode::SchemaError, "MLP layer shapes are inconsistent");
    }
  }
  return net;
}

}  // namespace

std::string model_to_string(const FlowModel& model) {
  json layers = json::array();
  for (const auto& layer : model.layers) {
    layers.push_back({{"upper", layer.upper},
                      {"scale_net", mlp_to_json(layer.scale_net)},
                      {"shift_net", mlp_to_json(layer.shift_net)}});
  }
  json doc = {
      {"schema", "riemflow.model"},
      {"version", kModelSchemaVersion},
      {"manifold", to_string(model.manifold)},
      {"chart", to_string(model.chart)},
      {"dim", model.dim()},
      {"dt", model.dt},
      {"normalization", {{"mean", io::vector_to_json(model.norm_mean)}, {"std", io::vector_to_json(model.norm_std)}}},
      {"layers", layers},
      {"latent",
       {{"v_raw", io::matrix_to_json(model.latent.v_raw)},
        {"f_phi", io::matrix_to_json(model.latent.f_phi)},
        {"freeze_f", model.latent.freeze_f}}},
  };
  doc["goal"] = model.goal ? io::manifold_point_to_json(*model.goal) : json(nullptr);
  return doc.dump(1) + "\n";
}

FlowModel model_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
  }
  try {
    if (doc.at("schema").get<std::string>() != "riemflow.model") {
      throw Error(ErrorCode::SchemaError, "not a riemflow model file");
    }
    if (doc.at("version").get<int>() != kModelSchemaVersion) {
      throw Error(ErrorCode::SchemaError, "unsupported model version " + doc.at("version").dump());
    }
    FlowModel model;
    model.manifold = manifold_from_string(doc.at("manifold").get<std::string>());
    model.chart = chart_from_string(doc.at("chart").get<std::string>());
    model.dt = doc.at("dt").get<double>();
    model.norm_mean = io::vector_from_json(doc.at("normalization").at("mean"));
    model.norm_std = io::vector_from_json(doc.at("normalization").at("std"));
    model.latent.v_raw = io::matrix_from_json(doc.at("latent").at("v_raw"));
    model.latent.f_phi = io::matrix_from_json(doc.at("latent").at("f_phi"));
    model.latent.freeze_f = doc.at("latent").at("freeze_f").get<bool>();
    const int dim = doc.at("dim").get<int>();
    for (const auto& jl : doc.at("layers")) {
      CouplingLayer layer;
      layer.dim = dim;
      layer.upper = jl.at("upper").get<int>();
      layer.scale_net = mlp_from_json(jl.at("scale_net"));
      layer.shift_net = mlp_from_json(jl.at("shift_net"));
      if (layer.upper < 0 || layer.upper >= dim || layer.scale_net.input_dim() != dim ||
          layer.shift_net.input_dim() != dim) {
        throw Error(ErrorCode::SchemaError, "coupling layer does not match model dimension");
      }
      model.layers.push_back(std::move(layer));
    }
    if (model.latent.v_raw.rows() != dim || model.latent.v_raw.cols() != dim || model.latent.f_phi.rows() != dim ||
        model.norm_mean.size() != dim || model.norm_std.size() != dim) {
      throw Error(ErrorCode::SchemaError, "latent or normalization shape does not match model dimension");
    }
    if (!doc.at("goal").is_null()) model.goal = io::manifold_point_from_json(doc.at("goal"));
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("model file: ") + e.what());
  }
}

void save_model(const FlowModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << model_to_string(model);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

FlowModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_string(buf.str());
}

}  // namespace riemflow::flow

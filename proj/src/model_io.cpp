#include "rpie/model_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rpie/error.hpp"

namespace rpie {

using nlohmann::json;

Standardization Standardization::identity(Eigen::Index d) {
  Standardization s;
  s.x_mean = Eigen::VectorXd::Zero(d);
  s.x_scale = Eigen::VectorXd::Ones(d);
  return s;
}

Standardization Standardization::fit(const Dataset& data) {
  Standardization s;
  s.enabled = true;
  const Eigen::Index n = data.n();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  s.x_mean = data.X.colwise().mean().transpose();
  s.x_scale.resize(data.d());
  for (Eigen::Index j = 0; j < data.d(); ++j) {
    const double sd =
        std::sqrt((data.X.col(j).array() - s.x_mean[j]).square().sum() / denom);
    s.x_scale[j] = sd > 0.0 ? sd : 1.0;
  }
  s.y_mean = data.y.mean();
  const double sd = std::sqrt((data.y.array() - s.y_mean).square().sum() / denom);
  s.y_scale = sd > 0.0 ? sd : 1.0;
  return s;
}

Eigen::MatrixXd Standardization::transform_inputs(const Eigen::MatrixXd& X) const {
  if (X.cols() != x_mean.size()) throw ShapeError("input dimension does not match the model");
  if (!enabled) return X;
  return ((X.rowwise() - x_mean.transpose()).array().rowwise() / x_scale.transpose().array())
      .matrix();
}

Dataset Standardization::apply(const Dataset& data) const {
  Dataset out = data;
  out.X = transform_inputs(data.X);
  if (enabled) out.y = ((data.y.array() - y_mean) / y_scale).matrix();
  return out;
}

std::string_view to_string(ModelType type) {
  switch (type) {
    case ModelType::Gp: return "gp";
    case ModelType::Calibrated: return "calibrated";
    case ModelType::Bayes: return "bayes";
  }
  return "?";
}

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json kernel_json(const KernelSpec& k) {
  return {{"family", std::string(to_string(k.family))},
          {"sigma2", k.sigma2},
          {"theta", vec(k.theta)},
          {"nugget", k.nugget}};
}

KernelSpec kernel_from(const json& j) {
  KernelSpec k;
  k.family = parse_kernel_family(j.at("family").get<std::string>());
  k.sigma2 = j.at("sigma2").get<double>();
  k.theta = to_vec(j.at("theta"));
  k.nugget = j.at("nugget").get<double>();
  k.validate();
  return k;
}

json estimation_json(const EstimationResult& e) {
  return {{"method", std::string(to_string(e.method))},
          {"kernel", kernel_json(e.kernel)},
          {"objective_value", e.objective_value},
          {"n_evals", e.n_evals},
          {"converged", e.converged}};
}

EstimationResult estimation_from(const json& j) {
  EstimationResult e;
  e.method = parse_estimation_method(j.at("method").get<std::string>());
  e.kernel = kernel_from(j.at("kernel"));
  e.objective_value = j.at("objective_value").get<double>();
  e.n_evals = j.at("n_evals").get<int>();
  e.converged = j.at("converged").get<bool>();
  return e;
}

json solution_json(const RpieSolution& s) {
  return {{"a", s.a},
          {"lambda_star", s.lambda_star},
          {"sigma2_opt", s.sigma2_opt},
          {"theta_ref", vec(s.theta_ref)},
          {"beta_opt", vec(s.beta_opt)},
          {"wasserstein2", s.wasserstein2},
          {"psi_achieved", s.psi_achieved},
          {"kernel", kernel_json(s.kernel)}};
}

RpieSolution solution_from(const json& j) {
  RpieSolution s;
  s.a = j.at("a").get<double>();
  s.lambda_star = j.at("lambda_star").get<double>();
  s.sigma2_opt = j.at("sigma2_opt").get<double>();
  s.theta_ref = to_vec(j.at("theta_ref"));
  s.beta_opt = to_vec(j.at("beta_opt"));
  s.wasserstein2 = j.at("wasserstein2").get<double>();
  s.psi_achieved = j.at("psi_achieved").get<double>();
  s.kernel = kernel_from(j.at("kernel"));
  return s;
}

json matrix_json(const Eigen::MatrixXd& X) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < X.rows(); ++i) rows.push_back(vec(X.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Eigen::VectorXd row = to_vec(j[i]);
    if (row.size() != cols) throw DataError("training matrix rows have inconsistent length");
    X.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return X;
}

}  // namespace

std::string model_to_string(const StoredModel& m) {
  json j;
  j["format"] = "rpie-model";
  j["version"] = 1;
  j["type"] = std::string(to_string(m.type));
  j["trend"] = std::string(to_string(m.trend.kind));
  j["columns"] = m.data.columns;
  j["target"] = m.data.target;
  j["standardization"] = {{"enabled", m.standardization.enabled},
                          {"x_mean", vec(m.standardization.x_mean)},
                          {"x_scale", vec(m.standardization.x_scale)},
                          {"y_mean", m.standardization.y_mean},
                          {"y_scale", m.standardization.y_scale}};
  j["training"] = {{"X", matrix_json(m.data.X)}, {"y", vec(m.data.y)}};
  j["estimation"] = estimation_json(m.estimation);
  if (m.type == ModelType::Calibrated) {
    if (!m.upper || !m.lower) throw InvalidParameter("calibrated model lacks a side");
    j["alpha"] = m.alpha;
    j["upper"] = solution_json(*m.upper);
    j["lower"] = solution_json(*m.lower);
  }
  if (m.type == ModelType::Bayes) {
    if (!m.posterior) throw InvalidParameter("Bayesian model lacks posterior samples");
    json samples = json::array();
    for (const auto& k : m.posterior->samples) samples.push_back({k.sigma2, vec(k.theta)});
    j["posterior"] = {{"family", std::string(to_string(m.estimation.kernel.family))},
                      {"nugget", m.estimation.kernel.nugget},
                      {"acceptance_rate", m.posterior->acceptance_rate},
                      {"acceptance_warning", m.posterior->acceptance_warning},
                      {"samples", samples}};
    j["mcmc"] = {{"n_samples", m.mcmc.n_samples},
                 {"burn_in", m.mcmc.burn_in},
                 {"proposal_scale", m.mcmc.proposal_scale}};
    j["seed"] = m.seed;
  }
  return j.dump(2) + "\n";
}

StoredModel model_from_string(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "rpie-model") throw DataError("not an rpie model file");
    StoredModel m;
    const std::string type = j.at("type").get<std::string>();
    if (type == "gp") {
      m.type = ModelType::Gp;
    } else if (type == "calibrated") {
      m.type = ModelType::Calibrated;
    } else if (type == "bayes") {
      m.type = ModelType::Bayes;
    } else {
      throw DataError("unknown model type '" + type + "'");
    }
    m.trend.kind = parse_trend(j.at("trend").get<std::string>());
    m.data.columns = j.at("columns").get<std::vector<std::string>>();
    m.data.target = j.at("target").get<std::string>();
    const json& s = j.at("standardization");
    m.standardization.enabled = s.at("enabled").get<bool>();
    m.standardization.x_mean = to_vec(s.at("x_mean"));
    m.standardization.x_scale = to_vec(s.at("x_scale"));
    m.standardization.y_mean = s.at("y_mean").get<double>();
    m.standardization.y_scale = s.at("y_scale").get<double>();
    const Eigen::Index d = m.standardization.x_mean.size();
    m.data.X = matrix_from(j.at("training").at("X"), d);
    m.data.y = to_vec(j.at("training").at("y"));
    m.data.validate();
    m.estimation = estimation_from(j.at("estimation"));
    if (m.estimation.kernel.dim() != d) throw DataError("kernel and training data disagree on d");
    if (m.type == ModelType::Calibrated) {
      m.alpha = j.at("alpha").get<double>();
      m.upper = solution_from(j.at("upper"));
      m.lower = solution_from(j.at("lower"));
    }
    if (m.type == ModelType::Bayes) {
      const json& p = j.at("posterior");
      BayesPosterior post;
      post.acceptance_rate = p.at("acceptance_rate").get<double>();
      post.acceptance_warning = p.at("acceptance_warning").get<bool>();
      const KernelFamily family = parse_kernel_family(p.at("family").get<std::string>());
      const double nugget = p.at("nugget").get<double>();
      for (const auto& sample : p.at("samples")) {
        post.samples.push_back(
            KernelSpec{family, sample.at(0).get<double>(), to_vec(sample.at(1)), nugget});
      }
      m.posterior = std::move(post);
      m.mcmc.n_samples = j.at("mcmc").at("n_samples").get<int>();
      m.mcmc.burn_in = j.at("mcmc").at("burn_in").get<int>();
      m.mcmc.proposal_scale = j.at("mcmc").at("proposal_scale").get<double>();
      m.seed = j.at("seed").get<std::uint64_t>();
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const StoredModel& model, const std::filesystem::path& path) {
  const std::string text = model_to_string(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

StoredModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open model file " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return model_from_string(buf.str());
}

CalibratedIntervalModel calibrated_model(const StoredModel& model) {
  if (model.type != ModelType::Calibrated || !model.upper || !model.lower) {
    throw InvalidParameter("model is not calibrated");
  }
  CalibratedIntervalModel c;
  c.alpha = model.alpha;
  c.upper = *model.upper;
  c.lower = *model.lower;
  c.reference = model.estimation;
  c.data = model.data;
  c.trend = model.trend;
  return c;
}

}  // namespace rpie

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "rpie/calibration.hpp"
#include "rpie/estimation.hpp"
#include "rpie/gp_core.hpp"

namespace rpie {

/// Column-wise z-score transform of inputs and response. Disabled transforms
/// are the identity.
struct Standardization {
  bool enabled = false;
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;

  /// Sample mean and standard deviation of `data` (unit scale for constant columns).
  static Standardization fit(const Dataset& data);
  static Standardization identity(Eigen::Index d);

  Dataset apply(const Dataset& data) const;
  Eigen::MatrixXd transform_inputs(const Eigen::MatrixXd& X) const;
  double response_to_original(double v) const { return y_mean + y_scale * v; }
};

enum class ModelType { Gp, Calibrated, Bayes };

std::string_view to_string(ModelType type);

/// Everything a persisted model needs to predict again. `data` is the
/// training set in model (standardized) units.
struct StoredModel {
  ModelType type = ModelType::Gp;
  Dataset data;
  TrendSpec trend;
  Standardization standardization;
  EstimationResult estimation;  // the fitted GP, or the calibration reference
  // Calibrated models.
  double alpha = 0.1;
  std::optional<RpieSolution> upper;
  std::optional<RpieSolution> lower;
  // Bayesian models.
  std::optional<BayesPosterior> posterior;
  McmcConfig mcmc;
  std::uint64_t seed = 0;
};

std::string model_to_string(const StoredModel& model);
StoredModel model_from_string(const std::string& text);

void save_model(const StoredModel& model, const std::filesystem::path& path);
/// Throws DataError on unreadable or malformed files.
StoredModel load_model(const std::filesystem::path& path);

/// Rebuilds the calibrated interval model of a Calibrated StoredModel.
CalibratedIntervalModel calibrated_model(const StoredModel& model);

}  // namespace rpie

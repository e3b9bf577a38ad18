#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcnn/model.hpp"
#include "gcnn/tsdata.hpp"

namespace gcnn {

enum class SelectionMetric { Validation, Training };
SelectionMetric parse_selection_metric(std::string_view text);
std::string_view to_string(SelectionMetric m);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double momentum = 0.0;
  double clip_norm = 10.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  // Trailing share of the training samples held out for checkpoint selection.
  // Zero selects on the training SRMSE instead.
  double validation_fraction = 0.1;
  SelectionMetric selection = SelectionMetric::Validation;

  void validate() const;  // throws ConfigError
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_srmse = 0.0;
  double val_srmse = 0.0;
  double loss = 0.0;  // mean minibatch loss over the epoch
};

struct TrainResult {
  Model best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
  // U after every epoch, coefficient models only.
  std::vector<Tensor> coefficient_history;
};

// Called after every optimizer step with the updated model.
using StepObserver = std::function<void(std::size_t epoch, std::size_t step, const Model& model)>;

struct SrmseParts {
  double rmse = 0.0;
  double se = 0.0;
  std::optional<double> srmse;  // empty when the targets are constant
};

SrmseParts srmse(std::span<const double> targets, std::span<const double> predictions);

struct EvalReport {
  std::optional<double> srmse;
  double rmse = 0.0;
  double se = 0.0;
  std::vector<double> predictions;
  std::vector<double> targets;
  std::vector<std::string> stamps;
  std::string target_name;
  std::string model_id;
};

// Mean squared residual over all elements; y and t share a shape.
Var mse_loss(Var y, Var t);

/// Minibatch SGD (optional momentum, gradient-norm clipping) on the mean
/// squared error. Returns the epoch with the best SRMSE on the selection
/// slice; ties keep the earlier epoch. Throws NumericalError if the loss turns non-finite.
TrainResult train(Model model, const WindowedRegressionSet& train_set, const TrainConfig& config,
                  const StepObserver& observer = {});

Tensor predict(const Model& model, const WindowedRegressionSet& set);
EvalReport evaluate(const Model& model, const WindowedRegressionSet& set);

/// Least squares on flattened windows plus an unpenalised intercept:
/// (X'X + lambda I') w = X'y. Throws NumericalError when the system is
/// singular (use lambda > 0).
struct LinearModel {
  std::vector<double> weights;  // flattened window coefficients
  double intercept = 0.0;
};
LinearModel fit_linear(const WindowedRegressionSet& train_set, double ridge_lambda);
std::vector<double> predict_linear(const LinearModel& model, const WindowedRegressionSet& set);
EvalReport linear_baseline(const WindowedRegressionSet& train_set, const WindowedRegressionSet& test_set, double ridge_lambda);

// Dense symmetric positive-definite solve by Cholesky. a: [n x n].
std::vector<double> cholesky_solve(Tensor a, std::vector<double> b);

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history, const std::string& config_hash = "");
void write_predictions_csv(std::ostream& out, const EvalReport& report, const std::string& config_hash = "");
void write_report(std::ostream& out, const EvalReport& report, const std::string& config_hash = "",
                  std::string_view split = "");

}  // namespace gcnn

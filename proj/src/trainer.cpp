#include "gcnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "gcnn/errors.hpp"
#include "gcnn/rng.hpp"
#include "json.hpp"

namespace gcnn {

SelectionMetric parse_selection_metric(std::string_view text) {
  if (text == "val_srmse" || text == "validation") return SelectionMetric::Validation;
  if (text == "train_srmse" || text == "training") return SelectionMetric::Training;
  throw ConfigError("train.selection: expected val_srmse or train_srmse, got '" + std::string(text) + "'");
}

std::string_view to_string(SelectionMetric m) {
  return m == SelectionMetric::Validation ? "val_srmse" : "train_srmse";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate: must be a finite value >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum: must lie in [0, 1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train.validation_fraction: must lie in [0, 1)");
  }
}

SrmseParts srmse(std::span<const double> targets, std::span<const double> predictions) {
  if (targets.size() != predictions.size()) throw ShapeError("srmse: targets and predictions differ in length");
  if (targets.empty()) throw DataError("srmse: empty evaluation set");
  const double n = static_cast<double>(targets.size());
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean /= n;
  double sq = 0.0, var = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double r = targets[i] - predictions[i];
    const double d = targets[i] - mean;
    sq += r * r;
    var += d * d;
  }
  SrmseParts out;
  out.rmse = std::sqrt(sq / n);
  out.se = std::sqrt(var / n);
  if (out.se > 0.0) out.srmse = out.rmse / out.se;
  return out;
}

Var mse_loss(Var y, Var t) {
  if (y.value().size() == 0) throw DataError("mse_loss on an empty batch");
  Var d = y - t;
  return mean(d * d);
}

Tensor predict(const Model& model, const WindowedRegressionSet& set) {
  constexpr std::size_t chunk = 256;
  Tensor out({set.size()});
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < set.size(); begin += chunk) {
    const std::size_t end = std::min(set.size(), begin + chunk);
    rows.resize(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const Tensor y = model.predict(set.batch(rows));
    for (std::size_t i = 0; i < rows.size(); ++i) out[begin + i] = y[i];
  }
  return out;
}

EvalReport evaluate(const Model& model, const WindowedRegressionSet& set) {
  if (set.size() == 0) throw DataError("evaluate: empty set");
  EvalReport r;
  const Tensor y = predict(model, set);
  r.predictions.assign(y.data().begin(), y.data().end());
  r.targets = set.targets;
  r.stamps = set.target_stamps;
  r.target_name = set.target_name;
  r.model_id = model.spec().name;
  const SrmseParts parts = srmse(r.targets, r.predictions);
  r.rmse = parts.rmse;
  r.se = parts.se;
  r.srmse = parts.srmse;
  return r;
}

namespace {

double srmse_or_inf(const Model& model, const WindowedRegressionSet& set) {
  const Tensor y = predict(model, set);
  const SrmseParts p = srmse(set.targets, y.data());
  if (!y.all_finite()) return std::numeric_limits<double>::infinity();
  return p.srmse.value_or(p.rmse);
}

}  // namespace

TrainResult train(Model model, const WindowedRegressionSet& train_set, const TrainConfig& config,
                  const StepObserver& observer) {
  config.validate();
  if (train_set.size() == 0) throw DataError("train: empty training set");
  const Tensor& in = train_set.inputs;
  if (in.dim(1) != model.spec().input_channels || in.dim(2) != model.spec().window) {
    throw ShapeError("training windows are " + std::to_string(in.dim(1)) + "x" + std::to_string(in.dim(2)) +
                     " but the model expects " + std::to_string(model.spec().input_channels) + "x" +
                     std::to_string(model.spec().window));
  }

  const std::size_t n = train_set.size();
  std::size_t n_fit = n;
  if (config.validation_fraction > 0.0) {
    const auto n_val = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * config.validation_fraction - 1e-9));
    if (n_val == 0 || n_val >= n) throw DataError("validation carve-out leaves no training or validation samples");
    n_fit = n - n_val;
  }
  const WindowedRegressionSet fit_set = n_fit == n ? train_set : train_set.slice(0, n_fit);
  const WindowedRegressionSet val_set = n_fit == n ? train_set : train_set.slice(n_fit, n);

  auto params = model.parameters();
  std::vector<Tensor> velocity;
  for (const NamedParam& p : params) velocity.push_back(Tensor::zeros(p.value->shape()));

  TrainResult result{model, {}, 0, std::numeric_limits<double>::infinity(), {}};
  Rng rng(config.seed);
  std::vector<std::size_t> order(n_fit);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n_fit; begin += config.batch_size) {
      const std::size_t end = std::min(n_fit, begin + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      Tensor targets({rows.size(), 1});
      for (std::size_t i = 0; i < rows.size(); ++i) targets[i] = fit_set.targets[rows[i]];

      Tape tape;
      ParamBinder binder(tape);
      Var y = model.forward(binder, tape.constant(fit_set.batch(rows)));
      Var loss = mse_loss(y, tape.constant(std::move(targets)));
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        throw NumericalError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      loss_sum += loss_value * static_cast<double>(rows.size());

      std::vector<const Tensor*> grads;
      double norm2 = 0.0;
      for (const NamedParam& p : params) {
        const Tensor& g = tape.grad(*binder.bound(*p.value));
        grads.push_back(&g);
        for (double v : g.data()) norm2 += v * v;
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) {
        throw NumericalError("training diverged: non-finite gradient in epoch " + std::to_string(epoch));
      }
      const double scale = config.clip_norm > 0.0 && norm > config.clip_norm ? config.clip_norm / norm : 1.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& value = *params[k].value;
        Tensor& vel = velocity[k];
        const Tensor& g = *grads[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
          vel[i] = config.momentum * vel[i] - config.learning_rate * scale * g[i];
          value[i] += vel[i];
        }
      }
      ++step;
      if (observer) observer(epoch, step, model);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n_fit);
    rec.train_srmse = srmse_or_inf(model, fit_set);
    rec.val_srmse = n_fit == n ? rec.train_srmse : srmse_or_inf(model, val_set);
    result.history.push_back(rec);
    if (auto u = model.coefficient_matrix()) result.coefficient_history.push_back(std::move(*u));
    const double score = config.selection == SelectionMetric::Validation ? rec.val_srmse : rec.train_srmse;
    if (score < result.best_score) {
      result.best_score = score;
      result.best_epoch = epoch;
      result.best = model;
    }
  }
  if (result.best_epoch == 0) throw NumericalError("training produced no finite validation score");
  return result;
}

// ---------------------------------------------------------------------------

std::vector<double> cholesky_solve(Tensor a, std::vector<double> b) {
  const std::size_t n = b.size();
  if (a.rank() != 2 || a.dim(0) != n || a.dim(1) != n) throw ShapeError("cholesky_solve: dimension mismatch");
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a.at(i, i)));
  const double floor = 1e-12 * std::max(max_diag, std::numeric_limits<double>::min());
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a.at(j, k) * a.at(j, k);
    if (!(d > floor)) {
      throw NumericalError("normal equations are singular (pivot " + std::to_string(j) +
                           "); use a ridge penalty lambda > 0");
    }
    const double l = std::sqrt(d);
    a.at(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a.at(i, k) * a.at(j, k);
      a.at(i, j) = s / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a.at(i, k) * b[k];
    b[i] = s / a.at(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a.at(k, i) * b[k];
    b[i] = s / a.at(i, i);
  }
  return b;
}

LinearModel fit_linear(const WindowedRegressionSet& train_set, double ridge_lambda) {
  if (!(ridge_lambda >= 0.0)) throw ConfigError("ridge lambda must be >= 0");
  const std::size_t s = train_set.size();
  if (s == 0) throw DataError("linear baseline: empty training set");
  const std::size_t p = train_set.channels() * train_set.window;
  const std::size_t dim = p + 1;  // last column is the intercept
  Tensor gram({dim, dim});
  std::vector<double> rhs(dim, 0.0);
  std::vector<double> row(dim);
  for (std::size_t r = 0; r < s; ++r) {
    std::copy_n(train_set.inputs.data().data() + r * p, p, row.begin());
    row[p] = 1.0;
    const double y = train_set.targets[r];
    for (std::size_t i = 0; i < dim; ++i) {
      rhs[i] += row[i] * y;
      const double ri = row[i];
      double* g = gram.data().data() + i * dim;
      for (std::size_t j = 0; j <= i; ++j) g[j] += ri * row[j];
    }
  }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < i; ++j) gram.at(j, i) = gram.at(i, j);
  for (std::size_t i = 0; i < p; ++i) gram.at(i, i) += ridge_lambda;
  std::vector<double> w = cholesky_solve(std::move(gram), std::move(rhs));
  LinearModel m;
  m.intercept = w.back();
  w.pop_back();
  m.weights = std::move(w);
  return m;
}

std::vector<double> predict_linear(const LinearModel& model, const WindowedRegressionSet& set) {
  const std::size_t p = set.channels() * set.window;
  if (p != model.weights.size()) throw ShapeError("linear model width does not match the windows");
  std::vector<double> out(set.size());
  for (std::size_t r = 0; r < set.size(); ++r) {
    double y = model.intercept;
    const double* x = set.inputs.data().data() + r * p;
    for (std::size_t i = 0; i < p; ++i) y += model.weights[i] * x[i];
    out[r] = y;
  }
  return out;
}

EvalReport linear_baseline(const WindowedRegressionSet& train_set, const WindowedRegressionSet& test_set,
                           double ridge_lambda) {
  const LinearModel m = fit_linear(train_set, ridge_lambda);
  EvalReport r;
  r.predictions = predict_linear(m, test_set);
  r.targets = test_set.targets;
  r.stamps = test_set.target_stamps;
  r.target_name = test_set.target_name;
  r.model_id = ridge_lambda > 0.0 ? "ridge" : "linear";
  const SrmseParts parts = srmse(r.targets, r.predictions);
  r.rmse = parts.rmse;
  r.se = parts.se;
  r.srmse = parts.srmse;
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history, const std::string& config_hash) {
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "epoch,train_srmse,val_srmse,loss\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << fmt(r.train_srmse) << ',' << fmt(r.val_srmse) << ',' << fmt(r.loss) << '\n';
  }
}

void write_predictions_csv(std::ostream& out, const EvalReport& report, const std::string& config_hash) {
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "t,target,prediction\n";
  for (std::size_t i = 0; i < report.targets.size(); ++i) {
    out << (i < report.stamps.size() ? report.stamps[i] : std::to_string(i)) << ',' << fmt(report.targets[i]) << ','
        << fmt(report.predictions[i]) << '\n';
  }
}

void write_report(std::ostream& out, const EvalReport& report, const std::string& config_hash, std::string_view split) {
  nlohmann::ordered_json j;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  j["model_id"] = report.model_id;
  j["target"] = report.target_name;
  if (!split.empty()) j["split"] = std::string(split);
  j["samples"] = report.targets.size();
  if (report.srmse) {
    j["srmse"] = *report.srmse;
  } else {
    j["srmse"] = nullptr;
    j["note"] = "targets are constant; SRMSE undefined";
  }
  j["rmse"] = report.rmse;
  j["se"] = report.se;
  out << j.dump(2) << '\n';
}

}  // namespace gcnn

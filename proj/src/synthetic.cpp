#include "gcnn/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "gcnn/rng.hpp"

namespace gcnn {

SyntheticData grouped_synthetic(const SyntheticSpec& spec) {
  if (spec.groups < 1 || spec.series_per_group < 1 || spec.length < 2) {
    throw std::invalid_argument("grouped_synthetic: empty layout");
  }
  if (!(std::abs(spec.ar) < 1.0)) throw std::invalid_argument("grouped_synthetic: |ar| must be < 1");
  Rng rng(spec.seed);
  const double innovation = std::sqrt(1.0 - spec.ar * spec.ar);
  const std::size_t burn_in = 100;

  SyntheticData out;
  TimeSeriesDataset& d = out.dataset;
  for (std::size_t t = 0; t < spec.length; ++t) {
    d.times.push_back(static_cast<double>(t));
    d.stamps.push_back(std::to_string(t));
  }
  std::vector<std::size_t> labels;
  for (std::size_t g = 0; g < spec.groups; ++g) {
    std::vector<double> driver(spec.length);
    double x = rng.normal();
    for (std::size_t t = 0; t < burn_in; ++t) x = spec.ar * x + innovation * rng.normal();
    for (std::size_t t = 0; t < spec.length; ++t) {
      x = spec.ar * x + innovation * rng.normal();
      driver[t] = x;
    }
    for (std::size_t j = 0; j < spec.series_per_group; ++j) {
      const double loading = rng.uniform(spec.loading_min, spec.loading_max);
      std::vector<double> series(spec.length);
      for (std::size_t t = 0; t < spec.length; ++t) series[t] = loading * driver[t] + spec.noise * rng.normal();
      d.names.push_back("g" + std::to_string(g + 1) + "_s" + std::to_string(j + 1));
      d.values.push_back(std::move(series));
      d.mask.emplace_back(spec.length, true);
      labels.push_back(g);
    }
  }
  out.truth = GroupAssignment{std::move(labels), spec.groups};
  return out;
}

GroupAssignment drop_series(const GroupAssignment& a, std::size_t excluded) {
  if (excluded >= a.size()) throw std::out_of_range("drop_series: index out of range");
  GroupAssignment out{{}, a.k};
  for (std::size_t i = 0; i < a.size(); ++i)
    if (i != excluded) out.labels.push_back(a.labels[i]);
  return out;
}

}  // namespace gcnn

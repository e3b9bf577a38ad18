#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "gcnn/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a grouped synthetic multivariate series as wide CSV"};
  gcnn::SyntheticSpec spec;
  std::string out;
  std::size_t gap_series = 0, gap_start = 0, gap_length = 0;
  app.add_option("--groups", spec.groups, "Latent groups")->check(CLI::PositiveNumber);
  app.add_option("--per-group", spec.series_per_group, "Series per group")->check(CLI::PositiveNumber);
  app.add_option("--length", spec.length, "Time steps")->check(CLI::Range(2, 10000000));
  app.add_option("--ar", spec.ar, "AR(1) coefficient of the group drivers")->check(CLI::Range(-0.999, 0.999));
  app.add_option("--noise", spec.noise, "Per-series noise std")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", spec.seed, "Generator seed");
  app.add_option("--gap", gap_series, "Blank out a run in this series (0-based index)");
  app.add_option("--gap-start", gap_start, "First blanked step");
  app.add_option("--gap-length", gap_length, "Blanked steps");
  app.add_option("--out", out, "Output CSV")->required();
  CLI11_PARSE(app, argc, argv);

  gcnn::SyntheticData data = gcnn::grouped_synthetic(spec);
  if (gap_length > 0) {
    if (gap_series >= data.dataset.series_count() || gap_start + gap_length > data.dataset.length()) {
      std::cerr << "error: gap outside the generated data\n";
      return 2;
    }
    for (std::size_t t = gap_start; t < gap_start + gap_length; ++t) {
      data.dataset.mask[gap_series][t] = false;
      data.dataset.values[gap_series][t] = 0.0;
    }
  }
  std::ofstream file(out);
  if (!file) {
    std::cerr << "error: cannot write " << out << '\n';
    return 3;
  }
  gcnn::write_csv(file, data.dataset);
  std::cout << "wrote " << data.dataset.series_count() << " series x " << data.dataset.length() << " steps to " << out << '\n';
  return 0;
}

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gcnn/config.hpp"
#include "gcnn/specgroup.hpp"
#include "gcnn/trainer.hpp"
#include "gcnn/tsdata.hpp"

namespace gcnn {

/// Load -> repair -> standardize on training-range statistics -> window -> split.
struct PreparedData {
  RepairResult repair;
  StandardizeResult standardized;
  WindowedRegressionSet windows;
  Split split;
  std::size_t train_end_step = 0;  // statistics and similarity use steps [0, train_end_step)
};

PreparedData prepare_data(const DataConfig& data, const std::string& target, std::uint64_t seed);

// |Pearson| graph over the input series (target excluded) on the training steps.
SimilarityGraph training_similarity(const PreparedData& prepared);

// Model spec with the input geometry taken from the prepared windows.
ModelSpec resolve_spec(const ModelSpec& spec, const WindowedRegressionSet& windows);

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

struct ParamCountReport {
  std::string layer_plan;
  std::size_t params = 0;
  std::size_t conv_kernel_params = 0;
  std::string vanilla_layer_plan;
  std::size_t vanilla_params = 0;
  std::size_t vanilla_conv_kernel_params = 0;
  bool grouped = false;
};

ParamCountReport param_count_report(const ModelSpec& spec);
std::string param_count_line(const ParamCountReport& r);

struct ClusterOutcome {
  GroupAssignment assignment;
  double ncut = 0.0;
  double cut = 0.0;
  SpectralEmbedding embedding;
};

ClusterOutcome cluster_inputs(const PreparedData& prepared, std::size_t k, std::uint64_t seed);

struct CompareRow {
  std::size_t repeat = 0;
  std::string target;
  std::string model;
  double srmse = 0.0;
  double rmse = 0.0;
  double se = 0.0;
};

struct CompareSummary {
  std::string model;
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for one run
  std::size_t runs = 0;
};

std::vector<CompareSummary> summarize(const std::vector<CompareRow>& rows);

// Subcommands. Each writes its artifacts under cfg.output_dir and a short
// summary to `log`. Return value is the process exit code on success (0).
int cmd_ingest(const RunConfig& cfg, std::ostream& log);
int cmd_cluster(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& log);
int cmd_compare(const RunConfig& cfg, std::ostream& log);
int cmd_param_count(const RunConfig& cfg, std::ostream& log);

// Maps exceptions to the documented exit codes: 2 config, 3 data or shape,
// 4 numerical failure, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace gcnn

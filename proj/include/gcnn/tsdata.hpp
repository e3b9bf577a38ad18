#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcnn/tensor.hpp"

namespace gcnn {

/// N named series over L shared time stamps, with a presence mask.
struct TimeSeriesDataset {
  std::vector<std::string> names;
  std::vector<std::string> stamps;  // original text of the time column
  std::vector<double> times;        // numeric time (days for ISO dates)
  std::string time_column = "time";
  std::vector<std::vector<double>> values;  // [N][L]; missing cells hold 0
  std::vector<std::vector<bool>> mask;      // true = present

  std::size_t series_count() const { return names.size(); }
  std::size_t length() const { return times.size(); }
  double value(std::size_t series, std::size_t t) const { return values[series][t]; }
  bool present(std::size_t series, std::size_t t) const { return mask[series][t]; }
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::size_t missing_count() const;

  // Strictly increasing times, unique names, N >= 2, rectangular storage.
  void validate() const;

  bool operator==(const TimeSeriesDataset&) const = default;
};

/// Wide CSV: first column the time stamp (number or YYYY-MM-DD), then one
/// column per series; empty cells are missing. Lines starting with '#' are
/// skipped.
TimeSeriesDataset load_csv(std::istream& in, const std::string& source = "<stream>");
TimeSeriesDataset load_csv(const std::string& path);
// Values written with 17 significant digits so a reload is bit-exact.
void write_csv(std::ostream& out, const TimeSeriesDataset& data, const std::string& comment = "");
void write_csv(const std::string& path, const TimeSeriesDataset& data, const std::string& comment = "");

struct GapFill {
  std::string series;
  std::size_t start = 0;  // first missing step
  std::size_t length = 0;
};

struct SeriesDrop {
  std::string series;
  std::string reason;
};

struct GapReport {
  std::vector<GapFill> fills;
  std::vector<SeriesDrop> drops;
};

struct RepairResult {
  TimeSeriesDataset data;
  GapReport report;
};

/// Interpolates runs of at most `max_gap` missing steps linearly between the
/// flanking values. Series with a longer run or a missing first/last value
/// are dropped. Requires a fixed time step.
RepairResult repair_gaps(const TimeSeriesDataset& data, std::size_t max_gap);

struct SeriesStats {
  std::string name;
  double mean = 0.0;
  double std = 1.0;
};

struct StandardizeResult {
  TimeSeriesDataset data;
  std::vector<SeriesStats> stats;  // one per retained series
  std::vector<SeriesDrop> drops;
};

// (x - mean) / std with statistics from steps [train_begin, train_end).
StandardizeResult standardize(const TimeSeriesDataset& data, std::size_t train_begin, std::size_t train_end);
TimeSeriesDataset destandardize(const TimeSeriesDataset& data, std::span<const SeriesStats> stats);

/// Regression samples: the trailing window of the other N-1 series, ending at
/// step t, predicts the target series at t.
struct WindowedRegressionSet {
  Tensor inputs;  // [S x (N-1) x T]
  std::vector<double> targets;
  std::vector<std::size_t> target_steps;  // dataset step index of each target
  std::vector<std::string> target_stamps;
  std::vector<std::string> channel_names;
  std::string target_name;
  std::size_t window = 0;
  std::vector<SeriesStats> stats;

  std::size_t size() const { return targets.size(); }
  std::size_t channels() const { return channel_names.size(); }
  WindowedRegressionSet subset(std::span<const std::size_t> rows) const;
  WindowedRegressionSet slice(std::size_t begin, std::size_t end) const;
  // [n x C x T] block of samples begin..begin+n-1 (of `order` if given).
  Tensor batch(std::span<const std::size_t> rows) const;
};

// Windows never straddle a step where any series is missing.
WindowedRegressionSet make_windows(const TimeSeriesDataset& data, const std::string& target, std::size_t window);

enum class SplitMode { Chronological, Shuffled };

struct SplitSpec {
  double train_fraction = 0.9;
  SplitMode mode = SplitMode::Chronological;
  std::uint64_t seed = 0;
  // Chronological mode drops this many leading test samples so test windows
  // do not overlap the training targets' steps; nullopt = window - 1.
  std::optional<std::size_t> embargo;
};

struct Split {
  WindowedRegressionSet train;
  WindowedRegressionSet test;
};

Split split(const WindowedRegressionSet& set, const SplitSpec& spec);

// Exports one sample per row: target step, target, then the flattened window.
void write_windows_csv(std::ostream& out, const WindowedRegressionSet& set, const std::string& comment = "");

}  // namespace gcnn

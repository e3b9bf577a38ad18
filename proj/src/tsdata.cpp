#include "gcnn/tsdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "gcnn/errors.hpp"
#include "gcnn/rng.hpp"

namespace gcnn {

std::optional<std::size_t> TimeSeriesDataset::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

std::size_t TimeSeriesDataset::missing_count() const {
  std::size_t n = 0;
  for (const auto& m : mask) n += static_cast<std::size_t>(std::count(m.begin(), m.end(), false));
  return n;
}

void TimeSeriesDataset::validate() const {
  if (names.size() < 2) throw DataError("dataset needs at least two series");
  std::set<std::string> unique(names.begin(), names.end());
  if (unique.size() != names.size()) throw DataError("series names are not unique");
  if (values.size() != names.size() || mask.size() != names.size()) throw DataError("dataset storage is not rectangular");
  if (stamps.size() != times.size()) throw DataError("stamp/time length mismatch");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (values[i].size() != length() || mask[i].size() != length()) throw DataError("dataset storage is not rectangular");
  }
  for (std::size_t t = 1; t < times.size(); ++t) {
    if (!(times[t] > times[t - 1])) {
      throw DataError("time index is not strictly increasing at '" + stamps[t] + "'");
    }
  }
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

// Days since 1970-01-01 (proleptic Gregorian).
std::optional<double> parse_date(const std::string& s) {
  int y = 0, m = 0, d = 0;
  char extra = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &extra) != 3) return std::nullopt;
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const int yoe = y - era * 400;
  const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<double>(era * 146097 + doe - 719468);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TimeSeriesDataset load_csv(std::istream& in, const std::string& source) {
  TimeSeriesDataset data;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::set<std::string> seen_stamps;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    auto fields = split_fields(line);
    if (!header) {
      if (fields.size() < 3) throw DataError(source + ":" + std::to_string(lineno) + ": need a time column and at least two series");
      data.time_column = fields[0];
      data.names.assign(fields.begin() + 1, fields.end());
      for (const auto& n : data.names) {
        if (n.empty()) throw DataError(source + ":" + std::to_string(lineno) + ": empty series name");
      }
      data.values.assign(data.names.size(), {});
      data.mask.assign(data.names.size(), {});
      header = true;
      continue;
    }
    if (fields.size() != data.names.size() + 1) {
      throw DataError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(data.names.size() + 1) +
                      " fields, found " + std::to_string(fields.size()));
    }
    auto time = parse_number(fields[0]);
    if (!time) time = parse_date(fields[0]);
    if (!time) throw DataError(source + ":" + std::to_string(lineno) + ": unparseable time stamp '" + fields[0] + "'");
    if (!seen_stamps.insert(fields[0]).second) {
      throw DataError(source + ":" + std::to_string(lineno) + ": duplicate time stamp '" + fields[0] + "'");
    }
    if (!data.times.empty() && !(*time > data.times.back())) {
      throw DataError(source + ":" + std::to_string(lineno) + ": time stamp '" + fields[0] + "' is not after the previous row");
    }
    data.stamps.push_back(fields[0]);
    data.times.push_back(*time);
    for (std::size_t i = 0; i < data.names.size(); ++i) {
      const std::string& cell = fields[i + 1];
      if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
        data.values[i].push_back(0.0);
        data.mask[i].push_back(false);
        continue;
      }
      auto v = parse_number(cell);
      if (!v || !std::isfinite(*v)) {
        throw DataError(source + ":" + std::to_string(lineno) + ": bad value '" + cell + "' for series '" + data.names[i] + "'");
      }
      data.values[i].push_back(*v);
      data.mask[i].push_back(true);
    }
  }
  if (!header) throw DataError(source + ": no header row");
  data.validate();
  return data;
}

TimeSeriesDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_csv(in, path);
}

void write_csv(std::ostream& out, const TimeSeriesDataset& data, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << data.time_column;
  for (const auto& n : data.names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < data.length(); ++t) {
    out << data.stamps[t];
    for (std::size_t i = 0; i < data.series_count(); ++i) {
      out << ',';
      if (data.mask[i][t]) out << format_double(data.values[i][t]);
    }
    out << '\n';
  }
}

void write_csv(const std::string& path, const TimeSeriesDataset& data, const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_csv(out, data, comment);
}

RepairResult repair_gaps(const TimeSeriesDataset& data, std::size_t max_gap) {
  const std::size_t len = data.length();
  if (len >= 3) {
    const double step = data.times[1] - data.times[0];
    for (std::size_t t = 2; t < len; ++t) {
      const double d = data.times[t] - data.times[t - 1];
      if (std::abs(d - step) > 1e-9 * std::max(1.0, std::abs(step))) {
        throw DataError("irregular time step at '" + data.stamps[t] + "'; a fixed step is required");
      }
    }
  }
  RepairResult result;
  TimeSeriesDataset& out = result.data;
  out.stamps = data.stamps;
  out.times = data.times;
  out.time_column = data.time_column;
  for (std::size_t i = 0; i < data.series_count(); ++i) {
    const auto& mask = data.mask[i];
    std::vector<double> values = data.values[i];
    std::vector<GapFill> fills;
    std::string drop;
    if (len == 0 || !mask.front() || !mask.back()) {
      drop = "missing value at the series start or end";
    }
    for (std::size_t t = 0; t < len && drop.empty();) {
      if (mask[t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < len && !mask[end]) ++end;
      const std::size_t run = end - t;
      if (run > max_gap) {
        drop = "gap of " + std::to_string(run) + " steps at '" + data.stamps[t] + "' exceeds the cap of " +
               std::to_string(max_gap);
        break;
      }
      const double a = values[t - 1], b = values[end];
      for (std::size_t j = 0; j < run; ++j) {
        values[t + j] = a + (b - a) * static_cast<double>(j + 1) / static_cast<double>(run + 1);
      }
      fills.push_back({data.names[i], t, run});
      t = end;
    }
    if (!drop.empty()) {
      result.report.drops.push_back({data.names[i], drop});
      continue;
    }
    result.report.fills.insert(result.report.fills.end(), fills.begin(), fills.end());
    out.names.push_back(data.names[i]);
    out.values.push_back(std::move(values));
    out.mask.emplace_back(len, true);
  }
  if (out.names.empty()) throw DataError("gap repair dropped every series");
  return result;
}

StandardizeResult standardize(const TimeSeriesDataset& data, std::size_t train_begin, std::size_t train_end) {
  if (train_begin >= train_end || train_end > data.length()) throw DataError("standardization range is empty or out of bounds");
  StandardizeResult result;
  TimeSeriesDataset& out = result.data;
  out.stamps = data.stamps;
  out.times = data.times;
  out.time_column = data.time_column;
  for (std::size_t i = 0; i < data.series_count(); ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = train_begin; t < train_end; ++t) {
      if (!data.mask[i][t]) continue;
      sum += data.values[i][t];
      ++count;
    }
    if (count == 0) {
      result.drops.push_back({data.names[i], "no values in the training range"});
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t t = train_begin; t < train_end; ++t) {
      if (!data.mask[i][t]) continue;
      const double d = data.values[i][t] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 0.0)) {
      result.drops.push_back({data.names[i], "zero variance in the training range"});
      continue;
    }
    std::vector<double> values(data.length(), 0.0);
    for (std::size_t t = 0; t < data.length(); ++t) {
      if (data.mask[i][t]) values[t] = (data.values[i][t] - mean) / sd;
    }
    out.names.push_back(data.names[i]);
    out.values.push_back(std::move(values));
    out.mask.push_back(data.mask[i]);
    result.stats.push_back({data.names[i], mean, sd});
  }
  return result;
}

TimeSeriesDataset destandardize(const TimeSeriesDataset& data, std::span<const SeriesStats> stats) {
  TimeSeriesDataset out = data;
  for (std::size_t i = 0; i < data.series_count(); ++i) {
    auto it = std::find_if(stats.begin(), stats.end(), [&](const SeriesStats& s) { return s.name == data.names[i]; });
    if (it == stats.end()) throw DataError("no statistics for series '" + data.names[i] + "'");
    for (std::size_t t = 0; t < data.length(); ++t) {
      if (data.mask[i][t]) out.values[i][t] = data.values[i][t] * it->std + it->mean;
    }
  }
  return out;
}

Tensor WindowedRegressionSet::batch(std::span<const std::size_t> rows) const {
  const std::size_t c = inputs.dim(1), w = inputs.dim(2);
  Tensor out({rows.size(), c, w});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(inputs.data().data() + rows[r] * c * w, c * w, out.data().data() + r * c * w);
  }
  return out;
}

WindowedRegressionSet WindowedRegressionSet::subset(std::span<const std::size_t> rows) const {
  if (rows.empty()) throw DataError("empty sample subset");
  WindowedRegressionSet out;
  out.inputs = batch(rows);
  for (std::size_t r : rows) {
    out.targets.push_back(targets.at(r));
    out.target_steps.push_back(target_steps[r]);
    out.target_stamps.push_back(target_stamps[r]);
  }
  out.channel_names = channel_names;
  out.target_name = target_name;
  out.window = window;
  out.stats = stats;
  return out;
}

WindowedRegressionSet WindowedRegressionSet::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw DataError("empty or out-of-range sample slice");
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return subset(rows);
}

WindowedRegressionSet make_windows(const TimeSeriesDataset& data, const std::string& target, std::size_t window) {
  const auto p = data.index_of(target);
  if (!p) throw DataError("target series '" + target + "' not found");
  if (window == 0) throw DataError("window length must be positive");
  if (window > data.length()) {
    throw DataError("window " + std::to_string(window) + " exceeds the series length " + std::to_string(data.length()));
  }
  const std::size_t n = data.series_count(), len = data.length();
  std::vector<std::size_t> channels;
  for (std::size_t i = 0; i < n; ++i)
    if (i != *p) channels.push_back(i);

  std::vector<bool> complete(len, true);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t i = 0; i < n; ++i) complete[t] = complete[t] && data.mask[i][t];

  std::vector<std::size_t> ends;
  std::size_t run = 0;
  for (std::size_t t = 0; t < len; ++t) {
    run = complete[t] ? run + 1 : 0;
    if (run >= window) ends.push_back(t);
  }
  if (ends.empty()) {
    throw DataError("window " + std::to_string(window) + " exceeds every complete segment of the data");
  }

  WindowedRegressionSet set;
  set.window = window;
  set.target_name = target;
  for (std::size_t c : channels) set.channel_names.push_back(data.names[c]);
  set.inputs = Tensor({ends.size(), channels.size(), window});
  for (std::size_t s = 0; s < ends.size(); ++s) {
    const std::size_t t = ends[s];
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const auto& series = data.values[channels[c]];
      std::copy_n(series.begin() + static_cast<std::ptrdiff_t>(t + 1 - window), window,
                  set.inputs.data().data() + (s * channels.size() + c) * window);
    }
    set.targets.push_back(data.values[*p][t]);
    set.target_steps.push_back(t);
    set.target_stamps.push_back(data.stamps[t]);
  }
  return set;
}

Split split(const WindowedRegressionSet& set, const SplitSpec& spec) {
  const std::size_t n = set.size();
  if (n < 2) throw DataError("split needs at least two samples");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) throw DataError("train fraction must lie in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train_fraction + 1e-9));
  if (n_train == 0 || n_train >= n) throw DataError("degenerate split: one side would be empty");

  if (spec.mode == SplitMode::Chronological) {
    const std::size_t embargo = spec.embargo.value_or(set.window > 0 ? set.window - 1 : 0);
    if (n_train + embargo >= n) {
      throw DataError("degenerate split: the test side is empty after dropping " + std::to_string(embargo) +
                      " overlapping samples");
    }
    return Split{set.slice(0, n_train), set.slice(n_train + embargo, n)};
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return Split{set.subset(train), set.subset(test)};
}

void write_windows_csv(std::ostream& out, const WindowedRegressionSet& set, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "step,stamp,target";
  for (const auto& c : set.channel_names)
    for (std::size_t w = 0; w < set.window; ++w) out << ',' << c << '@' << w;
  out << '\n';
  const std::size_t block = set.channels() * set.window;
  for (std::size_t s = 0; s < set.size(); ++s) {
    out << set.target_steps[s] << ',' << set.target_stamps[s] << ',' << format_double(set.targets[s]);
    for (std::size_t k = 0; k < block; ++k) out << ',' << format_double(set.inputs[s * block + k]);
    out << '\n';
  }
}

}  // namespace gcnn

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcnn/model.hpp"
#include "gcnn/trainer.hpp"
#include "gcnn/tsdata.hpp"
#include "json.hpp"

namespace gcnn {

struct DataConfig {
  std::string path;           // as written in the config
  std::string resolved_path;  // relative paths resolve against the config's directory
  std::string target;
  std::size_t window = 32;
  std::size_t max_gap = 61;
  double train_fraction = 0.9;
  SplitMode split_mode = SplitMode::Chronological;
  std::optional<std::size_t> embargo;
  bool export_windows = false;
};

struct ModelConfig {
  std::string preset;  // "", "water" or "drone"
  ModelSpec spec;      // input_channels and window are filled from the data
};

struct ClusterConfig {
  std::string assignment;  // optional path to a precomputed assignment
};

struct EvalConfig {
  std::string split = "test";  // test | validation | train
  std::string checkpoint;      // defaults to <output_dir>/checkpoint.json
};

struct CompareModel {
  std::string name;
  nlohmann::json overrides;  // applied on top of the "model" section
};

struct CompareConfig {
  std::size_t repeats = 3;
  std::vector<std::string> targets;  // fixed targets; empty = seeded random picks
  double ridge_lambda = 1.0;
  bool baselines = true;
  // Absent in the document: the "model" section alone. Empty: baselines only.
  std::vector<CompareModel> models;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  ClusterConfig cluster;
  EvalConfig eval;
  CompareConfig compare;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  nlohmann::json effective;  // after overrides, as hashed
  std::string hash;
};

/// `key=value` with a dotted key; the value is read as JSON when it parses,
/// otherwise as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// FNV-1a (64-bit, hex) of the compact JSON dump with output_dir removed.
std::string config_hash(const nlohmann::json& doc);

/// Validates every field before any work starts; throws ConfigError naming the
/// offending field.
RunConfig parse_config(const nlohmann::json& doc, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {},
                      std::optional<std::uint64_t> seed = std::nullopt,
                      std::optional<std::string> output_dir = std::nullopt);

// Model section parsed on its own (used for compare members).
ModelConfig parse_model_section(const nlohmann::json& section, const std::string& where);

}  // namespace gcnn

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gcnn/commands.hpp"
#include "gcnn/config.hpp"

namespace {

using Command = std::function<int(const gcnn::RunConfig&, std::ostream&)>;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grouped convolutional networks for multivariate time-series regression"};
  app.require_subcommand(1);

  const std::map<std::string, std::pair<std::string, Command>> commands{
      {"ingest", {"Repair, standardize and window the dataset; write the manifest", gcnn::cmd_ingest}},
      {"cluster", {"Spectral clustering of the input series (explicit grouping)", gcnn::cmd_cluster}},
      {"train", {"Train the configured model and write the best checkpoint", gcnn::cmd_train}},
      {"eval", {"Evaluate a checkpoint on the test, validation or train split", gcnn::cmd_eval}},
      {"compare", {"Baselines and networks over repeated target picks", gcnn::cmd_compare}},
      {"param-count", {"Parameter counts of the model and its vanilla counterpart", gcnn::cmd_param_count}},
  };

  Options opts;
  std::uint64_t seed_value = 0;
  std::string out_value;
  Command selected;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("config", opts.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_value, "Override the config seed");
    sub->add_option("--out", out_value, "Override the output directory");
    sub->add_option("--override", opts.overrides, "Dotted key=value override, repeatable")->take_all();
    sub->callback([&selected, &entry = entry] { selected = entry.second; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) opts.seed = seed_value;
    if (sub->count("--out") > 0) opts.out = out_value;
  }

  try {
    const gcnn::RunConfig cfg = gcnn::load_config(opts.config, opts.overrides, opts.seed, opts.out);
    std::cout << "config_hash=" << cfg.hash << '\n';
    return selected(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gcnn::exit_code_for(e);
  }
}

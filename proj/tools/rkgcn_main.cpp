// rkgcn command-line front end: prep, train, eval, sweep and synth.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "rkgcn/experiment.hpp"
#include "rkgcn/synthetic.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("-c,--config", args.config_path, "key = value configuration file");
  sub->add_option("-s,--set", args.overrides, "override a configuration key (key=value); repeatable");
  sub->add_option("--seed", args.seed, "base random seed");
  sub->add_option("-o,--out", args.out, "output directory");
}

rkgcn::RunConfig build_config(const CommonArgs& args) {
  rkgcn::RunConfig config;
  if (!args.config_path.empty()) config = rkgcn::RunConfig::from_file(args.config_path);
  for (const auto& kv : args.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw rkgcn::UsageError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed) config.seed = *args.seed;
  if (!args.out.empty()) config.out = args.out;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RKGCN knowledge-graph recommender"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  CommonArgs common;
  std::vector<std::pair<std::string, CLI::App*>> commands;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"prep", "binarize ratings, split, sample negatives, write the prepared dataset"},
           {"train", "train on a prepared dataset and write a model directory"},
           {"eval", "score a trained model on prepared splits"},
           {"sweep", "train and test every value of one hyperparameter over derived seeds"}}) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, common);
    commands.emplace_back(name, sub);
  }

  rkgcn::SyntheticConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic ratings/KG/item-map fixture");
  synth_cmd->add_option("-o,--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--users", synth.users);
  synth_cmd->add_option("--items", synth.items);
  synth_cmd->add_option("--relations", synth.relations);
  synth_cmd->add_option("--values", synth.values_per_relation, "attribute values per relation");
  synth_cmd->add_option("--interact", synth.interact_fraction, "share of preferred items rated highly");
  synth_cmd->add_option("--noise", synth.noise_fraction, "extra random positives per planted positive");
  synth_cmd->add_option("--low", synth.low_rating_fraction, "sub-threshold ratings per planted positive");
  synth_cmd->add_option("--seed", synth.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return rkgcn::kExitUsage;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");

  if (*synth_cmd) {
    try {
      rkgcn::write_synthetic(rkgcn::generate_synthetic(synth), synth_out);
      return rkgcn::kExitOk;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return rkgcn::kExitUsage;
    }
  }

  for (const auto& [name, sub] : commands) {
    if (!*sub) continue;
    rkgcn::RunConfig config;
    try {
      config = build_config(common);
    } catch (const rkgcn::UsageError& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      return rkgcn::kExitUsage;
    } catch (const rkgcn::MissingFileError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return rkgcn::kExitMissingFile;
    }
    return rkgcn::run_command(name, config);
  }
  return rkgcn::kExitUsage;
}

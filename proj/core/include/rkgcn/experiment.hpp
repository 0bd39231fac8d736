#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rkgcn/interactions.hpp"
#include "rkgcn/kg_store.hpp"
#include "rkgcn/model.hpp"

namespace rkgcn {

/// Process exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitMissingFile = 2,
  kExitMalformed = 3,
  kExitDiverged = 4,
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Everything a run needs, settable by `key = value` text.
///
/// Keys are the names accepted by `set`; `entries()` lists the full
/// canonical configuration (defaults included) in key order.
struct RunConfig {
  std::filesystem::path ratings;
  std::filesystem::path kg;
  std::filesystem::path item_map;
  std::filesystem::path data_dir;   // prep output, train/eval/sweep input
  std::filesystem::path model_dir;  // eval input; defaults to `out`
  std::filesystem::path out;

  double rating_threshold = 4.0;
  SplitRatios split;
  bool undirected = true;
  std::uint64_t seed = 2024;
  int precision = 32;  // 32 or 64

  Hyperparams hp;
  ModelOptions options;

  std::size_t runs = 5;
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  std::vector<std::string> eval_splits{"validation", "test"};

  void set(std::string_view key, std::string_view value);
  /// Applies `key = value` lines; blank lines and '#' comments are skipped,
  /// as are keys starting with "manifest." (provenance written by the tool).
  void apply_text(std::string_view text, const std::string& origin = "config");
  static RunConfig from_file(const std::filesystem::path& path);

  std::map<std::string, std::string> entries() const;
  std::string canonical() const;
  std::uint64_t hash() const { return fnv1a(canonical()); }
};

/// Artifacts written by `cmd_prep` and read back by the other commands.
struct PreparedData {
  KnowledgeGraph kg;
  InteractionDataset dataset;
  Vocabulary users;
  Vocabulary items;
};

/// The `runs` fixed seeds used for repeated runs (sweeps, averaged reports).
std::vector<std::uint64_t> derived_seeds(std::uint64_t base, std::size_t runs);

PreparedData load_prepared(const std::filesystem::path& dir, bool undirected);

int cmd_prep(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_eval(const RunConfig& config);
int cmd_sweep(const RunConfig& config);

/// Runs a subcommand and maps failures onto the documented exit codes.
int run_command(std::string_view command, const RunConfig& config);

/// Writes `text` to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace rkgcn

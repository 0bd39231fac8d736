#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace rkgcn {

/// Relation-cluster preference generator.
///
/// Items are KG entities linked to one attribute value per relation
/// (`relations` x `values_per_relation` attribute entities). Every user
/// prefers one (relation, value) pair and rates a random share of the
/// matching items highly; everything else is unobserved, apart from optional
/// noise positives and low ratings. Preferences are therefore recoverable
/// only through the KG structure.
struct SyntheticConfig {
  std::size_t users = 1000;
  std::size_t items = 500;
  std::size_t relations = 2;
  std::size_t values_per_relation = 10;
  double interact_fraction = 0.6;
  double noise_fraction = 0.0;       // extra random positives, relative to planted ones
  double low_rating_fraction = 0.0;  // random sub-threshold ratings, relative to planted ones
  std::uint64_t seed = 1;
};

struct SyntheticRating {
  std::string user;
  std::string item;
  int rating = 0;
};

struct SyntheticData {
  std::vector<std::array<std::string, 3>> triples;
  std::vector<std::pair<std::string, std::string>> item_map;  // item raw id -> entity raw id
  std::vector<SyntheticRating> ratings;
  std::vector<std::pair<std::size_t, std::size_t>> preference;  // per user: (relation, value)
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

/// Writes ratings.tsv, kg.tsv and item_map.tsv into `dir`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace rkgcn

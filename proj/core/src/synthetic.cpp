#include "rkgcn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "rkgcn/common.hpp"

namespace rkgcn {

namespace {

std::string item_raw(std::size_t i) { return "m" + std::to_string(i); }
std::string item_entity(std::size_t i) { return "item_" + std::to_string(i); }
std::string attribute(std::size_t r, std::size_t v) { return "attr_" + std::to_string(r) + "_" + std::to_string(v); }
std::string relation(std::size_t r) { return "rel_" + std::to_string(r); }

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  if (config.users == 0 || config.items == 0 || config.relations == 0 || config.values_per_relation == 0)
    throw DataError("synthetic generator needs nonzero users, items, relations and values");
  Rng rng(config.seed);
  SyntheticData data;

  std::uniform_int_distribution<std::size_t> pick_value(0, config.values_per_relation - 1);
  std::vector<std::vector<std::size_t>> value_of(config.items, std::vector<std::size_t>(config.relations));
  for (std::size_t i = 0; i < config.items; ++i) {
    data.item_map.emplace_back(item_raw(i), item_entity(i));
    for (std::size_t r = 0; r < config.relations; ++r) {
      value_of[i][r] = pick_value(rng);
      data.triples.push_back({item_entity(i), relation(r), attribute(r, value_of[i][r])});
    }
  }

  std::uniform_int_distribution<std::size_t> pick_relation(0, config.relations - 1);
  std::uniform_int_distribution<std::size_t> pick_item(0, config.items - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::size_t> pool;
  std::vector<char> taken(config.items);
  for (std::size_t u = 0; u < config.users; ++u) {
    std::size_t rel = 0;
    std::size_t val = 0;
    do {
      rel = pick_relation(rng);
      val = pick_value(rng);
      pool.clear();
      for (std::size_t i = 0; i < config.items; ++i)
        if (value_of[i][rel] == val) pool.push_back(i);
    } while (pool.empty());
    data.preference.emplace_back(rel, val);

    std::fill(taken.begin(), taken.end(), 0);
    std::vector<std::size_t> liked;
    for (auto i : pool)
      if (coin(rng) < config.interact_fraction) liked.push_back(i);
    if (liked.empty()) liked.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
    for (auto i : liked) taken[i] = 1;

    auto extra = [&](double fraction, int rating) {
      auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(liked.size())));
      for (std::size_t k = 0, tries = 0; k < count && tries < 50 * count + 50; ++tries) {
        auto i = pick_item(rng);
        if (taken[i] || value_of[i][rel] == val) continue;
        taken[i] = 1;
        data.ratings.push_back({"u" + std::to_string(u), item_raw(i), rating});
        ++k;
      }
    };
    for (auto i : liked) data.ratings.push_back({"u" + std::to_string(u), item_raw(i), 5});
    extra(config.noise_fraction, 5);
    extra(config.low_rating_fraction, 2);
  }
  return data;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream kg(dir / "kg.tsv");
  for (const auto& t : data.triples) kg << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
  std::ofstream map(dir / "item_map.tsv");
  for (const auto& [item, entity] : data.item_map) map << item << '\t' << entity << '\n';
  std::ofstream ratings(dir / "ratings.tsv");
  std::size_t ts = 0;
  for (const auto& r : data.ratings) ratings << r.user << '\t' << r.item << '\t' << r.rating << '\t' << ts++ << '\n';
  if (!kg || !map || !ratings) throw Error("failed writing synthetic data to " + dir.string());
}

}  // namespace rkgcn

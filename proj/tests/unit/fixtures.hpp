#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "rkgcn/interactions.hpp"
#include "rkgcn/kg_store.hpp"
#include "rkgcn/model.hpp"
#include "rkgcn/trainer.hpp"

namespace rkgcn::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("rkgcn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Random graph where every entity has at least one outgoing triple.
inline KnowledgeGraph random_kg(std::size_t entities, std::size_t relations, std::size_t extra_triples,
                                std::uint64_t seed, bool undirected = true) {
  Rng rng(seed);
  std::uniform_int_distribution<EntityId> pick_e(0, static_cast<EntityId>(entities - 1));
  std::uniform_int_distribution<RelationId> pick_r(0, static_cast<RelationId>(relations - 1));
  std::vector<Triple> triples;
  for (std::size_t e = 0; e < entities; ++e) triples.push_back({static_cast<EntityId>(e), pick_r(rng), pick_e(rng)});
  for (std::size_t k = 0; k < extra_triples; ++k) triples.push_back({pick_e(rng), pick_r(rng), pick_e(rng)});
  return KnowledgeGraph(entities, relations, std::move(triples), undirected);
}

/// Small dataset whose items are the first `items` entities.
inline InteractionDataset random_dataset(std::size_t users, std::size_t items, std::size_t per_user,
                                         std::uint64_t seed) {
  Rng rng(seed);
  InteractionDataset ds;
  ds.num_users = users;
  ds.num_items = items;
  for (std::size_t i = 0; i < items; ++i) ds.item_entity.push_back(static_cast<EntityId>(i));
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(items - 1));
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t k = 0; k < per_user; ++k) {
      ds.train.push_back({static_cast<UserId>(u), pick(rng), static_cast<int>(k % 2)});
      ds.validation.push_back({static_cast<UserId>(u), pick(rng), static_cast<int>(k % 2)});
    }
  ds.user_history = train_history(ds.train, users);
  return ds;
}

}  // namespace rkgcn::testing

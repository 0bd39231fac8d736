#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "rkgcn/common.hpp"
#include "rkgcn/kg_store.hpp"

namespace rkgcn {

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  int label = 0;

  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

/// Per-user item lists, indexed by UserId.
using UserItems = std::vector<std::vector<ItemId>>;

/// Raw item id -> KG entity index, restricted to entities present in the KG.
struct ItemEntityMap {
  std::unordered_map<std::string, EntityId> entity_of;
  std::size_t rows = 0;
  std::size_t unknown_entity_rows = 0;  // entity raw id absent from the KG
};

/// Reads `item_raw_id<TAB>entity_raw_id`.
ItemEntityMap load_item_map(const std::filesystem::path& path, const Vocabulary& entity_vocab);

struct BinarizedRatings {
  Vocabulary users;  // only users with at least one positive
  Vocabulary items;  // every KG-mapped item seen in the ratings file
  std::vector<EntityId> item_entity;
  UserItems positives;  // sorted, unique
  UserItems observed;   // every mapped item the user rated, sorted, unique

  std::size_t rows = 0;
  std::size_t below_threshold_rows = 0;
  std::size_t unmapped_rows = 0;
  std::size_t unmapped_items = 0;

  std::size_t num_positives() const;
};

/// Implicit-feedback conversion: rating >= threshold becomes a positive.
/// Lower ratings are unobserved (not negatives). Rows whose item has no KG
/// entity are dropped and counted.
BinarizedRatings binarize(const std::filesystem::path& ratings_file, double threshold,
                          const ItemEntityMap& item_map);

struct NegativeSampleStats {
  std::size_t short_pool_users = 0;  // drew with replacement
  std::size_t empty_pool_users = 0;  // no candidate at all; no negatives drawn
};

/// For each user with T positives, draws T distinct unobserved items
/// (label 0). `observed` (when given) widens the exclusion set beyond the
/// positives. Falls back to with-replacement draws when the pool is short.
std::vector<Interaction> negative_sample(const UserItems& positives, std::size_t num_items, Rng& rng,
                                         const UserItems* observed = nullptr,
                                         NegativeSampleStats* stats = nullptr);

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  UserItems user_history;  // positive train items per user
  std::vector<EntityId> item_entity;
};

/// Global seeded shuffle then contiguous partition. Validation and test get
/// floor(n * ratio); the remainder goes to train.
InteractionDataset split(std::vector<Interaction> interactions, SplitRatios ratios, std::uint64_t seed);

UserItems train_history(const std::vector<Interaction>& train, std::size_t num_users);

struct PrepStats {
  NegativeSampleStats negatives;
  std::size_t users_without_train_history = 0;
};

/// Splits the positives, then pairs every split with its own 1:1 negatives,
/// so each user is balanced inside every split.
InteractionDataset prepare_dataset(const BinarizedRatings& ratings, SplitRatios ratios, std::uint64_t seed,
                                   PrepStats* stats = nullptr);

/// `user<TAB>item<TAB>label` per line.
void save_split(const std::vector<Interaction>& rows, const std::filesystem::path& path);
std::vector<Interaction> load_split(const std::filesystem::path& path);

}  // namespace rkgcn

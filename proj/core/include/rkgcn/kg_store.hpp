#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rkgcn/common.hpp"

namespace rkgcn {

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// One adjacency entry: the relation and the entity at the other end.
struct Edge {
  RelationId relation = 0;
  EntityId neighbor = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Raw string id <-> dense index, assigned in first-appearance order.
class Vocabulary {
 public:
  std::int32_t intern(std::string_view raw);
  std::optional<std::int32_t> find(std::string_view raw) const;
  const std::string& raw(std::int32_t index) const { return raw_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return raw_.size(); }
  bool empty() const { return raw_.empty(); }

  /// `raw_id<TAB>index` per line.
  void save_tsv(const std::filesystem::path& path) const;
  static Vocabulary load_tsv(const std::filesystem::path& path);
  std::uint64_t checksum() const;

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Immutable triple store with a CSR adjacency index.
///
/// Relation index `num_relations()` is reserved as the null relation used by
/// self-loop padding for isolated entities; it never appears in `triples()`.
class KnowledgeGraph {
 public:
  KnowledgeGraph(std::size_t num_entities, std::size_t num_relations, std::vector<Triple> triples,
                 bool undirected, Vocabulary entity_vocab = {}, Vocabulary relation_vocab = {});

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  RelationId null_relation() const { return static_cast<RelationId>(num_relations_); }
  bool undirected() const { return undirected_; }

  /// Deduplicated triples in first-appearance order, as ingested (no inverses).
  const std::vector<Triple>& triples() const { return triples_; }

  /// Adjacency of `entity`, sorted by (relation, neighbor).
  std::span<const Edge> neighbors(EntityId entity) const;
  std::size_t degree(EntityId entity) const { return neighbors(entity).size(); }
  std::size_t total_degree() const { return edges_.size(); }

  const Vocabulary& entity_vocab() const { return entity_vocab_; }
  const Vocabulary& relation_vocab() const { return relation_vocab_; }

 private:
  std::size_t num_entities_;
  std::size_t num_relations_;
  bool undirected_;
  std::vector<Triple> triples_;
  std::vector<std::size_t> offsets_;
  std::vector<Edge> edges_;
  Vocabulary entity_vocab_;
  Vocabulary relation_vocab_;
};

/// Reads a `head<TAB>relation<TAB>tail` file. Duplicate triples are dropped.
KnowledgeGraph load_kg(const std::filesystem::path& triple_file, bool undirected);

/// Reads an index-valued triple file (as written by `save_indexed_triples`).
KnowledgeGraph load_indexed_kg(const std::filesystem::path& triple_file, Vocabulary entity_vocab,
                               Vocabulary relation_vocab, bool undirected);
void save_indexed_triples(const KnowledgeGraph& kg, const std::filesystem::path& path);

struct NeighborSample {
  EntityId center = 0;
  std::vector<Edge> neighbors;
};

/// Uniform with-replacement draw of exactly `n_e` adjacency entries.
/// Isolated entities are padded with (null relation, entity) self-loops.
NeighborSample sample_neighbors(const KnowledgeGraph& kg, EntityId entity, std::size_t n_e, Rng& rng);

struct RippleSet {
  UserId user = -1;
  std::vector<std::vector<Triple>> hops;

  /// Multiset of tails in hop `k` (0-based).
  std::vector<EntityId> tails(std::size_t k) const;
};

class EmptyRippleError : public DataError {
 public:
  using DataError::DataError;
};

/// Builds `hops` bags of exactly `n_p` triples. Hop k draws uniformly, with
/// replacement, from all adjacency triples whose head is a tail of hop k-1
/// (hop 1: a seed). An exhausted frontier reuses the previous hop's bag.
RippleSet build_ripple_set(const KnowledgeGraph& kg, std::span<const EntityId> seeds, std::size_t hops,
                           std::size_t n_p, Rng& rng, UserId user = -1);

/// Per-batch memo of neighbor samples so every occurrence of an entity
/// within one batch sees the same sampled neighborhood.
class NeighborCache {
 public:
  NeighborCache(const KnowledgeGraph& kg, std::size_t n_e, std::uint64_t seed);

  const std::vector<Edge>& neighbors(EntityId entity);
  std::size_t fanout() const { return n_e_; }

 private:
  const KnowledgeGraph* kg_;
  std::size_t n_e_;
  Rng rng_;
  std::unordered_map<EntityId, std::vector<Edge>> memo_;
};

/// Sampled neighborhood tree of an item entity, stored level by level.
/// Level j holds fanout^j entities; the children of node n at level j are
/// nodes [n*fanout, (n+1)*fanout) of level j+1. `relations[j][i]` is the
/// relation linking node i of level j to its parent (empty for level 0).
struct ReceptiveField {
  std::size_t fanout = 0;
  std::vector<std::vector<EntityId>> entities;
  std::vector<std::vector<RelationId>> relations;

  std::size_t depth() const { return entities.empty() ? 0 : entities.size() - 1; }
};

ReceptiveField sample_receptive_field(NeighborCache& cache, EntityId center, std::size_t depth);

}  // namespace rkgcn

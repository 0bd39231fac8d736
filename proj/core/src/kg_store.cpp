#include "rkgcn/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "tsv.hpp"

namespace rkgcn {

std::int32_t Vocabulary::intern(std::string_view raw) {
  std::string key(raw);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  auto id = static_cast<std::int32_t>(raw_.size());
  index_.emplace(key, id);
  raw_.push_back(std::move(key));
  return id;
}

std::optional<std::int32_t> Vocabulary::find(std::string_view raw) const {
  auto it = index_.find(std::string(raw));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::save_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < raw_.size(); ++i) out << raw_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load_tsv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 2) throw ParseError(path.string(), line_no, "expected raw_id<TAB>index");
    auto index = detail::parse_number<std::int32_t>(fields[1]);
    if (!index || static_cast<std::size_t>(*index) != vocab.size())
      throw ParseError(path.string(), line_no, "vocabulary indices must be dense and in order");
    vocab.intern(fields[0]);
  }
  return vocab;
}

std::uint64_t Vocabulary::checksum() const {
  std::uint64_t h = fnv1a("");
  for (const auto& s : raw_) {
    h = fnv1a(s, h);
    h = fnv1a("\n", h);
  }
  return h;
}

KnowledgeGraph::KnowledgeGraph(std::size_t num_entities, std::size_t num_relations,
                               std::vector<Triple> triples, bool undirected, Vocabulary entity_vocab,
                               Vocabulary relation_vocab)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      undirected_(undirected),
      entity_vocab_(std::move(entity_vocab)),
      relation_vocab_(std::move(relation_vocab)) {
  std::set<Triple> seen;
  triples_.reserve(triples.size());
  for (const auto& t : triples) {
    if (t.head < 0 || static_cast<std::size_t>(t.head) >= num_entities || t.tail < 0 ||
        static_cast<std::size_t>(t.tail) >= num_entities || t.relation < 0 ||
        static_cast<std::size_t>(t.relation) >= num_relations)
      throw DataError("triple index out of range");
    if (seen.insert(t).second) triples_.push_back(t);
  }

  std::vector<std::size_t> degree(num_entities, 0);
  for (const auto& t : triples_) {
    ++degree[static_cast<std::size_t>(t.head)];
    if (undirected && t.head != t.tail) ++degree[static_cast<std::size_t>(t.tail)];
  }
  offsets_.assign(num_entities + 1, 0);
  for (std::size_t e = 0; e < num_entities; ++e) offsets_[e + 1] = offsets_[e] + degree[e];
  edges_.resize(offsets_.back());
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& t : triples_) {
    edges_[fill[static_cast<std::size_t>(t.head)]++] = Edge{t.relation, t.tail};
    if (undirected && t.head != t.tail)
      edges_[fill[static_cast<std::size_t>(t.tail)]++] = Edge{t.relation, t.head};
  }
  for (std::size_t e = 0; e < num_entities; ++e)
    std::sort(edges_.begin() + static_cast<std::ptrdiff_t>(offsets_[e]),
              edges_.begin() + static_cast<std::ptrdiff_t>(offsets_[e + 1]));
}

std::span<const Edge> KnowledgeGraph::neighbors(EntityId entity) const {
  auto e = static_cast<std::size_t>(entity);
  if (entity < 0 || e >= num_entities_) throw DataError("entity index out of range");
  return std::span<const Edge>(edges_.data() + offsets_[e], offsets_[e + 1] - offsets_[e]);
}

KnowledgeGraph load_kg(const std::filesystem::path& triple_file, bool undirected) {
  auto in = detail::open_input(triple_file);
  Vocabulary entities;
  Vocabulary relations;
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3)
      throw ParseError(triple_file.string(), line_no,
                       "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    Triple t;
    t.head = entities.intern(fields[0]);
    t.relation = relations.intern(fields[1]);
    t.tail = entities.intern(fields[2]);
    triples.push_back(t);
  }
  if (triples.empty()) throw DataError("knowledge graph file has no triples: " + triple_file.string());
  auto n_ent = entities.size();
  auto n_rel = relations.size();
  return KnowledgeGraph(n_ent, n_rel, std::move(triples), undirected, std::move(entities), std::move(relations));
}

KnowledgeGraph load_indexed_kg(const std::filesystem::path& triple_file, Vocabulary entity_vocab,
                               Vocabulary relation_vocab, bool undirected) {
  auto in = detail::open_input(triple_file);
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3) throw ParseError(triple_file.string(), line_no, "expected 3 fields");
    auto h = detail::parse_number<EntityId>(fields[0]);
    auto r = detail::parse_number<RelationId>(fields[1]);
    auto t = detail::parse_number<EntityId>(fields[2]);
    if (!h || !r || !t) throw ParseError(triple_file.string(), line_no, "non-integer index");
    triples.push_back({*h, *r, *t});
  }
  if (triples.empty()) throw DataError("knowledge graph file has no triples: " + triple_file.string());
  auto n_ent = entity_vocab.size();
  auto n_rel = relation_vocab.size();
  return KnowledgeGraph(n_ent, n_rel, std::move(triples), undirected, std::move(entity_vocab),
                        std::move(relation_vocab));
}

void save_indexed_triples(const KnowledgeGraph& kg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : kg.triples()) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

NeighborSample sample_neighbors(const KnowledgeGraph& kg, EntityId entity, std::size_t n_e, Rng& rng) {
  if (n_e == 0) throw DataError("neighbor sample size must be >= 1");
  auto adj = kg.neighbors(entity);
  NeighborSample sample{entity, {}};
  sample.neighbors.reserve(n_e);
  if (adj.empty()) {
    sample.neighbors.assign(n_e, Edge{kg.null_relation(), entity});
    return sample;
  }
  std::uniform_int_distribution<std::size_t> pick(0, adj.size() - 1);
  for (std::size_t i = 0; i < n_e; ++i) sample.neighbors.push_back(adj[pick(rng)]);
  return sample;
}

std::vector<EntityId> RippleSet::tails(std::size_t k) const {
  std::vector<EntityId> out;
  out.reserve(hops.at(k).size());
  for (const auto& t : hops[k]) out.push_back(t.tail);
  return out;
}

RippleSet build_ripple_set(const KnowledgeGraph& kg, std::span<const EntityId> seeds, std::size_t hops,
                           std::size_t n_p, Rng& rng, UserId user) {
  if (seeds.empty()) throw EmptyRippleError("user has no mappable history");
  if (hops == 0 || n_p == 0) throw DataError("ripple hops and bag size must be >= 1");

  RippleSet ripple;
  ripple.user = user;
  ripple.hops.reserve(hops);

  std::vector<EntityId> heads(seeds.begin(), seeds.end());
  std::vector<std::size_t> cumulative;
  for (std::size_t k = 0; k < hops; ++k) {
    std::sort(heads.begin(), heads.end());
    heads.erase(std::unique(heads.begin(), heads.end()), heads.end());

    cumulative.assign(heads.size(), 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < heads.size(); ++i) {
      total += kg.degree(heads[i]);
      cumulative[i] = total;
    }

    if (total == 0) {
      if (k == 0) throw EmptyRippleError("no triples leave the user's seed entities");
      spdlog::warn("ripple set for user {}: hop {} frontier is empty, reusing hop {}", user, k + 1, k);
      ripple.hops.push_back(ripple.hops.back());
    } else {
      std::vector<Triple> bag;
      bag.reserve(n_p);
      std::uniform_int_distribution<std::size_t> pick(0, total - 1);
      for (std::size_t i = 0; i < n_p; ++i) {
        auto draw = pick(rng);
        auto slot = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), draw) - cumulative.begin());
        auto offset = draw - (slot == 0 ? 0 : cumulative[slot - 1]);
        const auto& edge = kg.neighbors(heads[slot])[offset];
        bag.push_back(Triple{heads[slot], edge.relation, edge.neighbor});
      }
      ripple.hops.push_back(std::move(bag));
    }
    heads = ripple.tails(k);
  }
  return ripple;
}

NeighborCache::NeighborCache(const KnowledgeGraph& kg, std::size_t n_e, std::uint64_t seed)
    : kg_(&kg), n_e_(n_e), rng_(seed) {}

const std::vector<Edge>& NeighborCache::neighbors(EntityId entity) {
  auto it = memo_.find(entity);
  if (it != memo_.end()) return it->second;
  auto sample = sample_neighbors(*kg_, entity, n_e_, rng_);
  return memo_.emplace(entity, std::move(sample.neighbors)).first->second;
}

ReceptiveField sample_receptive_field(NeighborCache& cache, EntityId center, std::size_t depth) {
  ReceptiveField field;
  field.fanout = cache.fanout();
  field.entities.push_back({center});
  field.relations.push_back({});
  for (std::size_t j = 0; j < depth; ++j) {
    std::vector<EntityId> next_entities;
    std::vector<RelationId> next_relations;
    next_entities.reserve(field.entities[j].size() * field.fanout);
    next_relations.reserve(field.entities[j].size() * field.fanout);
    for (auto e : field.entities[j]) {
      for (const auto& edge : cache.neighbors(e)) {
        next_entities.push_back(edge.neighbor);
        next_relations.push_back(edge.relation);
      }
    }
    field.entities.push_back(std::move(next_entities));
    field.relations.push_back(std::move(next_relations));
  }
  return field;
}

}  // namespace rkgcn

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fixtures.hpp"
#include "rkgcn/kg_store.hpp"

namespace rkgcn {
namespace {

using testing::TempDir;
using testing::write_text;

TEST(LoadKg, TwoLineFileUndirected) {
  TempDir dir("kg");
  write_text(dir / "kg.tsv", "a\tr\tb\nb\tr\tc\n");
  auto kg = load_kg(dir / "kg.tsv", true);
  EXPECT_EQ(kg.num_entities(), 3u);
  EXPECT_EQ(kg.num_relations(), 1u);
  auto b = *kg.entity_vocab().find("b");
  auto a = *kg.entity_vocab().find("a");
  auto c = *kg.entity_vocab().find("c");
  auto adj = kg.neighbors(b);
  ASSERT_EQ(adj.size(), 2u);
  EXPECT_EQ(adj[0], (Edge{0, a}));
  EXPECT_EQ(adj[1], (Edge{0, c}));
}

TEST(LoadKg, VocabularyInFirstAppearanceOrder) {
  TempDir dir("kg");
  write_text(dir / "kg.tsv", "x\tp\ty\nz\tq\tx\n");
  auto kg = load_kg(dir / "kg.tsv", false);
  EXPECT_EQ(*kg.entity_vocab().find("x"), 0);
  EXPECT_EQ(*kg.entity_vocab().find("y"), 1);
  EXPECT_EQ(*kg.entity_vocab().find("z"), 2);
  EXPECT_EQ(*kg.relation_vocab().find("q"), 1);
}

TEST(LoadKg, DuplicateLinesStoredOnce) {
  TempDir dir("kg");
  write_text(dir / "once.tsv", "a\tr\tb\nb\tr\tc\n");
  write_text(dir / "dup.tsv", "a\tr\tb\na\tr\tb\nb\tr\tc\na\tr\tb\n");
  auto once = load_kg(dir / "once.tsv", true);
  auto dup = load_kg(dir / "dup.tsv", true);
  EXPECT_EQ(dup.triples().size(), 2u);
  for (EntityId e = 0; e < 3; ++e) EXPECT_EQ(dup.degree(e), once.degree(e));
}

TEST(LoadKg, DirectedAdjacencyHasOutgoingOnly) {
  TempDir dir("kg");
  write_text(dir / "kg.tsv", "a\tr\tb\nb\tr\tc\n");
  auto kg = load_kg(dir / "kg.tsv", false);
  EXPECT_EQ(kg.degree(*kg.entity_vocab().find("b")), 1u);
  EXPECT_EQ(kg.degree(*kg.entity_vocab().find("c")), 0u);
}

TEST(LoadKg, WrongFieldCountReportsLine) {
  TempDir dir("kg");
  write_text(dir / "kg.tsv", "a\tr\tb\nb\tr\n");
  try {
    load_kg(dir / "kg.tsv", true);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadKg, EmptyAndMissingFiles) {
  TempDir dir("kg");
  write_text(dir / "empty.tsv", "");
  EXPECT_THROW(load_kg(dir / "empty.tsv", true), DataError);
  EXPECT_THROW(load_kg(dir / "absent.tsv", true), MissingFileError);
}

TEST(LoadKg, IndexedRoundTrip) {
  TempDir dir("kg");
  auto kg = testing::random_kg(30, 4, 60, 3);
  save_indexed_triples(kg, dir / "t.tsv");
  Vocabulary entities;
  Vocabulary relations;
  for (int e = 0; e < 30; ++e) entities.intern("e" + std::to_string(e));
  for (int r = 0; r < 4; ++r) relations.intern("r" + std::to_string(r));
  auto back = load_indexed_kg(dir / "t.tsv", entities, relations, true);
  EXPECT_EQ(back.triples(), kg.triples());
}

TEST(KnowledgeGraphProperty, UndirectedContainsInverseOfEveryTriple) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto kg = testing::random_kg(25, 3, 50, seed);
    for (const auto& t : kg.triples()) {
      auto fwd = kg.neighbors(t.head);
      auto inv = kg.neighbors(t.tail);
      EXPECT_TRUE(std::binary_search(fwd.begin(), fwd.end(), Edge{t.relation, t.tail}));
      EXPECT_TRUE(std::binary_search(inv.begin(), inv.end(), Edge{t.relation, t.head}));
    }
  }
}

TEST(KnowledgeGraphProperty, AdjacencySortedAndInRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto kg = testing::random_kg(25, 3, 50, seed);
    for (EntityId e = 0; e < static_cast<EntityId>(kg.num_entities()); ++e) {
      auto adj = kg.neighbors(e);
      EXPECT_TRUE(std::is_sorted(adj.begin(), adj.end()));
      for (const auto& edge : adj) {
        EXPECT_GE(edge.neighbor, 0);
        EXPECT_LT(static_cast<std::size_t>(edge.neighbor), kg.num_entities());
        EXPECT_LT(static_cast<std::size_t>(edge.relation), kg.num_relations());
      }
    }
  }
}

TEST(KnowledgeGraph, RejectsOutOfRangeTriples) {
  EXPECT_THROW(KnowledgeGraph(2, 1, {{0, 0, 2}}, true), DataError);
  EXPECT_THROW(KnowledgeGraph(2, 1, {{0, 1, 1}}, true), DataError);
}

// --- neighbor sampling ------------------------------------------------------

TEST(SampleNeighbors, DegreeOneGivesCopies) {
  KnowledgeGraph kg(2, 1, {{0, 0, 1}}, false);
  Rng rng(1);
  auto s = sample_neighbors(kg, 0, 4, rng);
  ASSERT_EQ(s.neighbors.size(), 4u);
  for (const auto& e : s.neighbors) EXPECT_EQ(e, (Edge{0, 1}));
}

TEST(SampleNeighbors, IsolatedEntityPaddedWithNullSelfLoops) {
  KnowledgeGraph kg(3, 2, {{0, 0, 1}}, false);
  Rng rng(1);
  auto s = sample_neighbors(kg, 2, 3, rng);
  ASSERT_EQ(s.neighbors.size(), 3u);
  for (const auto& e : s.neighbors) EXPECT_EQ(e, (Edge{kg.null_relation(), 2}));
}

TEST(SampleNeighbors, UniformOverDegreeEight) {
  std::vector<Triple> star;
  for (EntityId k = 1; k <= 8; ++k) star.push_back({0, 0, k});
  KnowledgeGraph kg(9, 1, star, false);
  Rng rng(2024);
  constexpr int kDraws = 10000;
  constexpr int kSlots = 8;
  std::vector<std::vector<int>> count(kSlots, std::vector<int>(9, 0));
  for (int d = 0; d < kDraws; ++d) {
    auto s = sample_neighbors(kg, 0, kSlots, rng);
    for (int slot = 0; slot < kSlots; ++slot) ++count[slot][s.neighbors[slot].neighbor];
  }
  const double p = 1.0 / 8.0;
  // pooled over slots: each neighbor within 3 sigma of 1/8
  const double pooled = kDraws * kSlots;
  const double sigma = std::sqrt(pooled * p * (1 - p));
  for (int k = 1; k <= 8; ++k) {
    int total = 0;
    for (int slot = 0; slot < kSlots; ++slot) total += count[slot][k];
    EXPECT_LT(std::abs(total - pooled * p), 3 * sigma) << "neighbor " << k;
  }
  // per slot: chi-square with 7 degrees of freedom, 99.9th percentile 24.32
  for (int slot = 0; slot < kSlots; ++slot) {
    double chi2 = 0;
    for (int k = 1; k <= 8; ++k) chi2 += std::pow(count[slot][k] - kDraws * p, 2) / (kDraws * p);
    EXPECT_LT(chi2, 24.32) << "slot " << slot;
  }
}

TEST(SampleNeighbors, DeterministicForSeed) {
  auto kg = testing::random_kg(40, 3, 100, 9);
  for (EntityId e = 0; e < 40; ++e) {
    Rng a(77);
    Rng b(77);
    auto sa = sample_neighbors(kg, e, 6, a);
    auto sb = sample_neighbors(kg, e, 6, b);
    EXPECT_EQ(sa.neighbors, sb.neighbors);
  }
}

TEST(NeighborCache, SameEntitySameSampleWithinBatch) {
  auto kg = testing::random_kg(40, 3, 100, 9);
  NeighborCache cache(kg, 5, 3);
  auto first = cache.neighbors(7);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(cache.neighbors(7), first);
}

TEST(ReceptiveField, ShapeAndParentLinks) {
  auto kg = testing::random_kg(40, 3, 100, 11);
  NeighborCache cache(kg, 3, 5);
  auto f = sample_receptive_field(cache, 4, 2);
  ASSERT_EQ(f.depth(), 2u);
  EXPECT_EQ(f.entities[0], std::vector<EntityId>{4});
  EXPECT_EQ(f.entities[1].size(), 3u);
  EXPECT_EQ(f.entities[2].size(), 9u);
  for (std::size_t level = 1; level <= 2; ++level)
    for (std::size_t i = 0; i < f.entities[level].size(); ++i) {
      auto parent = f.entities[level - 1][i / 3];
      auto adj = kg.neighbors(parent);
      Edge edge{f.relations[level][i], f.entities[level][i]};
      EXPECT_TRUE(std::binary_search(adj.begin(), adj.end(), edge) ||
                  (adj.empty() && edge == Edge{kg.null_relation(), parent}));
    }
}

// --- ripple sets --------------------------------------------------------------

TEST(RippleSet, ChainUniqueChoice) {
  KnowledgeGraph kg(3, 1, {{0, 0, 1}, {1, 0, 2}}, false);
  Rng rng(4);
  std::vector<EntityId> seeds{0};
  auto r = build_ripple_set(kg, seeds, 2, 1, rng);
  ASSERT_EQ(r.hops.size(), 2u);
  EXPECT_EQ(r.hops[0], std::vector<Triple>{(Triple{0, 0, 1})});
  EXPECT_EQ(r.hops[1], std::vector<Triple>{(Triple{1, 0, 2})});

  auto three = build_ripple_set(kg, seeds, 2, 3, rng);
  EXPECT_EQ(three.hops[0], std::vector<Triple>(3, Triple{0, 0, 1}));
  EXPECT_EQ(three.tails(0), std::vector<EntityId>(3, 1));
}

TEST(RippleSet, StarSpokesUniformPerSlot) {
  std::vector<Triple> star;
  for (EntityId k = 1; k <= 5; ++k) star.push_back({0, 0, k});
  KnowledgeGraph kg(6, 1, star, false);
  Rng rng(99);
  std::vector<EntityId> seeds{0};
  constexpr int kRuns = 10000;
  std::vector<std::vector<int>> count(5, std::vector<int>(6, 0));
  for (int i = 0; i < kRuns; ++i) {
    auto r = build_ripple_set(kg, seeds, 1, 5, rng);
    for (int slot = 0; slot < 5; ++slot) ++count[slot][r.hops[0][slot].tail];
  }
  const double p = 0.2;
  const double sigma = std::sqrt(kRuns * p * (1 - p));
  for (int slot = 0; slot < 5; ++slot)
    for (int k = 1; k <= 5; ++k) EXPECT_LT(std::abs(count[slot][k] - kRuns * p), 3 * sigma);
}

TEST(RippleSet, EmptyFrontierReusesPreviousBag) {
  // directed chain ends at 1, so hop 2 has no candidates
  KnowledgeGraph kg(2, 1, {{0, 0, 1}}, false);
  Rng rng(1);
  std::vector<EntityId> seeds{0};
  auto r = build_ripple_set(kg, seeds, 3, 2, rng);
  EXPECT_EQ(r.hops[1], r.hops[0]);
  EXPECT_EQ(r.hops[2], r.hops[0]);
}

TEST(RippleSet, SeedsWithoutTriplesThrow) {
  KnowledgeGraph kg(3, 1, {{0, 0, 1}}, false);
  Rng rng(1);
  std::vector<EntityId> none{};
  std::vector<EntityId> isolated{2};
  EXPECT_THROW(build_ripple_set(kg, none, 2, 4, rng), DataError);
  EXPECT_THROW(build_ripple_set(kg, isolated, 2, 4, rng), EmptyRippleError);
}

TEST(RippleSetProperty, BagSizesAndFrontierMembership) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto kg = testing::random_kg(30, 3, 40, seed, seed % 2 == 0);
    Rng rng(seed);
    std::vector<EntityId> seeds{static_cast<EntityId>(seed % 30), static_cast<EntityId>((seed * 7) % 30)};
    const std::size_t hops = 1 + seed % 3;
    const std::size_t n_p = 1 + seed % 9;
    auto r = build_ripple_set(kg, seeds, hops, n_p, rng);
    ASSERT_EQ(r.hops.size(), hops);
    std::set<EntityId> frontier(seeds.begin(), seeds.end());
    std::vector<Triple> previous;
    for (std::size_t k = 0; k < hops; ++k) {
      ASSERT_EQ(r.hops[k].size(), n_p);
      bool reused = k > 0 && r.hops[k] == previous;
      for (const auto& t : r.hops[k]) {
        if (!reused) EXPECT_TRUE(frontier.count(t.head)) << "hop " << k;
        auto adj = kg.neighbors(t.head);
        EXPECT_TRUE(std::binary_search(adj.begin(), adj.end(), Edge{t.relation, t.tail}));
      }
      auto tails = r.tails(k);
      EXPECT_EQ(tails.size(), n_p);
      frontier = std::set<EntityId>(tails.begin(), tails.end());
      previous = r.hops[k];
    }
  }
}

TEST(RippleSet, DeterministicForSeed) {
  auto kg = testing::random_kg(30, 3, 40, 5);
  std::vector<EntityId> seeds{1, 2, 3};
  Rng a(8);
  Rng b(8);
  auto ra = build_ripple_set(kg, seeds, 2, 16, a);
  auto rb = build_ripple_set(kg, seeds, 2, 16, b);
  EXPECT_EQ(ra.hops, rb.hops);
}

TEST(Vocabulary, RoundTripAndChecksum) {
  TempDir dir("vocab");
  Vocabulary v;
  v.intern("alpha");
  v.intern("beta");
  v.intern("alpha");
  EXPECT_EQ(v.size(), 2u);
  v.save_tsv(dir / "v.tsv");
  auto back = Vocabulary::load_tsv(dir / "v.tsv");
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back.raw(1), "beta");
  EXPECT_EQ(back.checksum(), v.checksum());
  Vocabulary other;
  other.intern("beta");
  other.intern("alpha");
  EXPECT_NE(other.checksum(), v.checksum());
}

}  // namespace
}  // namespace rkgcn

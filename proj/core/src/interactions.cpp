#include "rkgcn/interactions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "tsv.hpp"

namespace rkgcn {

namespace {

void sort_unique(std::vector<ItemId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Draws `count` items not in `excluded` (sorted). Distinct when possible.
void draw_negatives(UserId user, std::size_t count, const std::vector<ItemId>& excluded, std::size_t num_items,
                    Rng& rng, std::vector<Interaction>& out, NegativeSampleStats& stats) {
  if (count == 0) return;
  std::vector<ItemId> pool;
  pool.reserve(num_items - std::min(num_items, excluded.size()));
  auto ex = excluded.begin();
  for (std::size_t i = 0; i < num_items; ++i) {
    auto item = static_cast<ItemId>(i);
    while (ex != excluded.end() && *ex < item) ++ex;
    if (ex != excluded.end() && *ex == item) continue;
    pool.push_back(item);
  }
  if (pool.empty()) {
    ++stats.empty_pool_users;
    spdlog::warn("user {} has interacted with every item; no negatives drawn", user);
    return;
  }
  if (pool.size() < count) {
    ++stats.short_pool_users;
    spdlog::warn("user {}: only {} unobserved items for {} negatives, drawing with replacement", user,
                 pool.size(), count);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t k = 0; k < count; ++k) out.push_back({user, pool[pick(rng)], 0});
    return;
  }
  // partial Fisher-Yates
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
    out.push_back({user, pool[k], 0});
  }
}

}  // namespace

ItemEntityMap load_item_map(const std::filesystem::path& path, const Vocabulary& entity_vocab) {
  auto in = detail::open_input(path);
  ItemEntityMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 2) throw ParseError(path.string(), line_no, "expected item<TAB>entity");
    ++map.rows;
    auto entity = entity_vocab.find(fields[1]);
    if (!entity) {
      ++map.unknown_entity_rows;
      continue;
    }
    map.entity_of.emplace(std::string(fields[0]), *entity);
  }
  return map;
}

std::size_t BinarizedRatings::num_positives() const {
  std::size_t n = 0;
  for (const auto& p : positives) n += p.size();
  return n;
}

BinarizedRatings binarize(const std::filesystem::path& ratings_file, double threshold,
                          const ItemEntityMap& item_map) {
  auto in = detail::open_input(ratings_file);
  BinarizedRatings out;
  Vocabulary unmapped;
  // users are interned lazily on their first positive, so stash rated-below
  // rows under the raw id until then.
  std::unordered_map<std::string, std::vector<ItemId>> pending_observed;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3 && fields.size() != 4)
      throw ParseError(ratings_file.string(), line_no, "expected user<TAB>item<TAB>rating[<TAB>timestamp]");
    auto rating = detail::parse_number<double>(fields[2]);
    if (!rating || !std::isfinite(*rating))
      throw ParseError(ratings_file.string(), line_no, "non-numeric rating '" + std::string(fields[2]) + "'");
    ++out.rows;

    auto mapped = item_map.entity_of.find(std::string(fields[1]));
    if (mapped == item_map.entity_of.end()) {
      ++out.unmapped_rows;
      unmapped.intern(fields[1]);
      continue;
    }
    auto before = out.items.size();
    auto item = out.items.intern(fields[1]);
    if (out.items.size() != before) out.item_entity.push_back(mapped->second);

    if (*rating < threshold) {
      ++out.below_threshold_rows;
      if (auto u = out.users.find(fields[0]))
        out.observed[static_cast<std::size_t>(*u)].push_back(item);
      else
        pending_observed[std::string(fields[0])].push_back(item);
      continue;
    }
    auto before_users = out.users.size();
    auto user = static_cast<std::size_t>(out.users.intern(fields[0]));
    if (out.users.size() != before_users) {
      out.positives.emplace_back();
      out.observed.emplace_back();
      auto it = pending_observed.find(std::string(fields[0]));
      if (it != pending_observed.end()) {
        out.observed[user] = std::move(it->second);
        pending_observed.erase(it);
      }
    }
    out.positives[user].push_back(item);
    out.observed[user].push_back(item);
  }
  for (auto& p : out.positives) sort_unique(p);
  for (auto& o : out.observed) sort_unique(o);
  out.unmapped_items = unmapped.size();
  if (out.unmapped_rows > 0)
    spdlog::info("binarize: dropped {} rows ({} distinct items) without a KG entity", out.unmapped_rows,
                 out.unmapped_items);
  return out;
}

std::vector<Interaction> negative_sample(const UserItems& positives, std::size_t num_items, Rng& rng,
                                         const UserItems* observed, NegativeSampleStats* stats) {
  NegativeSampleStats local;
  std::vector<Interaction> out;
  std::vector<ItemId> excluded;
  for (std::size_t u = 0; u < positives.size(); ++u) {
    excluded = positives[u];
    if (observed) excluded.insert(excluded.end(), (*observed)[u].begin(), (*observed)[u].end());
    sort_unique(excluded);
    draw_negatives(static_cast<UserId>(u), positives[u].size(), excluded, num_items, rng, out, local);
  }
  if (stats) *stats = local;
  return out;
}

UserItems train_history(const std::vector<Interaction>& train, std::size_t num_users) {
  UserItems history(num_users);
  for (const auto& x : train)
    if (x.label == 1) history.at(static_cast<std::size_t>(x.user)).push_back(x.item);
  for (auto& h : history) sort_unique(h);
  return history;
}

InteractionDataset split(std::vector<Interaction> interactions, SplitRatios ratios, std::uint64_t seed) {
  if (interactions.empty()) throw DataError("cannot split an empty interaction list");
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw DataError("split ratios must be non-negative and sum to 1");

  Rng rng(seed);
  std::shuffle(interactions.begin(), interactions.end(), rng);

  auto n = interactions.size();
  auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.validation + 1e-9));
  auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test + 1e-9));
  auto n_train = n - n_val - n_test;

  InteractionDataset ds;
  auto first = interactions.begin();
  ds.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  ds.validation.assign(first + static_cast<std::ptrdiff_t>(n_train),
                       first + static_cast<std::ptrdiff_t>(n_train + n_val));
  ds.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val), interactions.end());

  for (const auto& x : interactions) {
    ds.num_users = std::max(ds.num_users, static_cast<std::size_t>(x.user) + 1);
    ds.num_items = std::max(ds.num_items, static_cast<std::size_t>(x.item) + 1);
  }
  ds.user_history = train_history(ds.train, ds.num_users);
  return ds;
}

InteractionDataset prepare_dataset(const BinarizedRatings& ratings, SplitRatios ratios, std::uint64_t seed,
                                   PrepStats* stats) {
  std::vector<Interaction> positives;
  positives.reserve(ratings.num_positives());
  for (std::size_t u = 0; u < ratings.positives.size(); ++u)
    for (auto item : ratings.positives[u]) positives.push_back({static_cast<UserId>(u), item, 1});
  if (positives.empty()) throw DataError("no positive interactions after binarization");

  auto ds = split(std::move(positives), ratios, mix_seed(seed, 1));
  ds.num_users = ratings.users.size();
  ds.num_items = ratings.items.size();
  ds.item_entity = ratings.item_entity;

  // per user and split, how many negatives are owed
  std::vector<std::array<std::size_t, 3>> owed(ds.num_users, {0, 0, 0});
  std::array<std::vector<Interaction>*, 3> splits{&ds.train, &ds.validation, &ds.test};
  for (std::size_t s = 0; s < 3; ++s)
    for (const auto& x : *splits[s]) ++owed[static_cast<std::size_t>(x.user)][s];

  PrepStats local;
  Rng rng(mix_seed(seed, 2));
  std::vector<Interaction> drawn;
  for (std::size_t u = 0; u < ds.num_users; ++u) {
    auto total = owed[u][0] + owed[u][1] + owed[u][2];
    drawn.clear();
    draw_negatives(static_cast<UserId>(u), total, ratings.observed[u], ds.num_items, rng, drawn, local.negatives);
    std::size_t k = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t j = 0; j < owed[u][s] && k < drawn.size(); ++j) splits[s]->push_back(drawn[k++]);
  }

  Rng order(mix_seed(seed, 3));
  for (auto* s : splits) std::shuffle(s->begin(), s->end(), order);

  ds.user_history = train_history(ds.train, ds.num_users);
  for (const auto& h : ds.user_history)
    if (h.empty()) ++local.users_without_train_history;
  if (stats) *stats = local;
  return ds;
}

void save_split(const std::vector<Interaction>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& x : rows) out << x.user << '\t' << x.item << '\t' << x.label << '\n';
}

std::vector<Interaction> load_split(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<Interaction> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3) throw ParseError(path.string(), line_no, "expected user<TAB>item<TAB>label");
    auto u = detail::parse_number<UserId>(fields[0]);
    auto i = detail::parse_number<ItemId>(fields[1]);
    auto l = detail::parse_number<int>(fields[2]);
    if (!u || !i || !l || (*l != 0 && *l != 1)) throw ParseError(path.string(), line_no, "bad interaction row");
    rows.push_back({*u, *i, *l});
  }
  return rows;
}

}  // namespace rkgcn

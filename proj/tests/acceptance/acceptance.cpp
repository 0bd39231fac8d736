// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
//   rkgcn_acceptance            run everything
//   rkgcn_acceptance NAME...    run the named criteria only
//
// Exit status is 1 when any selected criterion fails, 77 when every selected
// criterion was skipped.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <spdlog/spdlog.h>

#include "rkgcn/experiment.hpp"
#include "rkgcn/interactions.hpp"
#include "rkgcn/kg_store.hpp"
#include "rkgcn/metrics.hpp"
#include "rkgcn/model.hpp"
#include "rkgcn/numeric.hpp"
#include "rkgcn/synthetic.hpp"
#include "rkgcn/trainer.hpp"

namespace fs = std::filesystem;
using namespace rkgcn;

namespace {

// Tolerances and budgets, pinned here.
constexpr double kGradientMaxRelError = 1e-4;
constexpr double kGradientBudgetSec = 60;
constexpr int kAucInstances = 200;
constexpr std::size_t kAucMaxN = 500;
constexpr double kAucBudgetSec = 10;
constexpr double kOverfitTrainAuc = 0.99;
constexpr std::size_t kOverfitMaxEpochs = 200;
constexpr double kOverfitBudgetSec = 120;
constexpr double kGeneralizationMinAuc = 0.85;
constexpr double kControlBand = 0.05;
constexpr double kGeneralizationBudgetSec = 300;
constexpr double kAblationSlack = 0.01;
constexpr std::size_t kAblationSeeds = 5;
constexpr double kSamplingBudgetSec = 30;
constexpr double kSoftmaxNormTol = 1e-12;
constexpr double kSoftmaxShiftTol = 1e-9;
constexpr double kPublishedAuc = 0.926;
constexpr double kPublishedAcc = 0.851;
constexpr double kPublishedBand = 0.03;
constexpr int kAllSkipped = 77;

struct Outcome {
  enum Status { pass, fail, skip } status = fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("rkgcn_acceptance_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct Loaded {
  KnowledgeGraph kg;
  InteractionDataset dataset;
};

/// Generator output pushed through the same file-based pipeline as `prep`.
Loaded load_synthetic(const SyntheticConfig& config, const fs::path& dir, std::uint64_t split_seed) {
  write_synthetic(generate_synthetic(config), dir);
  auto kg = load_kg(dir / "kg.tsv", true);
  auto map = load_item_map(dir / "item_map.tsv", kg.entity_vocab());
  auto ratings = binarize(dir / "ratings.tsv", 4.0, map);
  auto ds = prepare_dataset(ratings, {}, split_seed);
  return {std::move(kg), std::move(ds)};
}

/// Reassigns labels by a seeded permutation over all splits together.
InteractionDataset shuffle_labels(InteractionDataset ds, std::uint64_t seed) {
  std::vector<int*> slots;
  for (auto* rows : {&ds.train, &ds.validation, &ds.test})
    for (auto& x : *rows) slots.push_back(&x.label);
  std::vector<int> labels;
  for (auto* l : slots) labels.push_back(*l);
  Rng rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = labels[i];
  ds.user_history = train_history(ds.train, ds.num_users);
  return ds;
}

// Hyperparameters used on the generalization fixture.
Hyperparams fixture_hp() {
  Hyperparams hp;
  hp.dim = 8;
  hp.hops = 2;
  hp.n_p = 16;
  hp.n_e = 8;
  hp.layers = 1;
  hp.l2 = 1e-7;
  hp.lr = 1e-2;
  hp.batch_size = 256;
  hp.epochs = 20;
  hp.patience = 5;
  return hp;
}

MetricReport train_and_test(const Loaded& data, const InteractionDataset& ds, const Hyperparams& hp,
                            const ModelOptions& options, std::uint64_t seed) {
  auto fit_result = fit<float>(ds, data.kg, hp, options, seed);
  if (fit_result.diverged) throw DivergenceError(fit_result.divergence);
  return evaluate<float>(fit_result.params, ds.test, ds, data.kg, fit_result.ripples, hp, options, seed, "test");
}

// --- criteria -----------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  Rng graph_rng(5);
  std::vector<Triple> triples;
  std::uniform_int_distribution<EntityId> pick_e(0, 29);
  std::uniform_int_distribution<RelationId> pick_r(0, 3);
  for (EntityId e = 0; e < 30; ++e) triples.push_back({e, pick_r(graph_rng), pick_e(graph_rng)});
  for (int k = 0; k < 50; ++k) triples.push_back({pick_e(graph_rng), pick_r(graph_rng), pick_e(graph_rng)});
  KnowledgeGraph kg(30, 4, triples, true);

  InteractionDataset ds;
  ds.num_users = 4;
  ds.num_items = 12;
  for (EntityId i = 0; i < 12; ++i) ds.item_entity.push_back(i);
  std::uniform_int_distribution<ItemId> pick_i(0, 11);
  for (UserId u = 0; u < 4; ++u)
    for (int k = 0; k < 2; ++k) ds.train.push_back({u, pick_i(graph_rng), k});
  ds.user_history = train_history(ds.train, ds.num_users);

  struct Case {
    const char* name;
    std::size_t layers;
    ModelOptions options;
  };
  ModelOptions recursive;
  recursive.fusion = Fusion::recursive;
  ModelOptions table;
  table.user_path = UserPath::table;
  std::vector<Case> cases{{"default", 1, {}}, {"two-layer", 2, {}}, {"recursive", 1, recursive}, {"table", 1, table}};

  std::map<std::string, double> worst;
  for (const auto& c : cases) {
    Hyperparams hp;
    hp.dim = 4;
    hp.n_p = 6;
    hp.n_e = 3;
    hp.layers = c.layers;
    hp.l2 = 1e-2;
    auto ripples = build_ripple_table(kg, ds, hp, 7);
    auto batch = assemble_batch(ds.train, ds, kg, ripples, hp, 9);
    if (batch.inputs.size() != 8) return verdict(false, "batch is not 8 examples");
    ModelParams<double> params({kg.num_entities(), kg.num_relations(), ds.num_users}, hp, c.options);
    Rng rng(11);
    params.init(rng);
    params.store().zero_grad();
    forward_backward<double>(params, batch.inputs, hp.l2, c.options);
    auto report = finite_diff_check(
        [&] { return batch_loss<double>(params, batch.inputs, hp.l2, c.options).loss; }, params.store());
    for (const auto& t : report.per_tensor)
      if (t.coordinates > 0) worst[t.name] = std::max(worst[t.name], t.max_rel_error);
  }
  const std::vector<std::string> groups{tensor_names::kEntity,     tensor_names::kRelationMatrix,
                                        tensor_names::kRelationVector, tensor_names::kUserFusion,
                                        tensor_names::kItemAggW,   tensor_names::kItemAggB};
  bool ok = true;
  std::string detail;
  double max_err = 0;
  for (const auto& g : groups) {
    if (!worst.count(g)) {
      ok = false;
      detail += g + " unchecked; ";
      continue;
    }
    max_err = std::max(max_err, worst[g]);
    ok = ok && worst[g] < kGradientMaxRelError;
  }
  const double secs = elapsed(start);
  ok = ok && secs < kGradientBudgetSec;
  return verdict(ok, detail + "max rel err " + fmt(max_err, 9) + " over " + std::to_string(groups.size()) +
                         " groups, " + fmt(secs, 1) + "s");
}

Outcome auc_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < kAucInstances; ++trial) {
    std::size_t n = 2 + rng() % (kAucMaxN - 1);
    std::uniform_int_distribution<int> levels(0, 1 + static_cast<int>(rng() % 40));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = levels(rng) * 0.025;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    double correct = 0;
    double pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] != 1) continue;
      ++pos;
      for (std::size_t j = 0; j < n; ++j)
        if (y[j] == 0) correct += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
    const double oracle = correct / (pos * (static_cast<double>(n) - pos));
    if (auc(s, y) != oracle) ++mismatches;
  }
  const double secs = elapsed(start);
  return verdict(mismatches == 0 && secs < kAucBudgetSec,
                 std::to_string(kAucInstances - mismatches) + "/" + std::to_string(kAucInstances) +
                     " exact matches, " + fmt(secs, 2) + "s");
}

Outcome overfit_capacity() {
  const auto start = std::chrono::steady_clock::now();
  ScratchDir dir("overfit");
  SyntheticConfig config;
  config.users = 50;
  config.items = 100;
  config.relations = 5;
  config.values_per_relation = 4;
  config.interact_fraction = 0.6;
  config.seed = 3;
  auto data = load_synthetic(config, dir.path(), 1);
  if (data.kg.triples().size() != 500) return verdict(false, "fixture has " + std::to_string(data.kg.triples().size()) + " triples");

  Hyperparams hp;
  hp.dim = 8;
  hp.hops = 2;
  hp.n_p = 32;
  hp.n_e = 4;
  hp.l2 = 0;
  hp.lr = 1e-2;
  hp.batch_size = 64;
  hp.epochs = kOverfitMaxEpochs;
  hp.patience = 0;
  double train_auc = 0;
  std::size_t reached = 0;
  // fit draws its ripple sets from the same stream, so train AUC is scored on the sets it trains with
  const auto ripples = build_ripple_table(data.kg, data.dataset, hp, ripple_seed(17));
  FitHooks<float> hooks;
  hooks.on_epoch = [&](const EpochLog& log, const ModelParams<float>& params) {
    auto report = evaluate<float>(params, data.dataset.train, data.dataset, data.kg, ripples, hp, {}, 17, "train");
    train_auc = report.auc;
    if (train_auc >= kOverfitTrainAuc) {
      reached = log.epoch;
      return false;
    }
    return true;
  };
  fit<float>(data.dataset, data.kg, hp, {}, 17, hooks);
  const double secs = elapsed(start);
  return verdict(reached > 0 && secs < kOverfitBudgetSec,
                 "train AUC " + fmt(train_auc) + (reached ? " at epoch " + std::to_string(reached) : " after " +
                 std::to_string(kOverfitMaxEpochs) + " epochs") + ", " + fmt(secs, 1) + "s");
}

Outcome synthetic_generalization() {
  const auto start = std::chrono::steady_clock::now();
  ScratchDir dir("general");
  auto data = load_synthetic(SyntheticConfig{}, dir.path(), 2024);
  const auto hp = fixture_hp();
  auto real = train_and_test(data, data.dataset, hp, {}, 2024);
  std::vector<double> controls;
  for (std::uint64_t s : {101u, 202u}) {
    auto shuffled = shuffle_labels(data.dataset, s);
    controls.push_back(train_and_test(data, shuffled, hp, {}, 2024).auc);
  }
  const double secs = elapsed(start);
  bool ok = real.auc >= kGeneralizationMinAuc && secs < kGeneralizationBudgetSec;
  std::string detail = "test AUC " + fmt(real.auc) + " (ACC " + fmt(real.acc) + "), shuffled controls";
  for (double c : controls) {
    ok = ok && std::abs(c - 0.5) <= kControlBand;
    detail += " " + fmt(c);
  }
  return verdict(ok, detail + ", " + fmt(secs, 1) + "s");
}

Outcome ablation_ordering() {
  const auto start = std::chrono::steady_clock::now();
  ScratchDir dir("ablation");
  auto data = load_synthetic(SyntheticConfig{}, dir.path(), 2024);
  const auto base = fixture_hp();
  auto no_item = base;
  no_item.layers = 0;
  ModelOptions table;
  table.user_path = UserPath::table;

  double full = 0;
  double ripple_only = 0;
  double kgcn_like = 0;
  for (auto seed : derived_seeds(2024, kAblationSeeds)) {
    full += train_and_test(data, data.dataset, base, {}, seed).auc;
    ripple_only += train_and_test(data, data.dataset, no_item, {}, seed).auc;
    kgcn_like += train_and_test(data, data.dataset, base, table, seed).auc;
  }
  const double n = static_cast<double>(kAblationSeeds);
  full /= n;
  ripple_only /= n;
  kgcn_like /= n;
  const bool ok = full >= ripple_only - kAblationSlack && full >= kgcn_like - kAblationSlack;
  return verdict(ok, "mean test AUC full " + fmt(full) + ", no item enhancement " + fmt(ripple_only) +
                         ", user table " + fmt(kgcn_like) + " (" + std::to_string(kAblationSeeds) + " seeds, " +
                         fmt(elapsed(start), 1) + "s)");
}

Outcome sampling_invariants() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t checked = 0;
  std::string problem;
  auto fail = [&](const std::string& what) {
    if (problem.empty()) problem = what;
  };
  for (std::uint64_t seed = 0; seed < 300 && problem.empty(); ++seed) {
    Rng g(seed);
    const std::size_t entities = 5 + g() % 60;
    const std::size_t relations = 1 + g() % 5;
    std::vector<Triple> triples;
    for (std::size_t k = 0; k < entities * 2; ++k)
      triples.push_back({static_cast<EntityId>(g() % entities), static_cast<RelationId>(g() % relations),
                         static_cast<EntityId>(g() % entities)});
    KnowledgeGraph kg(entities, relations, triples, seed % 2 == 0);
    const std::size_t hops = 1 + seed % 4;
    const std::size_t n_p = 1 + g() % 40;
    const std::size_t n_e = 1 + g() % 10;
    std::vector<EntityId> seeds{triples[0].head, triples[g() % triples.size()].head};

    auto build = [&](std::uint64_t s) {
      Rng r(s);
      return build_ripple_set(kg, seeds, hops, n_p, r);
    };
    auto ripple = build(seed * 31 + 1);
    if (ripple.hops != build(seed * 31 + 1).hops) fail("ripple set not deterministic");
    std::set<EntityId> frontier(seeds.begin(), seeds.end());
    for (std::size_t k = 0; k < hops; ++k) {
      if (ripple.hops[k].size() != n_p) fail("hop bag size differs from N_p");
      const bool reused = k > 0 && ripple.hops[k] == ripple.hops[k - 1];
      for (const auto& t : ripple.hops[k])
        if (!reused && !frontier.count(t.head)) fail("hop head outside previous tails");
      auto tails = ripple.tails(k);
      frontier = std::set<EntityId>(tails.begin(), tails.end());
    }
    for (EntityId e = 0; e < static_cast<EntityId>(entities); ++e) {
      Rng a(seed + 7);
      Rng b(seed + 7);
      auto sa = sample_neighbors(kg, e, n_e, a);
      auto sb = sample_neighbors(kg, e, n_e, b);
      if (sa.neighbors.size() != n_e) fail("neighbor sample size differs from N_e");
      if (sa.neighbors != sb.neighbors) fail("neighbor sample not deterministic");
    }
    ++checked;
  }
  const double secs = elapsed(start);
  return verdict(problem.empty() && secs < kSamplingBudgetSec,
                 (problem.empty() ? std::to_string(checked) + " random graphs" : problem) + ", " + fmt(secs, 2) + "s");
}

Outcome softmax_sigmoid() {
  Rng rng(9);
  std::normal_distribution<double> dist(0.0, 50.0);
  double norm_err = 0;
  double shift_err = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(1 + trial % 64);
    for (auto& v : x) v = dist(rng);
    auto p = softmax(x);
    norm_err = std::max(norm_err, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
    for (auto& v : x) v += 500.0;
    auto q = softmax(x);
    for (std::size_t i = 0; i < p.size(); ++i) shift_err = std::max(shift_err, std::abs(p[i] - q[i]));
  }
  auto big = softmax(std::vector<double>{1000.0, -1000.0, 0.0});
  bool finite = std::isfinite(big[0]) && std::isfinite(big[1]) && std::abs(big[0] - 1.0) < 1e-12;
  double sym_err = 0;
  for (double x : {-1000.0, -1.0, 0.0, 2.0, 1000.0}) {
    finite = finite && std::isfinite(sigmoid(x)) && std::isfinite(sigmoid(static_cast<float>(x)));
    sym_err = std::max(sym_err, std::abs(sigmoid(x) + sigmoid(-x) - 1.0));
  }
  const bool ok = norm_err <= kSoftmaxNormTol && shift_err <= kSoftmaxShiftTol && finite && sym_err <= 1e-12;
  return verdict(ok, "normalization err " + fmt(norm_err, 16) + ", shift err " + fmt(shift_err, 16) +
                         ", sigmoid symmetry err " + fmt(sym_err, 16) + (finite ? "" : ", overflow"));
}

Outcome ml1m_reproduction() {
  const char* env = std::getenv("RKGCN_ML1M_DIR");
  if (!env) return {Outcome::skip, "set RKGCN_ML1M_DIR to a directory holding ratings.tsv, kg.tsv, item_map.tsv"};
  const auto start = std::chrono::steady_clock::now();
  ScratchDir dir("ml1m");
  RunConfig config;
  config.ratings = fs::path(env) / "ratings.tsv";
  config.kg = fs::path(env) / "kg.tsv";
  config.item_map = fs::path(env) / "item_map.tsv";
  config.out = dir.path() / "prep";
  if (cmd_prep(config) != kExitOk) return verdict(false, "prep failed");
  auto prep = load_prepared(config.out, true);
  Hyperparams hp;  // defaults are the published MovieLens-1M settings
  double auc_sum = 0;
  double acc_sum = 0;
  for (auto seed : derived_seeds(config.seed, 5)) {
    Loaded view{prep.kg, prep.dataset};
    auto r = train_and_test(view, prep.dataset, hp, {}, seed);
    auc_sum += r.auc;
    acc_sum += r.acc;
  }
  const double a = auc_sum / 5;
  const double c = acc_sum / 5;
  return verdict(std::abs(a - kPublishedAuc) <= kPublishedBand && std::abs(c - kPublishedAcc) <= kPublishedBand,
                 "mean test AUC " + fmt(a) + " (target " + fmt(kPublishedAuc, 3) + "), ACC " + fmt(c) + " (target " +
                     fmt(kPublishedAcc, 3) + "), " + fmt(elapsed(start), 0) + "s");
}

Outcome sweep_structure() {
  const auto start = std::chrono::steady_clock::now();
  ScratchDir dir("sweep");
  SyntheticConfig small;
  small.users = 200;
  small.items = 200;
  write_synthetic(generate_synthetic(small), dir.path() / "raw");
  RunConfig prep;
  prep.ratings = dir.path() / "raw" / "ratings.tsv";
  prep.kg = dir.path() / "raw" / "kg.tsv";
  prep.item_map = dir.path() / "raw" / "item_map.tsv";
  prep.out = dir.path() / "prep";
  if (cmd_prep(prep) != kExitOk) return verdict(false, "prep failed");

  RunConfig sweep;
  sweep.data_dir = prep.out;
  sweep.out = dir.path() / "sweep";
  sweep.hp = fixture_hp();
  sweep.hp.epochs = 3;
  sweep.sweep_param = "n_p";
  sweep.sweep_values = {"8", "16", "32", "64"};
  if (cmd_sweep(sweep) != kExitOk) return verdict(false, "sweep failed");

  std::ifstream runs(sweep.out / "sweep_runs.csv");
  std::string line;
  std::getline(runs, line);
  std::size_t rows = 0;
  std::size_t na = 0;
  while (std::getline(runs, line)) {
    ++rows;
    if (line.find("NA") != std::string::npos) ++na;
  }
  std::ifstream table(sweep.out / "sweep_table.csv");
  std::vector<std::string> lines;
  while (std::getline(table, line)) lines.push_back(line);
  bool shape = lines.size() == 3 && lines[0] == "metric,8,16,32,64" && lines[1].rfind("auc,", 0) == 0 &&
               lines[2].rfind("acc,", 0) == 0;
  for (std::size_t i = 1; shape && i < lines.size(); ++i)
    shape = std::count(lines[i].begin(), lines[i].end(), ',') == 4 && lines[i].find("NA") == std::string::npos;
  const bool manifest = fs::exists(sweep.out / "sweep_manifest.txt");
  return verdict(rows == 20 && na == 0 && shape && manifest,
                 std::to_string(rows) + " run rows, " + std::to_string(na) + " with NA, aggregate table " +
                     (shape ? "4 cells per metric" : "malformed") + ", " + fmt(elapsed(start), 1) + "s");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient", gradient_correctness},
      {"auc-oracle", auc_oracle},
      {"overfit", overfit_capacity},
      {"generalization", synthetic_generalization},
      {"ablation", ablation_ordering},
      {"sampling", sampling_invariants},
      {"softmax-sigmoid", softmax_sigmoid},
      {"ml1m", ml1m_reproduction},
      {"sweep", sweep_structure},
  };
  std::set<std::string> selected(argv + 1, argv + argc);
  for (const auto& name : selected) {
    bool known = false;
    for (const auto& c : criteria) known = known || c.first == name;
    if (!known) {
      std::fprintf(stderr, "unknown criterion '%s'\n", name.c_str());
      return 2;
    }
  }
  int failures = 0;
  int ran = 0;
  for (const auto& [name, run] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = out.status == Outcome::pass ? "PASS" : out.status == Outcome::skip ? "SKIP" : "FAIL";
    if (out.status == Outcome::fail) ++failures;
    if (out.status != Outcome::skip) ++ran;
    std::printf("%s %-16s %s\n", tag, name.c_str(), out.detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) return 1;
  return ran == 0 ? kAllSkipped : 0;
}

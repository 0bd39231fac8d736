#include "rkgcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <variant>

#include <spdlog/spdlog.h>

namespace rkgcn {

namespace {
constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kRippleStream = 12;
constexpr std::uint64_t kShuffleStream = 13;
constexpr std::uint64_t kTrainNeighborStream = 14;
}  // namespace

std::uint64_t ripple_seed(std::uint64_t run_seed) { return mix_seed(run_seed, kRippleStream); }

RippleTable build_ripple_table(const KnowledgeGraph& kg, const InteractionDataset& dataset, const Hyperparams& hp,
                               std::uint64_t seed) {
  RippleTable table(dataset.num_users);
  Rng rng(seed);
  std::vector<EntityId> seeds;
  std::size_t unbuildable = 0;
  for (std::size_t u = 0; u < dataset.num_users && u < dataset.user_history.size(); ++u) {
    const auto& history = dataset.user_history[u];
    if (history.empty()) continue;
    seeds.clear();
    for (auto item : history) seeds.push_back(dataset.item_entity.at(static_cast<std::size_t>(item)));
    try {
      table[u] = build_ripple_set(kg, seeds, hp.hops, hp.n_p, rng, static_cast<UserId>(u));
    } catch (const EmptyRippleError&) {
      ++unbuildable;
    }
  }
  if (unbuildable > 0) spdlog::warn("{} users have history but no outgoing KG triples; they are skipped", unbuildable);
  return table;
}

BatchInputs assemble_batch(std::span<const Interaction> rows, const InteractionDataset& dataset,
                           const KnowledgeGraph& kg, const RippleTable& ripples, const Hyperparams& hp,
                           std::uint64_t neighbor_seed) {
  BatchInputs batch;
  NeighborCache cache(kg, hp.n_e, neighbor_seed);
  batch.source.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto u = static_cast<std::size_t>(rows[i].user);
    if (u >= ripples.size() || !ripples[u]) {
      ++batch.skipped;
      continue;
    }
    batch.source.push_back(i);
  }
  if (hp.layers > 0) {
    batch.fields.reserve(batch.source.size());
    for (auto i : batch.source) {
      auto entity = dataset.item_entity.at(static_cast<std::size_t>(rows[i].item));
      batch.fields.push_back(sample_receptive_field(cache, entity, hp.layers));
    }
  }
  batch.inputs.reserve(batch.source.size());
  for (std::size_t k = 0; k < batch.source.size(); ++k) {
    const auto& row = rows[batch.source[k]];
    LabeledInput in;
    in.input.user = row.user;
    in.input.item_entity = dataset.item_entity.at(static_cast<std::size_t>(row.item));
    in.input.ripple = &*ripples[static_cast<std::size_t>(row.user)];
    in.input.field = hp.layers > 0 ? &batch.fields[k] : nullptr;
    in.label = row.label;
    batch.inputs.push_back(in);
  }
  return batch;
}

template <typename Real>
ScoredSplit score_split(const ModelParams<Real>& params, const std::vector<Interaction>& rows,
                        const InteractionDataset& dataset, const KnowledgeGraph& kg, const RippleTable& ripples,
                        const Hyperparams& hp, const ModelOptions& options, std::uint64_t seed) {
  ScoredSplit out;
  out.scores.reserve(rows.size());
  out.labels.reserve(rows.size());
  ForwardTrace<Real> trace;
  std::span<const Interaction> all(rows);
  for (std::size_t start = 0, b = 0; start < rows.size(); start += hp.batch_size, ++b) {
    auto slice = all.subspan(start, std::min(hp.batch_size, rows.size() - start));
    auto batch = assemble_batch(slice, dataset, kg, ripples, hp, mix_seed(seed, 0xE7A1, b));
    out.skipped += batch.skipped;
    for (const auto& ex : batch.inputs) {
      out.scores.push_back(static_cast<double>(forward<Real>(params, ex.input, options, trace)));
      out.labels.push_back(ex.label);
    }
  }
  return out;
}

template <typename Real>
MetricReport evaluate(const ModelParams<Real>& params, const std::vector<Interaction>& rows,
                      const InteractionDataset& dataset, const KnowledgeGraph& kg, const RippleTable& ripples,
                      const Hyperparams& hp, const ModelOptions& options, std::uint64_t seed,
                      const std::string& split_name) {
  auto scored = score_split<Real>(params, rows, dataset, kg, ripples, hp, options, seed);
  MetricReport report;
  report.split = split_name;
  report.n_examples = scored.scores.size();
  report.skipped = scored.skipped;
  report.seed = seed;
  const bool both = std::find(scored.labels.begin(), scored.labels.end(), 0) != scored.labels.end() &&
                    std::find(scored.labels.begin(), scored.labels.end(), 1) != scored.labels.end();
  report.auc = both ? auc(scored.scores, scored.labels) : std::numeric_limits<double>::quiet_NaN();
  report.acc = scored.scores.empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : acc(scored.scores, scored.labels, hp.threshold);
  return report;
}

template <typename Real>
FitResult<Real> fit(const InteractionDataset& dataset, const KnowledgeGraph& kg, const Hyperparams& hp,
                    const ModelOptions& options, std::uint64_t seed, const FitHooks<Real>& hooks) {
  hp.validate();
  ModelShape shape{kg.num_entities(), kg.num_relations(), dataset.num_users};
  ModelParams<Real> params(shape, hp, options);
  Rng init_rng(mix_seed(seed, kInitStream));
  params.init(init_rng);

  FitResult<Real> result{params, {}, 0, -std::numeric_limits<double>::infinity(), false, {}, {}};
  result.ripples = build_ripple_table(kg, dataset, hp, ripple_seed(seed));

  std::variant<Adam<Real>, Sgd<Real>> optimizer = Adam<Real>(AdamOptions{hp.lr});
  if (options.optimizer == OptimizerKind::sgd) optimizer = Sgd<Real>(hp.lr);

  std::vector<Interaction> order = dataset.train;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    if (options.resample_ripple && epoch > 1)
      result.ripples = build_ripple_table(kg, dataset, hp, mix_seed(seed, kRippleStream, epoch));
    Rng shuffle_rng(mix_seed(seed, kShuffleStream, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t batches = 0;
    std::span<const Interaction> all(order);
    try {
      for (std::size_t start = 0, b = 0; start < order.size(); start += hp.batch_size, ++b) {
        auto slice = all.subspan(start, std::min(hp.batch_size, order.size() - start));
        auto batch = assemble_batch(slice, dataset, kg, result.ripples, hp,
                                    mix_seed(seed, kTrainNeighborStream, epoch * 1000003ULL + b));
        if (batch.inputs.empty()) continue;
        params.store().zero_grad();
        auto loss = forward_backward<Real>(params, batch.inputs, hp.l2, options);
        std::visit([&](auto& opt) { opt.step(params.store()); }, optimizer);
        loss_sum += loss.loss;
        ++batches;
      }
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      spdlog::error("training diverged: {}", result.divergence);
      break;
    }

    auto val = evaluate<Real>(params, dataset.validation, dataset, kg, result.ripples, hp, options, seed, "validation");
    EpochLog entry{epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0, val.auc, val.acc};
    result.log.push_back(entry);
    spdlog::debug("epoch {} loss {:.5f} val auc {:.4f} acc {:.4f}", epoch, entry.train_loss, val.auc, val.acc);

    // a NaN validation AUC (single-class split) counts as an improvement
    if (std::isnan(val.auc) || std::isnan(result.best_val_auc) || val.auc > result.best_val_auc) {
      result.best_val_auc = val.auc;
      result.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else {
      ++stale;
    }
    if (hooks.on_epoch && !hooks.on_epoch(entry, params)) break;
    if (hp.patience > 0 && stale >= hp.patience) break;
  }
  if (result.best_epoch == 0) result.best_val_auc = std::numeric_limits<double>::quiet_NaN();
  return result;
}

#define RKGCN_INSTANTIATE(Real)                                                                                  \
  template ScoredSplit score_split<Real>(const ModelParams<Real>&, const std::vector<Interaction>&,             \
                                         const InteractionDataset&, const KnowledgeGraph&, const RippleTable&,  \
                                         const Hyperparams&, const ModelOptions&, std::uint64_t);               \
  template MetricReport evaluate<Real>(const ModelParams<Real>&, const std::vector<Interaction>&,               \
                                       const InteractionDataset&, const KnowledgeGraph&, const RippleTable&,    \
                                       const Hyperparams&, const ModelOptions&, std::uint64_t,                  \
                                       const std::string&);                                                     \
  template FitResult<Real> fit<Real>(const InteractionDataset&, const KnowledgeGraph&, const Hyperparams&,      \
                                     const ModelOptions&, std::uint64_t, const FitHooks<Real>&);

RKGCN_INSTANTIATE(float)
RKGCN_INSTANTIATE(double)

#undef RKGCN_INSTANTIATE

}  // namespace rkgcn

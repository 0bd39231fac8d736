#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rkgcn/interactions.hpp"
#include "rkgcn/kg_store.hpp"
#include "rkgcn/metrics.hpp"
#include "rkgcn/model.hpp"

namespace rkgcn {

/// Ripple set per user; empty for users without train history.
using RippleTable = std::vector<std::optional<RippleSet>>;

/// Seeds are the KG entities of each user's train positives.
RippleTable build_ripple_table(const KnowledgeGraph& kg, const InteractionDataset& dataset, const Hyperparams& hp,
                               std::uint64_t seed);

/// Ripple-table seed `fit` derives from its run seed (first epoch).
std::uint64_t ripple_seed(std::uint64_t run_seed);

/// Model inputs for a slice of interactions. Receptive fields are owned here
/// and referenced by `inputs`, so the object must outlive the batch pass.
struct BatchInputs {
  std::vector<ReceptiveField> fields;
  std::vector<LabeledInput> inputs;
  std::vector<std::size_t> source;  // index into the interaction slice
  std::size_t skipped = 0;
};

BatchInputs assemble_batch(std::span<const Interaction> rows, const InteractionDataset& dataset,
                           const KnowledgeGraph& kg, const RippleTable& ripples, const Hyperparams& hp,
                           std::uint64_t neighbor_seed);

struct ScoredSplit {
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t skipped = 0;
};

template <typename Real>
ScoredSplit score_split(const ModelParams<Real>& params, const std::vector<Interaction>& rows,
                        const InteractionDataset& dataset, const KnowledgeGraph& kg, const RippleTable& ripples,
                        const Hyperparams& hp, const ModelOptions& options, std::uint64_t seed);

/// Scores every evaluable example of a split and reports AUC and ACC.
/// AUC is NaN when the evaluable examples hold a single class.
template <typename Real>
MetricReport evaluate(const ModelParams<Real>& params, const std::vector<Interaction>& rows,
                      const InteractionDataset& dataset, const KnowledgeGraph& kg, const RippleTable& ripples,
                      const Hyperparams& hp, const ModelOptions& options, std::uint64_t seed,
                      const std::string& split_name);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_auc = 0;
  double val_acc = 0;
};

template <typename Real>
struct FitHooks {
  /// Called after each epoch; returning false stops training.
  std::function<bool(const EpochLog&, const ModelParams<Real>&)> on_epoch;
};

template <typename Real>
struct FitResult {
  ModelParams<Real> params;  // best-validation snapshot
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0: initialization
  double best_val_auc = 0;
  bool diverged = false;
  std::string divergence;
  RippleTable ripples;
};

template <typename Real>
FitResult<Real> fit(const InteractionDataset& dataset, const KnowledgeGraph& kg, const Hyperparams& hp,
                    const ModelOptions& options, std::uint64_t seed, const FitHooks<Real>& hooks = {});

}  // namespace rkgcn

// Forward and forward+backward cost of one training batch.

#include <benchmark/benchmark.h>

#include "rkgcn/synthetic.hpp"
#include "rkgcn/trainer.hpp"

namespace {

using namespace rkgcn;

struct Setup {
  KnowledgeGraph kg;
  InteractionDataset ds;
  Hyperparams hp;
  RippleTable ripples;
  BatchInputs batch;
  ModelParams<float> params;

  static Setup make(std::size_t n_p, std::size_t layers) {
    const auto dir = std::filesystem::temp_directory_path() / "rkgcn_bench_fixture";
    write_synthetic(generate_synthetic(SyntheticConfig{}), dir);
    auto kg = load_kg(dir / "kg.tsv", true);
    auto ratings = binarize(dir / "ratings.tsv", 4.0, load_item_map(dir / "item_map.tsv", kg.entity_vocab()));
    auto ds = prepare_dataset(ratings, {}, 1);
    std::filesystem::remove_all(dir);
    Hyperparams hp;
    hp.dim = 16;
    hp.n_p = n_p;
    hp.n_e = 8;
    hp.layers = layers;
    hp.batch_size = 256;
    auto ripples = build_ripple_table(kg, ds, hp, 3);
    std::span<const Interaction> rows(ds.train.data(), std::min<std::size_t>(hp.batch_size, ds.train.size()));
    auto batch = assemble_batch(rows, ds, kg, ripples, hp, 5);
    ModelParams<float> params({kg.num_entities(), kg.num_relations(), ds.num_users}, hp, {});
    Rng rng(7);
    params.init(rng);
    return {std::move(kg), std::move(ds), hp, std::move(ripples), std::move(batch), std::move(params)};
  }
};

void BM_Forward(benchmark::State& state) {
  auto s = Setup::make(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(batch_loss<float>(s.params, s.batch.inputs, s.hp.l2, {}).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.batch.inputs.size()));
}

void BM_ForwardBackward(benchmark::State& state) {
  auto s = Setup::make(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    s.params.store().zero_grad();
    benchmark::DoNotOptimize(forward_backward<float>(s.params, s.batch.inputs, s.hp.l2, {}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.batch.inputs.size()));
}

BENCHMARK(BM_Forward)->ArgsProduct({{16, 32, 64}, {1, 2}});
BENCHMARK(BM_ForwardBackward)->ArgsProduct({{16, 32, 64}, {1, 2}});

}  // namespace

BENCHMARK_MAIN();

// Microbenchmarks for the hot paths: gradient evaluation, local training,
// aggregation, full federated rounds and the divergence probes. Fixtures are
// built outside the timed loops.

#include <benchmark/benchmark.h>

#include <utility>
#include <vector>

#include "fedskew/analysis.hpp"
#include "fedskew/dataset.hpp"
#include "fedskew/federation.hpp"
#include "fedskew/model.hpp"
#include "fedskew/partition.hpp"

namespace {

using namespace fedskew;

const LabeledDataset& bench_dataset() {
    static LabeledDataset data = gen_synthetic(10, 16, 400, 2.0, 71001);
    return data;
}

ModelParams bench_params() { return init_params({16, 32, 10}, 71002, 1.0); }

std::vector<ClientShard> bench_shards(PartitionKind kind) {
    PartitionSpec spec;
    spec.kind = kind;
    spec.clients = 10;
    spec.classes_per_client = 1;
    spec.seed = 71003;
    return partition(bench_dataset(), spec);
}

void BM_LossAndGrad(benchmark::State& state) {
    ModelParams params = bench_params();
    std::vector<int64_t> rows(static_cast<size_t>(state.range(0)));
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int64_t>(i);
    LabeledDataset batch = bench_dataset().subset(rows);
    for (auto _ : state) {
        LossGrad lg = loss_and_grad(params, batch);
        benchmark::DoNotOptimize(lg.loss);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrad)->Arg(8)->Arg(64)->Arg(512);

void BM_LocalTrain(benchmark::State& state) {
    std::vector<ClientShard> shards = bench_shards(PartitionKind::Iid);
    ModelParams params = bench_params();
    FedConfig cfg;
    cfg.clients = 10;
    cfg.batch_size = 50;
    cfg.local_epochs = static_cast<int>(state.range(0));
    cfg.eta0 = 0.05;
    cfg.rounds = 1;
    cfg.seed = 71004;
    for (auto _ : state) {
        ModelParams out = local_train(params, shards[0], cfg, 0);
        benchmark::DoNotOptimize(out.parameter_count());
    }
}
BENCHMARK(BM_LocalTrain)->Arg(1)->Arg(5);

void BM_Aggregate(benchmark::State& state) {
    std::vector<std::pair<ModelParams, int>> locals;
    for (int k = 0; k < 10; ++k) {
        locals.emplace_back(init_params({16, 32, 10}, 71010 + k, 1.0), 400);
    }
    for (auto _ : state) {
        ModelParams mean = aggregate(locals);
        benchmark::DoNotOptimize(mean.parameter_count());
    }
}
BENCHMARK(BM_Aggregate);

void BM_FedAvgRound(benchmark::State& state) {
    std::vector<ClientShard> shards = bench_shards(PartitionKind::KClassNonIid);
    LabeledDataset test = gen_synthetic(10, 16, 50, 2.0, 71005);
    ModelParams init = bench_params();
    FedConfig cfg;
    cfg.clients = 10;
    cfg.batch_size = 50;
    cfg.local_epochs = 1;
    cfg.eta0 = 0.05;
    cfg.rounds = 1;
    cfg.seed = 71006;
    for (auto _ : state) {
        std::vector<RoundRecord> history = run_fedavg(shards, test, init, cfg);
        benchmark::DoNotOptimize(history.back().test_accuracy);
    }
}
BENCHMARK(BM_FedAvgRound);

void BM_Partition(benchmark::State& state) {
    PartitionSpec spec;
    spec.kind = PartitionKind::KClassNonIid;
    spec.clients = 10;
    spec.classes_per_client = static_cast<int>(state.range(0));
    spec.seed = 71007;
    for (auto _ : state) {
        std::vector<ClientShard> shards = partition(bench_dataset(), spec);
        benchmark::DoNotOptimize(shards.size());
    }
}
BENCHMARK(BM_Partition)->Arg(1)->Arg(2);

void BM_WeightDivergence(benchmark::State& state) {
    ModelParams a = init_params({16, 32, 10}, 71008, 1.0);
    ModelParams b = init_params({16, 32, 10}, 71009, 1.0);
    for (auto _ : state) {
        DivergenceReport rep = weight_divergence(a, b);
        benchmark::DoNotOptimize(rep.total);
    }
}
BENCHMARK(BM_WeightDivergence);

void BM_DeterministicSync(benchmark::State& state) {
    std::vector<ClientShard> shards = bench_shards(PartitionKind::KClassNonIid);
    ModelParams init = bench_params();
    for (auto _ : state) {
        DeterministicPair pair = run_deterministic_pair(shards, 0.05, 4, 2, init);
        benchmark::DoNotOptimize(pair.federated.back().parameter_count());
    }
}
BENCHMARK(BM_DeterministicSync);

} // namespace

BENCHMARK_MAIN();

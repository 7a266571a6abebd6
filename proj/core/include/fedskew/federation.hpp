#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedskew/dataset.hpp"
#include "fedskew/model.hpp"

namespace fedskew {

struct FedConfig {
    int clients = 1;       // K, all participate every round
    int batch_size = 1;    // B, local mini-batch size
    int local_epochs = 1;  // E
    double eta0 = 0.01;
    double decay = 1.0;    // per-round multiplicative learning-rate decay
    int rounds = 0;
    uint64_t seed = 0;

    double eta_at(int round) const;
};

struct RoundRecord {
    int round = -1; // -1 marks the pre-training evaluation of the initial model
    ModelParams global_params;
    double test_accuracy = 0.0;
    double eta = 0.0;
    std::vector<int> client_steps; // local gradient steps taken per client this round
};

/// E epochs of mini-batch SGD over the shard, starting from a copy of the
/// received global params. Batches come from a fresh seeded shuffle per
/// epoch; a short final batch is kept. The shuffle seed depends on the
/// round and epoch only, so equal shards produce equal outputs.
ModelParams local_train(const ModelParams& params, const ClientShard& shard,
                        const FedConfig& cfg, int round);

/// Weighted mean of client params with weights n_k / sum(n). Summed in list
/// order as offsets from the first entry, so aggregating identical params
/// returns them bit-exactly.
ModelParams aggregate(const std::vector<std::pair<ModelParams, int>>& locals);

/// Full FedAvg: every round broadcasts the global params, trains each client
/// locally, aggregates, and evaluates on the test set. Record 0 holds the
/// initial model's accuracy (round -1); one record follows per round.
std::vector<RoundRecord> run_fedavg(const std::vector<ClientShard>& shards,
                                    const LabeledDataset& test,
                                    const ModelParams& init, const FedConfig& cfg);

/// Matched baseline: mini-batch SGD over the pooled data with batch size
/// B*K and the same learning-rate schedule; one round is E epochs.
std::vector<RoundRecord> run_centralized(const LabeledDataset& data,
                                         const LabeledDataset& test,
                                         const ModelParams& init, const FedConfig& cfg);

/// Step-by-step weight trajectories of the deterministic runner.
/// Index t covers steps 0..sync_rounds*steps_per_sync inclusive; index 0 is
/// the shared init. `federated[t]` is the sample-size-weighted aggregate of
/// the client weights after t steps (clients reset to it at sync boundaries).
struct DeterministicPair {
    std::vector<ModelParams> federated;
    std::vector<ModelParams> centralized;
    std::vector<std::vector<ModelParams>> clients; // clients[k][t]
    std::vector<double> client_weights;            // n_k / sum(n)
};

/// Gradient-descent twins without sampling noise: client k steps along the
/// p^(k)-weighted sum of per-class mean gradients, the centralized twin
/// along the population-weighted sum, both computed on the pooled data.
/// Learning rate is fixed; synchronization happens every steps_per_sync
/// steps for sync_rounds rounds. Single-threaded so reruns are bit-identical.
DeterministicPair run_deterministic_pair(const std::vector<ClientShard>& shards,
                                         double eta, int steps_per_sync,
                                         int sync_rounds, const ModelParams& init);

} // namespace fedskew

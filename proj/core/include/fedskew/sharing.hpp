#pragma once

#include <cstdint>
#include <vector>

#include "fedskew/dataset.hpp"
#include "fedskew/federation.hpp"
#include "fedskew/model.hpp"

namespace fedskew {

struct ShareConfig {
    double beta = 0.1;    // share size as a fraction of the pooled client data
    double alpha = 1.0;   // fraction of the share merged into each client
    int warmup_steps = 0; // mini-batch steps on the share before federation
    uint64_t seed = 0;
};

/// Class-balanced seeded sample from the holdout: round(beta * d_size)
/// examples, rounded to a multiple of the class count, drawn without
/// replacement with the same count per class.
LabeledDataset build_global_share(const LabeledDataset& holdout, int d_size,
                                  double beta, uint64_t seed);

/// One seeded sample of round(alpha * |share|) examples per client, without
/// replacement within a sample. Samples are drawn independently, so clients
/// may overlap: the share is global data, not partitioned.
std::vector<LabeledDataset> distribute_share(const LabeledDataset& share,
                                             double alpha, int clients,
                                             uint64_t seed);

/// `steps` mini-batch SGD steps on the share at fixed eta, re-shuffling at
/// every epoch boundary. steps == 0 returns init unchanged.
ModelParams warmup(const LabeledDataset& share, const ModelParams& init,
                   int steps, double eta, int batch_size, uint64_t seed);

struct ClientEmdShift {
    int client_id = 0;
    double emd_before = 0.0;
    double emd_after = 0.0;
};

/// Outcome of the mitigation experiment: trajectories of both arms plus the
/// per-client skew shift caused by merging the share.
struct SharingReport {
    std::vector<RoundRecord> shared;  // FedAvg over the merged shards
    std::vector<RoundRecord> control; // FedAvg over the private shards only
    std::vector<ClientEmdShift> shifts;
    double beta = 0.0;
    double alpha = 0.0;
    double warmup_accuracy = 0.0;
    int share_size = 0;   // examples in the global share
    int portion_size = 0; // share examples merged into each client
};

/// Builds the global share from the holdout, warms the model up on it,
/// merges a random alpha portion into every client, runs FedAvg, and runs
/// the no-sharing control from the same warmed init so the comparison
/// isolates the data effect. EMD-after is measured against the pooled
/// distribution including the distributed portions, since sharing changes
/// the population.
SharingReport run_sharing_experiment(const std::vector<ClientShard>& shards,
                                     const LabeledDataset& holdout,
                                     const LabeledDataset& test,
                                     const ModelParams& init,
                                     const FedConfig& base_cfg,
                                     const ShareConfig& share_cfg);

} // namespace fedskew

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedskew/dataset.hpp"
#include "fedskew/federation.hpp"
#include "fedskew/model.hpp"

namespace fedskew {

struct DivergenceReport {
    double total = 0.0;
    std::vector<std::pair<std::string, double>> per_layer;
};

/// ||w_fed - w_ref|| / ||w_ref||, overall and per layer.
DivergenceReport weight_divergence(const ModelParams& w_fed, const ModelParams& w_ref);

/// Maximum over classes of the norm of the per-class mean gradient.
/// Every class must be present in the data.
double g_max(const ModelParams& params, const LabeledDataset& data);

struct ProbeSpec {
    int pairs = 64;        // sampled weight pairs per class
    double radius = 0.5;   // perturbation radius around trajectory points
    uint64_t seed = 0;
    double safety_factor = 1.5;
};

/// Empirical Lipschitz constant of the class-conditional gradient:
/// safety_factor times the largest observed ||g_i(w) - g_i(w')|| / ||w - w'||
/// over pairs perturbed around points of the given reference trajectory.
double estimate_lipschitz(const std::vector<ModelParams>& trajectory,
                          const LabeledDataset& data, int class_i,
                          const ProbeSpec& probe);

/// Everything the divergence bound needs at one synchronization point.
/// gmax_trace[s] is g_max evaluated at the centralized weights after s steps.
struct BoundInputs {
    double eta = 0.0;
    int steps_per_sync = 1; // T
    std::vector<double> lambda_per_class;
    std::vector<ClassDistribution> client_dists;
    std::vector<int> client_n;
    ClassDistribution population_dist;
    std::vector<double> gmax_trace;
};

/// Upper bound on the divergence after synchronization m (1-based):
///   sum_k w_k a_k^T prev + eta sum_k w_k dist_k sum_{j=0}^{T-1} a_k^j gmax[mT-1-j]
/// with a_k = 1 + eta sum_i p^(k)_i lambda_i and dist_k the distance between
/// client k's distribution and the population distribution.
double bound_rhs(double prev_divergence, const BoundInputs& inputs, int sync_round);

struct BoundRound {
    int sync_round = 0; // m
    double lhs = 0.0;   // measured ||w_fed - w_central|| at the sync point
    double rhs = 0.0;
    double slack = 0.0; // rhs - lhs
};

struct BoundCheckReport {
    std::vector<BoundRound> rounds;
    bool passed = false; // all slack >= -1e-9
    std::vector<double> lambda;
    int probe_pairs_used = 0;
};

/// Runs the deterministic pair and checks the divergence bound at every
/// synchronization, chaining each round's RHS off the previous measured LHS.
/// If the check fails with estimated lambdas, they are re-estimated once with
/// twice the probe pairs before the failure is reported. Passing
/// lambda_override skips estimation entirely.
BoundCheckReport verify_bound(const std::vector<ClientShard>& shards,
                              const ModelParams& init, double eta,
                              int steps_per_sync, int sync_rounds,
                              const ProbeSpec& probe,
                              const std::optional<std::vector<double>>& lambda_override =
                                  std::nullopt);

struct SweepRow {
    double emd_target = 0.0;
    int rep = 0;
    std::string layer; // "total" or a layer name
    double value = 0.0;
};

struct SweepSummaryRow {
    double emd_target = 0.0;
    std::string layer;
    double mean = 0.0;
    double stddev = 0.0;
};

struct SweepTable {
    std::vector<SweepRow> rows;
};

/// Mean and (population) standard deviation over reps, per (distance, layer).
std::vector<SweepSummaryRow> summarize(const SweepTable& table);

/// For every grid value and rep: draw a fresh seeded distribution at that
/// distance, partition, run one FedAvg round and one matched centralized
/// round from the shared init, and record the weight divergence per layer
/// and in total.
SweepTable divergence_vs_emd_sweep(const LabeledDataset& dataset,
                                   const std::vector<double>& emd_grid, int reps,
                                   const FedConfig& cfg, const ModelParams& init);

} // namespace fedskew

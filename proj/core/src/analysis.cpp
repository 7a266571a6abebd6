#include "fedskew/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "fedskew/errors.hpp"
#include "fedskew/partition.hpp"
#include "fedskew/rng.hpp"

namespace fedskew {

namespace {

double layer_norm(const Layer& layer) {
    double sum = 0.0;
    for (double w : layer.weights) {
        sum += w * w;
    }
    for (double b : layer.bias) {
        sum += b * b;
    }
    return std::sqrt(sum);
}

double layer_distance(const Layer& a, const Layer& b) {
    double sum = 0.0;
    for (size_t i = 0; i < a.weights.size(); ++i) {
        double d = a.weights[i] - b.weights[i];
        sum += d * d;
    }
    for (size_t i = 0; i < a.bias.size(); ++i) {
        double d = a.bias[i] - b.bias[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

} // namespace

DivergenceReport weight_divergence(const ModelParams& w_fed, const ModelParams& w_ref) {
    check_same_shape(w_fed, w_ref);
    double ref_norm = l2_norm(w_ref);
    if (ref_norm == 0.0) {
        throw DataError("reference weights have zero norm");
    }
    DivergenceReport report;
    report.total = l2_distance(w_fed, w_ref) / ref_norm;
    for (size_t l = 0; l < w_ref.layers.size(); ++l) {
        double ln = layer_norm(w_ref.layers[l]);
        if (ln == 0.0) {
            throw DataError("reference layer " + std::to_string(l) + " has zero norm");
        }
        report.per_layer.emplace_back("layer" + std::to_string(l),
                                      layer_distance(w_fed.layers[l], w_ref.layers[l]) / ln);
    }
    return report;
}

double g_max(const ModelParams& params, const LabeledDataset& data) {
    auto [grads, present] = all_class_conditional_grads(params, data);
    double best = 0.0;
    for (int i = 0; i < params.num_classes(); ++i) {
        if (!present[i]) {
            throw DataError("class " + std::to_string(i) + " missing from data");
        }
        best = std::max(best, l2_norm(grads[i]));
    }
    return best;
}

double estimate_lipschitz(const std::vector<ModelParams>& trajectory,
                          const LabeledDataset& data, int class_i,
                          const ProbeSpec& probe) {
    if (probe.pairs < 1) {
        throw ConfigError("need at least one probe pair", "verify.probe_pairs");
    }
    if (trajectory.empty()) {
        throw DataError("empty reference trajectory");
    }
    Rng rng(derive_seed(probe.seed, "lipschitz", static_cast<uint64_t>(class_i)));
    size_t dim = trajectory.front().parameter_count();
    double sigma = probe.radius / std::sqrt(static_cast<double>(dim));

    auto perturb = [&](const ModelParams& anchor) {
        std::vector<double> flat = flatten(anchor);
        for (double& v : flat) {
            v += sigma * rng.normal();
        }
        return unflatten(anchor, flat);
    };

    double worst = 0.0;
    for (int p = 0; p < probe.pairs; ++p) {
        const ModelParams& anchor =
            trajectory[rng.uniform_int(0, static_cast<int>(trajectory.size()) - 1)];
        ModelParams wa = perturb(anchor);
        ModelParams wb = perturb(anchor);
        double dist = l2_distance(wa, wb);
        if (dist < 1e-12) {
            continue;
        }
        GradientSet ga = class_conditional_grad(wa, data, class_i);
        GradientSet gb = class_conditional_grad(wb, data, class_i);
        worst = std::max(worst, l2_distance(ga, gb) / dist);
    }
    return probe.safety_factor * worst;
}

double bound_rhs(double prev_divergence, const BoundInputs& inputs, int sync_round) {
    if (prev_divergence < 0.0) {
        throw DataError("previous divergence cannot be negative");
    }
    int t_steps = inputs.steps_per_sync;
    size_t needed = static_cast<size_t>(sync_round) * t_steps;
    if (inputs.gmax_trace.size() < needed) {
        throw DataError("gmax trace holds " + std::to_string(inputs.gmax_trace.size()) +
                        " steps, round " + std::to_string(sync_round) + " needs " +
                        std::to_string(needed));
    }
    int64_t total_n = 0;
    for (int n : inputs.client_n) {
        total_n += n;
    }

    double rhs = 0.0;
    for (size_t k = 0; k < inputs.client_dists.size(); ++k) {
        double weight = static_cast<double>(inputs.client_n[k]) /
                        static_cast<double>(total_n);
        const ClassDistribution& pk = inputs.client_dists[k];
        double amplification = 1.0; // a_k = 1 + eta * sum_i p_i lambda_i
        for (int i = 0; i < pk.size(); ++i) {
            amplification += inputs.eta * pk.probs[i] * inputs.lambda_per_class[i];
        }
        double dist_k = emd(pk, inputs.population_dist);

        double carried = weight * std::pow(amplification, t_steps) * prev_divergence;

        double series = 0.0;
        double power = 1.0;
        for (int j = 0; j < t_steps; ++j) {
            series += power * inputs.gmax_trace[needed - 1 - j];
            power *= amplification;
        }
        rhs += carried + inputs.eta * weight * dist_k * series;
    }
    return rhs;
}

namespace {

BoundCheckReport check_rounds(const DeterministicPair& pair,
                              const std::vector<ClientShard>& shards,
                              const LabeledDataset& pooled, double eta,
                              int steps_per_sync, int sync_rounds,
                              const std::vector<double>& lambda, int pairs_used) {
    BoundInputs inputs;
    inputs.eta = eta;
    inputs.steps_per_sync = steps_per_sync;
    inputs.lambda_per_class = lambda;
    inputs.population_dist = empirical_distribution(pooled);
    for (const ClientShard& shard : shards) {
        inputs.client_dists.push_back(shard.dist);
        inputs.client_n.push_back(shard.n);
    }
    inputs.gmax_trace.reserve(static_cast<size_t>(sync_rounds) * steps_per_sync);
    for (int s = 0; s < sync_rounds * steps_per_sync; ++s) {
        inputs.gmax_trace.push_back(g_max(pair.centralized[s], pooled));
    }

    BoundCheckReport report;
    report.lambda = lambda;
    report.probe_pairs_used = pairs_used;
    report.passed = true;
    double prev_lhs = 0.0;
    for (int m = 1; m <= sync_rounds; ++m) {
        size_t step = static_cast<size_t>(m) * steps_per_sync;
        BoundRound row;
        row.sync_round = m;
        row.lhs = l2_distance(pair.federated[step], pair.centralized[step]);
        row.rhs = bound_rhs(prev_lhs, inputs, m);
        row.slack = row.rhs - row.lhs;
        if (row.slack < -1e-9) {
            report.passed = false;
        }
        prev_lhs = row.lhs;
        report.rounds.push_back(row);
    }
    return report;
}

} // namespace

BoundCheckReport verify_bound(const std::vector<ClientShard>& shards,
                              const ModelParams& init, double eta,
                              int steps_per_sync, int sync_rounds,
                              const ProbeSpec& probe,
                              const std::optional<std::vector<double>>& lambda_override) {
    DeterministicPair pair =
        run_deterministic_pair(shards, eta, steps_per_sync, sync_rounds, init);
    LabeledDataset pooled = pool_shards(shards);
    int num_classes = pooled.num_classes;

    if (lambda_override) {
        if (static_cast<int>(lambda_override->size()) != num_classes) {
            throw ShapeError("lambda override must carry one value per class");
        }
        return check_rounds(pair, shards, pooled, eta, steps_per_sync, sync_rounds,
                            *lambda_override, 0);
    }

    auto estimate_all = [&](int pairs) {
        ProbeSpec spec = probe;
        spec.pairs = pairs;
        std::vector<double> lambda(num_classes);
        for (int i = 0; i < num_classes; ++i) {
            lambda[i] = estimate_lipschitz(pair.centralized, pooled, i, spec);
        }
        return lambda;
    };

    BoundCheckReport report = check_rounds(pair, shards, pooled, eta, steps_per_sync,
                                           sync_rounds, estimate_all(probe.pairs),
                                           probe.pairs);
    if (!report.passed) {
        // The estimate may have missed the steep part of the gradient field;
        // retry once with a denser probe before reporting failure.
        report = check_rounds(pair, shards, pooled, eta, steps_per_sync, sync_rounds,
                              estimate_all(probe.pairs * 2), probe.pairs * 2);
    }
    return report;
}

std::vector<SweepSummaryRow> summarize(const SweepTable& table) {
    std::vector<SweepSummaryRow> summary;
    for (const SweepRow& row : table.rows) {
        auto it = std::find_if(summary.begin(), summary.end(), [&](const auto& s) {
            return s.emd_target == row.emd_target && s.layer == row.layer;
        });
        if (it == summary.end()) {
            summary.push_back({row.emd_target, row.layer, 0.0, 0.0});
        }
    }
    for (SweepSummaryRow& s : summary) {
        std::vector<double> values;
        for (const SweepRow& row : table.rows) {
            if (row.emd_target == s.emd_target && row.layer == s.layer) {
                values.push_back(row.value);
            }
        }
        double mean = 0.0;
        for (double v : values) {
            mean += v;
        }
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) {
            var += (v - mean) * (v - mean);
        }
        s.mean = mean;
        s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    }
    return summary;
}

SweepTable divergence_vs_emd_sweep(const LabeledDataset& dataset,
                                   const std::vector<double>& emd_grid, int reps,
                                   const FedConfig& cfg, const ModelParams& init) {
    if (reps < 1) {
        throw ConfigError("need at least one repetition", "sweep.reps");
    }
    SweepTable table;
    FedConfig round_cfg = cfg;
    round_cfg.rounds = 1;
    round_cfg.decay = 1.0;

    for (size_t g = 0; g < emd_grid.size(); ++g) {
        for (int rep = 0; rep < reps; ++rep) {
            PartitionSpec spec;
            spec.kind = PartitionKind::TargetEmd;
            spec.clients = cfg.clients;
            spec.target_emd = emd_grid[g];
            spec.seed = derive_seed(cfg.seed, "sweep-partition", g * 100003 + rep);
            std::vector<ClientShard> shards = partition(dataset, spec);

            LabeledDataset pooled = pool_shards(shards);
            auto fed = run_fedavg(shards, pooled, init, round_cfg);
            auto central = run_centralized(pooled, pooled, init, round_cfg);

            DivergenceReport report = weight_divergence(fed.back().global_params,
                                                        central.back().global_params);
            table.rows.push_back({emd_grid[g], rep, "total", report.total});
            for (const auto& [layer, value] : report.per_layer) {
                table.rows.push_back({emd_grid[g], rep, layer, value});
            }
        }
    }
    return table;
}

} // namespace fedskew

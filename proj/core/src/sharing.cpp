#include "fedskew/sharing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedskew/errors.hpp"
#include "fedskew/rng.hpp"

namespace fedskew {

namespace {

std::vector<std::vector<int64_t>> rows_by_class(const LabeledDataset& data) {
    std::vector<std::vector<int64_t>> rows(data.num_classes);
    for (int i = 0; i < data.size(); ++i) {
        rows[data.labels[i]].push_back(i);
    }
    return rows;
}

LabeledDataset permuted(const LabeledDataset& data, Rng& rng) {
    std::vector<int64_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    return data.subset(order);
}

} // namespace

LabeledDataset build_global_share(const LabeledDataset& holdout, int d_size,
                                  double beta, uint64_t seed) {
    if (beta <= 0.0 || beta > 1.0) {
        throw ConfigError("beta must lie in (0, 1]", "share.beta");
    }
    if (d_size < 1) {
        throw ConfigError("pooled client data is empty", "share.beta");
    }
    int classes = holdout.num_classes;
    int total = static_cast<int>(std::llround(beta * d_size));
    int per_class = static_cast<int>(
        std::llround(static_cast<double>(total) / classes));
    if (per_class < 1) {
        throw ConfigError("share rounds below one example per class",
                          "share.beta");
    }

    auto pools = rows_by_class(holdout);
    Rng rng(derive_seed(seed, "share-pick"));
    std::vector<int64_t> picked;
    picked.reserve(static_cast<size_t>(per_class) * classes);
    for (int c = 0; c < classes; ++c) {
        if (static_cast<int>(pools[c].size()) < per_class) {
            throw DataError("holdout pool for class " + std::to_string(c) +
                            " holds " + std::to_string(pools[c].size()) +
                            " examples, the share needs " +
                            std::to_string(per_class));
        }
        rng.shuffle(pools[c]);
        picked.insert(picked.end(), pools[c].begin(),
                      pools[c].begin() + per_class);
    }
    std::sort(picked.begin(), picked.end());
    return holdout.subset(picked);
}

std::vector<LabeledDataset> distribute_share(const LabeledDataset& share,
                                             double alpha, int clients,
                                             uint64_t seed) {
    if (alpha <= 0.0 || alpha > 1.0) {
        throw ConfigError("alpha must lie in (0, 1]", "share.alpha");
    }
    if (clients < 1) {
        throw ConfigError("need at least one client", "fed.clients");
    }
    int take = static_cast<int>(std::llround(alpha * share.size()));
    std::vector<LabeledDataset> portions;
    portions.reserve(clients);
    for (int k = 0; k < clients; ++k) {
        Rng rng(derive_seed(seed, "share-portion", static_cast<uint64_t>(k)));
        std::vector<int64_t> order(share.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        order.resize(take);
        std::sort(order.begin(), order.end());
        portions.push_back(share.subset(order));
    }
    return portions;
}

ModelParams warmup(const LabeledDataset& share, const ModelParams& init,
                   int steps, double eta, int batch_size, uint64_t seed) {
    if (steps < 0) {
        throw ConfigError("warmup steps cannot be negative",
                          "share.warmup_steps");
    }
    if (steps == 0) {
        return init;
    }
    if (batch_size < 1 || batch_size > share.size()) {
        throw ConfigError("warmup batch size must lie in [1, share size]",
                          "fed.batch_size");
    }
    ModelParams params = init;
    std::vector<int64_t> order(share.size());
    std::iota(order.begin(), order.end(), 0);
    int taken = 0;
    for (int epoch = 0; taken < steps; ++epoch) {
        Rng rng(derive_seed(seed, "warmup-shuffle",
                            static_cast<uint64_t>(epoch)));
        rng.shuffle(order);
        for (size_t start = 0; start < order.size() && taken < steps;
             start += static_cast<size_t>(batch_size)) {
            size_t stop =
                std::min(order.size(), start + static_cast<size_t>(batch_size));
            std::vector<int64_t> batch(order.begin() + start,
                                       order.begin() + stop);
            LossGrad lg = loss_and_grad(params, share.subset(batch));
            apply_sgd_step(params, lg.grad, eta);
            ++taken;
        }
    }
    return params;
}

SharingReport run_sharing_experiment(const std::vector<ClientShard>& shards,
                                     const LabeledDataset& holdout,
                                     const LabeledDataset& test,
                                     const ModelParams& init,
                                     const FedConfig& base_cfg,
                                     const ShareConfig& share_cfg) {
    if (shards.empty()) {
        throw ConfigError("need at least one client shard", "fed.clients");
    }
    int64_t d_size = 0;
    for (const ClientShard& shard : shards) {
        d_size += shard.n;
    }

    LabeledDataset share =
        build_global_share(holdout, static_cast<int>(d_size), share_cfg.beta,
                           derive_seed(share_cfg.seed, "build"));
    ModelParams warmed =
        warmup(share, init, share_cfg.warmup_steps, base_cfg.eta0,
               base_cfg.batch_size, derive_seed(share_cfg.seed, "warmup"));
    std::vector<LabeledDataset> portions = distribute_share(
        share, share_cfg.alpha, static_cast<int>(shards.size()),
        derive_seed(share_cfg.seed, "distribute"));

    // Skew is measured against the pooled private data before merging and
    // against the pool plus every distributed portion afterwards.
    LabeledDataset pooled = pool_shards(shards);
    ClassDistribution population_before = empirical_distribution(pooled);
    LabeledDataset pooled_after = pooled;
    for (const LabeledDataset& portion : portions) {
        pooled_after.append(portion);
    }
    ClassDistribution population_after = empirical_distribution(pooled_after);

    SharingReport report;
    report.beta = share_cfg.beta;
    report.alpha = share_cfg.alpha;
    report.share_size = share.size();
    report.portion_size = portions.front().size();
    report.warmup_accuracy = evaluate(warmed, test);

    std::vector<ClientShard> merged;
    merged.reserve(shards.size());
    for (size_t k = 0; k < shards.size(); ++k) {
        LabeledDataset data = shards[k].data;
        data.append(portions[k]);
        Rng rng(derive_seed(share_cfg.seed, "merge-shuffle",
                            static_cast<uint64_t>(k)));
        ClientShard shard;
        shard.data = permuted(data, rng);
        shard.client_id = shards[k].client_id;
        shard.n = shard.data.size();
        shard.dist = empirical_distribution(shard.data);
        shard.indices = shards[k].indices; // provenance of the private part
        merged.push_back(std::move(shard));

        report.shifts.push_back(
            {shards[k].client_id, emd(shards[k].dist, population_before),
             emd(merged.back().dist, population_after)});
    }

    report.shared = run_fedavg(merged, test, warmed, base_cfg);
    report.control = run_fedavg(shards, test, warmed, base_cfg);
    return report;
}

} // namespace fedskew

#include "fedskew/federation.hpp"

#include <cmath>
#include <numeric>

#include "fedskew/errors.hpp"
#include "fedskew/rng.hpp"

namespace fedskew {

double FedConfig::eta_at(int round) const {
    return eta0 * std::pow(decay, round);
}

namespace {

void check_fed_config(const FedConfig& cfg) {
    if (cfg.clients < 1 || cfg.batch_size < 1 || cfg.local_epochs < 1 || cfg.rounds < 0) {
        throw ConfigError("client count, batch size, and epochs must be positive", "fed");
    }
    if (cfg.eta0 <= 0.0) {
        throw ConfigError("eta0 must be positive", "fed.eta0");
    }
    if (cfg.decay <= 0.0 || cfg.decay > 1.0) {
        throw ConfigError("decay must lie in (0, 1]", "fed.decay");
    }
}

// One round of mini-batch SGD epochs over `data`. Returns the number of
// gradient steps taken. Shuffle seeds hang off (seed, round, epoch) only.
int sgd_epochs(ModelParams& params, const LabeledDataset& data, int batch_size,
               int epochs, double eta, uint64_t seed, int round) {
    int steps = 0;
    std::vector<int64_t> order(data.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, "epoch-shuffle",
                            static_cast<uint64_t>(round) * 100003 + epoch));
        rng.shuffle(order);
        for (int start = 0; start < data.size(); start += batch_size) {
            int stop = std::min(start + batch_size, data.size());
            std::vector<int64_t> batch_idx(order.begin() + start, order.begin() + stop);
            LabeledDataset batch = data.subset(batch_idx);
            LossGrad lg = loss_and_grad(params, batch);
            apply_sgd_step(params, lg.grad, eta);
            ++steps;
        }
    }
    return steps;
}

} // namespace

ModelParams local_train(const ModelParams& params, const ClientShard& shard,
                        const FedConfig& cfg, int round) {
    check_fed_config(cfg);
    if (shard.n == 0) {
        throw DataError("client " + std::to_string(shard.client_id) + " has no data");
    }
    if (cfg.batch_size > shard.n) {
        throw ConfigError("batch size " + std::to_string(cfg.batch_size) +
                          " exceeds shard size " + std::to_string(shard.n),
                          "fed.batch_size");
    }
    ModelParams local = params;
    sgd_epochs(local, shard.data, cfg.batch_size, cfg.local_epochs, cfg.eta_at(round),
               cfg.seed, round);
    return local;
}

ModelParams aggregate(const std::vector<std::pair<ModelParams, int>>& locals) {
    if (locals.empty()) {
        throw DataError("nothing to aggregate");
    }
    int64_t total = 0;
    for (const auto& [params, n] : locals) {
        check_same_shape(locals.front().first, params);
        if (n <= 0) {
            throw DataError("client sample counts must be positive");
        }
        total += n;
    }
    // Weighted mean written as first + sum of weighted offsets: identical
    // inputs have zero offsets and come back bit-exact.
    ModelParams result = locals.front().first;
    for (size_t k = 0; k < locals.size(); ++k) {
        double weight = static_cast<double>(locals[k].second) / static_cast<double>(total);
        const ModelParams& params = locals[k].first;
        for (size_t l = 0; l < result.layers.size(); ++l) {
            Layer& out = result.layers[l];
            const Layer& base = locals.front().first.layers[l];
            const Layer& in = params.layers[l];
            for (size_t i = 0; i < out.weights.size(); ++i) {
                out.weights[i] += weight * (in.weights[i] - base.weights[i]);
            }
            for (size_t i = 0; i < out.bias.size(); ++i) {
                out.bias[i] += weight * (in.bias[i] - base.bias[i]);
            }
        }
    }
    return result;
}

namespace {

RoundRecord make_record(int round, ModelParams params, const LabeledDataset& test,
                        double eta, std::vector<int> client_steps) {
    RoundRecord record;
    record.round = round;
    record.test_accuracy = evaluate(params, test);
    record.global_params = std::move(params);
    record.eta = eta;
    record.client_steps = std::move(client_steps);
    return record;
}

} // namespace

std::vector<RoundRecord> run_fedavg(const std::vector<ClientShard>& shards,
                                    const LabeledDataset& test,
                                    const ModelParams& init, const FedConfig& cfg) {
    check_fed_config(cfg);
    if (shards.empty()) {
        throw DataError("no client shards");
    }
    std::vector<RoundRecord> records;
    records.reserve(cfg.rounds + 1);
    records.push_back(make_record(-1, init, test, cfg.eta0, {}));

    ModelParams global = init;
    for (int round = 0; round < cfg.rounds; ++round) {
        std::vector<std::pair<ModelParams, int>> locals;
        std::vector<int> steps;
        locals.reserve(shards.size());
        for (const ClientShard& shard : shards) {
            locals.emplace_back(local_train(global, shard, cfg, round), shard.n);
            steps.push_back(cfg.local_epochs *
                            ((shard.n + cfg.batch_size - 1) / cfg.batch_size));
        }
        global = aggregate(locals);
        records.push_back(make_record(round, global, test, cfg.eta_at(round),
                                      std::move(steps)));
    }
    return records;
}

std::vector<RoundRecord> run_centralized(const LabeledDataset& data,
                                         const LabeledDataset& test,
                                         const ModelParams& init, const FedConfig& cfg) {
    check_fed_config(cfg);
    if (data.size() == 0) {
        throw DataError("no training data");
    }
    int batch = cfg.batch_size * cfg.clients;
    if (batch > data.size()) {
        throw ConfigError("central batch size B*K = " + std::to_string(batch) +
                          " exceeds dataset size " + std::to_string(data.size()),
                          "fed.batch_size");
    }
    std::vector<RoundRecord> records;
    records.reserve(cfg.rounds + 1);
    records.push_back(make_record(-1, init, test, cfg.eta0, {}));

    ModelParams params = init;
    for (int round = 0; round < cfg.rounds; ++round) {
        int steps = sgd_epochs(params, data, batch, cfg.local_epochs, cfg.eta_at(round),
                               cfg.seed, round);
        records.push_back(make_record(round, params, test, cfg.eta_at(round), {steps}));
    }
    return records;
}

DeterministicPair run_deterministic_pair(const std::vector<ClientShard>& shards,
                                         double eta, int steps_per_sync,
                                         int sync_rounds, const ModelParams& init) {
    if (shards.empty()) {
        throw DataError("no client shards");
    }
    if (eta <= 0.0 || steps_per_sync < 1 || sync_rounds < 0) {
        throw ConfigError("eta must be positive, steps and rounds non-negative", "verify");
    }
    LabeledDataset pooled = pool_shards(shards);
    ClassDistribution population = empirical_distribution(pooled);
    int num_classes = pooled.num_classes;

    int64_t total_n = 0;
    for (const ClientShard& shard : shards) {
        total_n += shard.n;
    }

    DeterministicPair result;
    result.client_weights.reserve(shards.size());
    for (const ClientShard& shard : shards) {
        result.client_weights.push_back(static_cast<double>(shard.n) /
                                        static_cast<double>(total_n));
    }

    ModelParams central = init;
    std::vector<ModelParams> clients(shards.size(), init);

    auto record_state = [&]() {
        result.centralized.push_back(central);
        std::vector<std::pair<ModelParams, int>> locals;
        locals.reserve(shards.size());
        for (size_t k = 0; k < shards.size(); ++k) {
            locals.emplace_back(clients[k], shards[k].n);
        }
        result.federated.push_back(aggregate(locals));
        for (size_t k = 0; k < shards.size(); ++k) {
            result.clients[k].push_back(clients[k]);
        }
    };

    result.clients.resize(shards.size());
    record_state();

    // Mixture of per-class mean gradients, all on the pooled data: only the
    // class priors differ between the centralized twin and the clients.
    auto mixture_step = [&](ModelParams& params, const ClassDistribution& priors) {
        auto [grads, present] = all_class_conditional_grads(params, pooled);
        GradientSet mix = grads[0]; // shape template; zeroed below
        for (Layer& layer : mix.layers) {
            std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
            std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
        }
        for (int i = 0; i < num_classes; ++i) {
            double p = priors.probs[i];
            if (p == 0.0) {
                continue;
            }
            if (!present[i]) {
                throw DataError("class " + std::to_string(i) +
                                " carries prior mass but has no pooled examples");
            }
            for (size_t l = 0; l < mix.layers.size(); ++l) {
                Layer& acc = mix.layers[l];
                const Layer& g = grads[i].layers[l];
                for (size_t j = 0; j < acc.weights.size(); ++j) {
                    acc.weights[j] += p * g.weights[j];
                }
                for (size_t j = 0; j < acc.bias.size(); ++j) {
                    acc.bias[j] += p * g.bias[j];
                }
            }
        }
        apply_sgd_step(params, mix, eta);
    };

    for (int m = 0; m < sync_rounds; ++m) {
        for (int t = 0; t < steps_per_sync; ++t) {
            mixture_step(central, population);
            for (size_t k = 0; k < shards.size(); ++k) {
                mixture_step(clients[k], shards[k].dist);
            }
            record_state();
        }
        // Synchronization: every client restarts from the aggregate.
        const ModelParams& synced = result.federated.back();
        for (ModelParams& client : clients) {
            client = synced;
        }
    }
    return result;
}

} // namespace fedskew

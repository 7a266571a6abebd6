#include "fedskew/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "fedskew/errors.hpp"
#include "fedskew/rng.hpp"

namespace fedskew {

namespace {

std::vector<ClientShard> shards_from_blocks(const LabeledDataset& data,
                                            std::vector<std::vector<int64_t>> blocks) {
    std::vector<ClientShard> shards;
    shards.reserve(blocks.size());
    for (size_t k = 0; k < blocks.size(); ++k) {
        shards.push_back(make_shard(static_cast<int>(k), data, std::move(blocks[k])));
    }
    return shards;
}

std::vector<ClientShard> partition_iid(const LabeledDataset& data, const PartitionSpec& spec) {
    if (data.size() % spec.clients != 0) {
        throw ConfigError("dataset size " + std::to_string(data.size()) +
                          " not divisible by " + std::to_string(spec.clients) + " clients",
                          "partition.clients");
    }
    std::vector<int64_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(spec.seed, "iid-shuffle"));
    rng.shuffle(order);

    int per_client = data.size() / spec.clients;
    std::vector<std::vector<int64_t>> blocks(spec.clients);
    for (int k = 0; k < spec.clients; ++k) {
        blocks[k].assign(order.begin() + static_cast<size_t>(k) * per_client,
                         order.begin() + static_cast<size_t>(k + 1) * per_client);
    }
    return shards_from_blocks(data, std::move(blocks));
}

std::vector<ClientShard> partition_k_class(const LabeledDataset& data,
                                           const PartitionSpec& spec) {
    int pieces = spec.clients * spec.classes_per_client;
    if (data.size() % pieces != 0) {
        throw ConfigError("dataset size " + std::to_string(data.size()) +
                          " not divisible by clients * classes_per_client = " +
                          std::to_string(pieces),
                          "partition.classes_per_client");
    }
    std::vector<int64_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return data.labels[a] < data.labels[b];
    });

    std::vector<int> piece_ids(pieces);
    std::iota(piece_ids.begin(), piece_ids.end(), 0);
    Rng rng(derive_seed(spec.seed, "piece-deal"));
    rng.shuffle(piece_ids);

    int piece_size = data.size() / pieces;
    std::vector<std::vector<int64_t>> blocks(spec.clients);
    for (int k = 0; k < spec.clients; ++k) {
        for (int c = 0; c < spec.classes_per_client; ++c) {
            int piece = piece_ids[static_cast<size_t>(k) * spec.classes_per_client + c];
            auto begin = order.begin() + static_cast<size_t>(piece) * piece_size;
            blocks[k].insert(blocks[k].end(), begin, begin + piece_size);
        }
    }
    return shards_from_blocks(data, std::move(blocks));
}

// Integer counts summing to `total` that track the real-valued targets:
// floor everything, then hand the leftover units to the largest remainders.
std::vector<int> largest_remainder_round(const std::vector<double>& targets, int total) {
    int c = static_cast<int>(targets.size());
    std::vector<int> counts(c);
    std::vector<std::pair<double, int>> remainders(c);
    int assigned = 0;
    for (int i = 0; i < c; ++i) {
        counts[i] = static_cast<int>(std::floor(targets[i]));
        remainders[i] = {targets[i] - counts[i], i};
        assigned += counts[i];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        return a.second < b.second;
    });
    for (int r = 0; r < total - assigned; ++r) {
        counts[remainders[r % c].second] += 1;
    }
    return counts;
}

std::vector<ClientShard> partition_target_emd(const LabeledDataset& data,
                                              const PartitionSpec& spec) {
    int c = data.num_classes;
    std::vector<std::vector<int64_t>> pools(c);
    for (int i = 0; i < data.size(); ++i) {
        pools[data.labels[i]].push_back(i);
    }
    size_t min_count = pools[0].size();
    for (const auto& pool : pools) {
        min_count = std::min(min_count, pool.size());
    }
    for (auto& pool : pools) {
        pool.resize(min_count);
    }
    int64_t trimmed = static_cast<int64_t>(min_count) * c;
    if (trimmed == 0 || trimmed % spec.clients != 0) {
        throw ConfigError("balanced pool of " + std::to_string(trimmed) +
                          " examples not divisible by " + std::to_string(spec.clients) +
                          " clients",
                          "partition.clients");
    }
    int per_client = static_cast<int>(trimmed / spec.clients);

    ClassDistribution base =
        gen_target_emd_distribution(spec.target_emd, c, derive_seed(spec.seed, "target-dist"));

    // Client k draws counts from the base distribution rotated by k.
    std::vector<std::vector<int>> counts(spec.clients);
    std::vector<double> demand(c, 0.0);
    for (int k = 0; k < spec.clients; ++k) {
        ClassDistribution shifted = shift_distribution(base, k);
        std::vector<double> targets(c);
        for (int i = 0; i < c; ++i) {
            targets[i] = per_client * shifted.probs[i];
            demand[i] += targets[i];
        }
        counts[k] = largest_remainder_round(targets, per_client);
    }
    for (int i = 0; i < c; ++i) {
        if (demand[i] > static_cast<double>(min_count) + 0.5 * spec.clients) {
            throw DataError("class " + std::to_string(i) + " pool exhausted: partition needs " +
                            std::to_string(demand[i]) + " examples, pool holds " +
                            std::to_string(min_count));
        }
    }

    // Rounding can leave class columns off the pool sizes by a few units even
    // though row sums and the grand total are exact. Move single units from
    // oversubscribed to undersubscribed classes, taking them from the client
    // farthest above its real-valued target.
    std::vector<int> column(c, 0);
    for (int k = 0; k < spec.clients; ++k) {
        for (int i = 0; i < c; ++i) {
            column[i] += counts[k][i];
        }
    }
    auto find_over = [&]() {
        for (int i = 0; i < c; ++i) {
            if (column[i] > static_cast<int>(min_count)) {
                return i;
            }
        }
        return -1;
    };
    for (int over = find_over(); over >= 0; over = find_over()) {
        int donor = -1;
        double worst_excess = -1e300;
        for (int k = 0; k < spec.clients; ++k) {
            if (counts[k][over] == 0) {
                continue;
            }
            double target = per_client * shift_distribution(base, k).probs[over];
            double excess = counts[k][over] - target;
            if (excess > worst_excess) {
                worst_excess = excess;
                donor = k;
            }
        }
        int under = -1;
        for (int i = 0; i < c; ++i) {
            if (column[i] < static_cast<int>(min_count)) {
                under = i;
                break;
            }
        }
        counts[donor][over] -= 1;
        counts[donor][under] += 1;
        column[over] -= 1;
        column[under] += 1;
    }

    // Deal actual examples: a seeded shuffle of each pool, consumed in client order.
    Rng rng(derive_seed(spec.seed, "pool-deal"));
    for (auto& pool : pools) {
        rng.shuffle(pool);
    }
    std::vector<size_t> cursor(c, 0);
    std::vector<std::vector<int64_t>> blocks(spec.clients);
    for (int k = 0; k < spec.clients; ++k) {
        for (int i = 0; i < c; ++i) {
            for (int j = 0; j < counts[k][i]; ++j) {
                blocks[k].push_back(pools[i][cursor[i]++]);
            }
        }
    }
    return shards_from_blocks(data, std::move(blocks));
}

} // namespace

std::vector<ClientShard> partition(const LabeledDataset& data, const PartitionSpec& spec) {
    if (spec.clients < 1) {
        throw ConfigError("need at least one client", "partition.clients");
    }
    if (data.size() == 0) {
        throw DataError("cannot partition an empty dataset");
    }
    switch (spec.kind) {
    case PartitionKind::Iid:
        return partition_iid(data, spec);
    case PartitionKind::KClassNonIid:
        if (spec.classes_per_client < 1 || spec.classes_per_client > data.num_classes) {
            throw ConfigError("classes_per_client must lie in [1, C]",
                              "partition.classes_per_client");
        }
        return partition_k_class(data, spec);
    case PartitionKind::TargetEmd:
        return partition_target_emd(data, spec);
    }
    throw ConfigError("unknown partition kind", "partition.kind");
}

std::string shard_manifest(const std::vector<ClientShard>& shards) {
    nlohmann::json manifest = nlohmann::json::array();
    for (const ClientShard& shard : shards) {
        manifest.push_back({{"client_id", shard.client_id}, {"indices", shard.indices}});
    }
    return manifest.dump();
}

} // namespace fedskew

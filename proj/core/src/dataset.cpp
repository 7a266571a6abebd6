#include "fedskew/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedskew/errors.hpp"
#include "fedskew/rng.hpp"

namespace fedskew {

LabeledDataset LabeledDataset::subset(std::span<const int64_t> indices) const {
    LabeledDataset out;
    out.num_classes = num_classes;
    out.feature_dim = feature_dim;
    out.features.reserve(indices.size() * feature_dim);
    out.labels.reserve(indices.size());
    for (int64_t idx : indices) {
        if (idx < 0 || idx >= size()) {
            throw DataError("subset index " + std::to_string(idx) +
                            " outside [0, " + std::to_string(size()) + ")");
        }
        auto row = example(static_cast<int>(idx));
        out.features.insert(out.features.end(), row.begin(), row.end());
        out.labels.push_back(labels[static_cast<size_t>(idx)]);
    }
    return out;
}

void LabeledDataset::append(const LabeledDataset& other) {
    if (other.num_classes != num_classes || other.feature_dim != feature_dim) {
        throw ShapeError("cannot append datasets with different class counts or feature dims");
    }
    features.insert(features.end(), other.features.begin(), other.features.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

void validate(const LabeledDataset& data) {
    if (data.num_classes <= 0 || data.feature_dim <= 0) {
        throw ShapeError("dataset must declare positive class count and feature dim");
    }
    if (data.features.size() != static_cast<size_t>(data.size()) * data.feature_dim) {
        throw ShapeError("feature matrix size does not match label count");
    }
    for (int label : data.labels) {
        if (label < 0 || label >= data.num_classes) {
            throw DataError("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(data.num_classes) + ")");
        }
    }
    for (double v : data.features) {
        if (!std::isfinite(v)) {
            throw DataError("non-finite feature value");
        }
    }
}

ClassDistribution uniform_distribution(int num_classes) {
    return {std::vector<double>(num_classes, 1.0 / num_classes)};
}

std::vector<int> class_counts(const LabeledDataset& data) {
    std::vector<int> counts(data.num_classes, 0);
    for (int label : data.labels) {
        counts.at(label) += 1;
    }
    return counts;
}

ClassDistribution empirical_distribution(const LabeledDataset& data) {
    if (data.size() == 0) {
        throw DataError("empirical distribution of an empty dataset");
    }
    auto counts = class_counts(data);
    ClassDistribution dist{std::vector<double>(data.num_classes)};
    for (int i = 0; i < data.num_classes; ++i) {
        dist.probs[i] = static_cast<double>(counts[i]) / data.size();
    }
    return dist;
}

double emd(const ClassDistribution& p, const ClassDistribution& q) {
    if (p.size() != q.size()) {
        throw ShapeError("distributions have different class counts");
    }
    double total = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        total += std::abs(p.probs[i] - q.probs[i]);
    }
    return total;
}

ClassDistribution shift_distribution(const ClassDistribution& d, int by) {
    int c = d.size();
    ClassDistribution out{std::vector<double>(c)};
    int offset = ((by % c) + c) % c;
    for (int i = 0; i < c; ++i) {
        out.probs[(i + offset) % c] = d.probs[i];
    }
    return out;
}

ClassDistribution target_emd_interpolant(double target, int num_classes, int hot_class) {
    double max_emd = 2.0 * (1.0 - 1.0 / num_classes);
    if (target < 0.0 || target > max_emd + 1e-12) {
        throw DataError("target distance " + std::to_string(target) +
                        " outside [0, " + std::to_string(max_emd) + "]");
    }
    if (hot_class < 0 || hot_class >= num_classes) {
        throw DataError("hot class " + std::to_string(hot_class) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
    double t = std::min(target / max_emd, 1.0);
    ClassDistribution d{std::vector<double>(num_classes, (1.0 - t) / num_classes)};
    d.probs[hot_class] += t;
    return d;
}

ClassDistribution gen_target_emd_distribution(double target, int num_classes, uint64_t seed) {
    Rng rng(seed);
    int hot = rng.uniform_int(0, num_classes - 1);
    ClassDistribution d = target_emd_interpolant(target, num_classes, hot);

    // Distance-preserving perturbation: move mass between two classes that sit
    // on the same side of 1/C. The transfer is capped at half the smaller gap
    // to 1/C (no sign flip) and at the donor's own mass (no negative entries),
    // so the sum of |d_i - 1/C| is unchanged.
    double uniform_p = 1.0 / num_classes;
    std::vector<int> below;
    for (int i = 0; i < num_classes; ++i) {
        if (d.probs[i] < uniform_p) {
            below.push_back(i);
        }
    }
    if (below.size() >= 2) {
        int from = below[rng.uniform_int(0, static_cast<int>(below.size()) - 1)];
        int to = from;
        while (to == from) {
            to = below[rng.uniform_int(0, static_cast<int>(below.size()) - 1)];
        }
        double margin = std::min(uniform_p - d.probs[from], uniform_p - d.probs[to]);
        double cap = std::min(0.5 * margin, d.probs[from]);
        double eps = cap * rng.uniform01();
        d.probs[from] -= eps;
        d.probs[to] += eps;
    }
    return d;
}

LabeledDataset gen_synthetic(int num_classes, int feature_dim, int per_class,
                             double separation, uint64_t seed) {
    if (num_classes <= 0 || feature_dim <= 0 || per_class <= 0) {
        throw ConfigError("synthetic dataset dimensions must be positive");
    }
    if (separation < 0.0) {
        throw ConfigError("class separation must be non-negative", "dataset.separation");
    }
    Rng rng(seed);

    std::vector<std::vector<double>> means(num_classes, std::vector<double>(feature_dim));
    for (auto& mean : means) {
        double norm_sq = 0.0;
        for (double& v : mean) {
            v = rng.normal();
            norm_sq += v * v;
        }
        double scale = separation / std::sqrt(norm_sq);
        for (double& v : mean) {
            v *= scale;
        }
    }

    LabeledDataset data;
    data.num_classes = num_classes;
    data.feature_dim = feature_dim;
    data.features.reserve(static_cast<size_t>(num_classes) * per_class * feature_dim);
    data.labels.reserve(static_cast<size_t>(num_classes) * per_class);
    for (int c = 0; c < num_classes; ++c) {
        for (int j = 0; j < per_class; ++j) {
            for (int k = 0; k < feature_dim; ++k) {
                data.features.push_back(means[c][k] + rng.normal());
            }
            data.labels.push_back(c);
        }
    }
    return data;
}

ClientShard make_shard(int client_id, const LabeledDataset& source,
                       std::vector<int64_t> indices) {
    ClientShard shard;
    shard.client_id = client_id;
    shard.data = source.subset(indices);
    shard.n = shard.data.size();
    shard.dist = empirical_distribution(shard.data);
    shard.indices = std::move(indices);
    return shard;
}

LabeledDataset pool_shards(const std::vector<ClientShard>& shards) {
    if (shards.empty()) {
        throw DataError("cannot pool an empty shard list");
    }
    LabeledDataset pooled = shards.front().data;
    for (size_t k = 1; k < shards.size(); ++k) {
        pooled.append(shards[k].data);
    }
    return pooled;
}

std::pair<std::vector<int64_t>, std::vector<int64_t>>
stratified_split(const LabeledDataset& data, double fraction, uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0) {
        throw ConfigError("split fraction must lie in [0, 1)");
    }
    std::vector<std::vector<int64_t>> by_class(data.num_classes);
    for (int i = 0; i < data.size(); ++i) {
        by_class[data.labels[i]].push_back(i);
    }
    Rng rng(seed);
    std::vector<int64_t> rest;
    std::vector<int64_t> held;
    for (auto& pool : by_class) {
        rng.shuffle(pool);
        auto take = static_cast<size_t>(std::llround(fraction * static_cast<double>(pool.size())));
        held.insert(held.end(), pool.begin(), pool.begin() + take);
        rest.insert(rest.end(), pool.begin() + take, pool.end());
    }
    std::sort(rest.begin(), rest.end());
    std::sort(held.begin(), held.end());
    return {rest, held};
}

} // namespace fedskew

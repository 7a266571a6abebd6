#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fedskew {

/// Feature matrix plus integer labels over `num_classes` classes.
/// Features are stored row-major, one example per row.
struct LabeledDataset {
    int num_classes = 0;
    int feature_dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }

    std::span<const double> example(int i) const {
        return {features.data() + static_cast<size_t>(i) * feature_dim,
                static_cast<size_t>(feature_dim)};
    }

    /// New dataset holding the given rows, in order.
    LabeledDataset subset(std::span<const int64_t> indices) const;

    /// Appends all examples of `other`; class counts and feature dims must match.
    void append(const LabeledDataset& other);
};

/// Throws DataError/ShapeError unless labels are in range and features finite.
void validate(const LabeledDataset& data);

/// Probability vector p(y = i) over the label classes.
struct ClassDistribution {
    std::vector<double> probs;

    int size() const { return static_cast<int>(probs.size()); }
};

ClassDistribution uniform_distribution(int num_classes);

/// Empirical label frequencies of the dataset.
ClassDistribution empirical_distribution(const LabeledDataset& data);

/// Per-class label counts.
std::vector<int> class_counts(const LabeledDataset& data);

/// Distance between two class distributions: the sum over classes of the
/// absolute probability difference. Zero iff equal, maximum 2(1 - 1/C)
/// against a uniform reference.
double emd(const ClassDistribution& p, const ClassDistribution& q);

/// Cyclic rotation of the probability vector by `by` positions.
ClassDistribution shift_distribution(const ClassDistribution& d, int by);

/// The interpolated distribution (1-t)*uniform + t*onehot(hot_class) with
/// t chosen so its distance to uniform equals `target`. Exposed separately
/// because tests pin its closed form; gen_target_emd_distribution builds on it.
ClassDistribution target_emd_interpolant(double target, int num_classes, int hot_class);

/// A seeded class distribution whose distance to uniform is `target` within
/// 1e-6. Distinct seeds give distinct distributions at the same distance:
/// after interpolating toward a seeded one-hot, a seeded distance-preserving
/// mass transfer is applied inside the below-uniform classes.
ClassDistribution gen_target_emd_distribution(double target, int num_classes, uint64_t seed);

/// Gaussian blobs: one unit-variance cluster per class, means at
/// separation times a seeded random unit direction. Examples are laid out
/// class by class, exactly per_class each.
LabeledDataset gen_synthetic(int num_classes, int feature_dim, int per_class,
                             double separation, uint64_t seed);

/// One client's slice of a source dataset.
struct ClientShard {
    int client_id = 0;
    LabeledDataset data;
    int n = 0;                    // == data.size()
    ClassDistribution dist;       // empirical label frequencies of data
    std::vector<int64_t> indices; // provenance: positions in the source dataset
};

ClientShard make_shard(int client_id, const LabeledDataset& source,
                       std::vector<int64_t> indices);

/// Concatenation of all shard data in client order.
LabeledDataset pool_shards(const std::vector<ClientShard>& shards);

/// Seeded stratified split: the second part receives round(fraction * count)
/// examples of every class. Returns (rest_indices, held_out_indices).
std::pair<std::vector<int64_t>, std::vector<int64_t>>
stratified_split(const LabeledDataset& data, double fraction, uint64_t seed);

} // namespace fedskew

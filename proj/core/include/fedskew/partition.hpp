#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedskew/dataset.hpp"

namespace fedskew {

enum class PartitionKind {
    Iid,         // seeded uniform shuffle, contiguous split
    KClassNonIid,// sort by label, cut into K*c partitions, deal c per client
    TargetEmd,   // per-client label counts from shifted target-distance distributions
};

struct PartitionSpec {
    PartitionKind kind = PartitionKind::Iid;
    int clients = 1;            // K
    int classes_per_client = 1; // c, for KClassNonIid
    double target_emd = 0.0;    // for TargetEmd
    uint64_t seed = 0;
};

/// Splits the dataset into disjoint client shards per the spec kind.
///
/// Iid and KClassNonIid cover the whole dataset; TargetEmd first trims every
/// class pool to the smallest class count so the cyclic-shift construction
/// lands on balanced pools, then covers the trimmed set exactly. Shard
/// indices always refer to rows of the input dataset.
std::vector<ClientShard> partition(const LabeledDataset& data, const PartitionSpec& spec);

/// JSON manifest of the shards: [{"client_id": k, "indices": [...]}, ...].
std::string shard_manifest(const std::vector<ClientShard>& shards);

} // namespace fedskew

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedskew/analysis.hpp"
#include "fedskew/federation.hpp"
#include "fedskew/partition.hpp"
#include "fedskew/sharing.hpp"

namespace fedskew {

/// Where the training and test sets come from: seeded Gaussian blobs or a
/// pair of IDX image/label files.
struct DatasetSection {
    std::string kind; // "synthetic" or "idx"
    // synthetic
    int classes = 10;
    int feature_dim = 16;
    int per_class = 400;      // training examples per class
    int test_per_class = 100; // test examples per class
    double separation = 6.0;
    // idx
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
};

struct ModelSection {
    std::vector<int> hidden; // hidden layer widths; empty = linear softmax
    double init_scale = 1.0;
};

struct SweepSection {
    std::vector<double> grid;
    int reps = 5;
};

struct VerifySection {
    double eta = 0.1;
    int steps_per_sync = 2;
    int sync_rounds = 3;
    ProbeSpec probe;
    std::optional<std::vector<double>> lambda_override;
};

struct ShareSection {
    double beta = 0.1;
    std::vector<double> alphas{1.0};
    int warmup_steps = 0;
    double holdout_fraction = 0.2; // stratified slice reserved for the share
};

/// Parsed experiment file. Every nested seed derives from `seed` through
/// fixed component names, so a config plus the subcommand fully determines
/// the outputs.
struct ExperimentConfig {
    int version = 1;
    uint64_t seed = 0;
    std::string output_dir = "out";
    DatasetSection dataset;
    ModelSection model;
    PartitionSpec partition;
    std::optional<FedConfig> fed; // required by train, sweep-emd, and share
    std::optional<SweepSection> sweep;
    std::optional<VerifySection> verify;
    std::optional<ShareSection> share;
};

/// Strict parse: versioned, unknown fields rejected, every error names the
/// offending field. Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);

/// Reads and parses the file; throws IoError if it cannot be read.
ExperimentConfig load_config(const std::string& path);

// Subcommand drivers. Each writes its CSV artifacts plus a .meta.json
// sidecar with the resolved config (derived seeds included) next to every
// CSV, and returns the process exit code: 0 success, 1 assertion or bound
// failure, 2 config error, 3 I/O error. Module errors are thrown, not
// mapped; the CLI wrapper turns them into exit codes.
int cmd_train(const ExperimentConfig& cfg);
int cmd_sweep_emd(const ExperimentConfig& cfg);
int cmd_verify_bound(const ExperimentConfig& cfg);
int cmd_share(const ExperimentConfig& cfg);

/// Dispatches "train" / "sweep-emd" / "verify-bound" / "share".
int run_command(const std::string& name, const ExperimentConfig& cfg);

/// Exit code for an exception type, per the contract above.
int exit_code_for(const std::exception& e);

/// Machine-readable error report: {"error": {"kind", "message", "field"}}.
std::string error_json(const std::exception& e);

} // namespace fedskew

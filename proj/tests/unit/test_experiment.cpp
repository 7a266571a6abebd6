#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "fedskew/errors.hpp"
#include "fedskew/experiment.hpp"

using namespace fedskew;
namespace fs = std::filesystem;

namespace {

std::string minimal_train_config(const std::string& out_dir) {
    nlohmann::json j{
        {"version", 1},
        {"seed", 42},
        {"output_dir", out_dir},
        {"dataset",
         {{"kind", "synthetic"},
          {"classes", 3},
          {"feature_dim", 4},
          {"per_class", 20},
          {"test_per_class", 5},
          {"separation", 3.0}}},
        {"model", {{"hidden", nlohmann::json::array({6})}, {"init_scale", 1.0}}},
        {"partition", {{"kind", "iid"}, {"clients", 3}}},
        {"fed",
         {{"batch_size", 5},
          {"local_epochs", 1},
          {"eta0", 0.1},
          {"decay", 0.99},
          {"rounds", 2}}}};
    return j.dump();
}

std::string config_field(const std::function<void()>& thrower) {
    try {
        thrower();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    fs::path dir;
    explicit TempDir(const std::string& tag) {
        dir = fs::temp_directory_path() /
              ("fedskew-exp-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
};

} // namespace

TEST_CASE("parse_config accepts a full valid config") {
    ExperimentConfig cfg = parse_config(minimal_train_config("somewhere"));
    CHECK(cfg.version == 1);
    CHECK(cfg.seed == 42);
    CHECK(cfg.output_dir == "somewhere");
    CHECK(cfg.dataset.kind == "synthetic");
    CHECK(cfg.dataset.classes == 3);
    CHECK(cfg.dataset.per_class == 20);
    CHECK(cfg.model.hidden == std::vector<int>{6});
    CHECK(cfg.partition.kind == PartitionKind::Iid);
    CHECK(cfg.partition.clients == 3);
    REQUIRE(cfg.fed.has_value());
    CHECK(cfg.fed->batch_size == 5);
    CHECK(cfg.fed->eta0 == 0.1);
    CHECK(cfg.fed->decay == 0.99);
    CHECK(cfg.fed->rounds == 2);
    CHECK_FALSE(cfg.sweep.has_value());
    CHECK_FALSE(cfg.verify.has_value());
    CHECK_FALSE(cfg.share.has_value());
}

TEST_CASE("parse_config fills defaults for optional knobs") {
    nlohmann::json j{
        {"version", 1},
        {"seed", 7},
        {"dataset", {{"kind", "synthetic"}}},
        {"partition", {{"kind", "k-class"}, {"clients", 10}, {"classes_per_client", 2}}},
        {"verify", {{"eta", 0.2}}},
        {"sweep", {{"grid", nlohmann::json::array({0.0, 0.9})}}},
        {"share", {{"beta", 0.1}}}};
    ExperimentConfig cfg = parse_config(j.dump());
    CHECK(cfg.output_dir == "out");
    CHECK(cfg.dataset.classes == 10);
    CHECK(cfg.dataset.separation == 6.0);
    CHECK(cfg.model.hidden.empty());
    CHECK(cfg.model.init_scale == 1.0);
    CHECK(cfg.partition.kind == PartitionKind::KClassNonIid);
    CHECK(cfg.partition.classes_per_client == 2);
    REQUIRE(cfg.verify.has_value());
    CHECK(cfg.verify->eta == 0.2);
    CHECK(cfg.verify->steps_per_sync == 2);
    CHECK(cfg.verify->sync_rounds == 3);
    CHECK(cfg.verify->probe.pairs == 64);
    CHECK(cfg.verify->probe.safety_factor == 1.5);
    CHECK_FALSE(cfg.verify->lambda_override.has_value());
    REQUIRE(cfg.sweep.has_value());
    CHECK(cfg.sweep->reps == 5);
    REQUIRE(cfg.share.has_value());
    CHECK(cfg.share->alphas == std::vector<double>{1.0});
    CHECK(cfg.share->warmup_steps == 0);
    CHECK(cfg.share->holdout_fraction == 0.2);
}

TEST_CASE("parse_config errors carry the offending field path") {
    // not JSON at all
    CHECK_THROWS_AS((void)parse_config("not json"), ConfigError);

    // wrong version
    nlohmann::json v2 = nlohmann::json::parse(minimal_train_config("x"));
    v2["version"] = 2;
    CHECK(config_field([&] { (void)parse_config(v2.dump()); }) == "version");

    // unknown top-level field
    nlohmann::json extra = nlohmann::json::parse(minimal_train_config("x"));
    extra["bogus"] = 1;
    CHECK(config_field([&] { (void)parse_config(extra.dump()); }) == "bogus");

    // unknown nested field
    nlohmann::json nested = nlohmann::json::parse(minimal_train_config("x"));
    nested["fed"]["momentum"] = 0.9;
    CHECK(config_field([&] { (void)parse_config(nested.dump()); }) == "fed.momentum");

    // a knob that belongs to another partition kind is rejected
    nlohmann::json wrong_kind = nlohmann::json::parse(minimal_train_config("x"));
    wrong_kind["partition"]["classes_per_client"] = 2;
    CHECK(config_field([&] { (void)parse_config(wrong_kind.dump()); }) ==
          "partition.classes_per_client");

    // missing required sections / fields
    nlohmann::json no_dataset = nlohmann::json::parse(minimal_train_config("x"));
    no_dataset.erase("dataset");
    CHECK(config_field([&] { (void)parse_config(no_dataset.dump()); }) == "dataset");

    nlohmann::json no_batch = nlohmann::json::parse(minimal_train_config("x"));
    no_batch["fed"].erase("batch_size");
    CHECK(config_field([&] { (void)parse_config(no_batch.dump()); }) == "fed.batch_size");

    // type errors
    nlohmann::json bad_seed = nlohmann::json::parse(minimal_train_config("x"));
    bad_seed["seed"] = -1;
    CHECK(config_field([&] { (void)parse_config(bad_seed.dump()); }) == "seed");

    nlohmann::json bad_eta = nlohmann::json::parse(minimal_train_config("x"));
    bad_eta["fed"]["eta0"] = "fast";
    CHECK(config_field([&] { (void)parse_config(bad_eta.dump()); }) == "fed.eta0");

    nlohmann::json bad_kind = nlohmann::json::parse(minimal_train_config("x"));
    bad_kind["dataset"]["kind"] = "parquet";
    CHECK(config_field([&] { (void)parse_config(bad_kind.dump()); }) == "dataset.kind");

    // the verify block validates its own knobs
    nlohmann::json bad_verify = nlohmann::json::parse(minimal_train_config("x"));
    bad_verify["verify"] = {{"eta", -0.5}};
    CHECK(config_field([&] { (void)parse_config(bad_verify.dump()); }) == "verify.eta");
}

TEST_CASE("parse_config reads idx dataset sections and lambda overrides") {
    nlohmann::json j{
        {"version", 1},
        {"seed", 3},
        {"dataset",
         {{"kind", "idx"},
          {"train_images", "a.idx"},
          {"train_labels", "b.idx"},
          {"test_images", "c.idx"},
          {"test_labels", "d.idx"}}},
        {"partition", {{"kind", "target-emd"}, {"clients", 5}, {"target_emd", 0.9}}},
        {"verify", {{"lambda_override", nlohmann::json::array({1.0, 2.0})}}}};
    ExperimentConfig cfg = parse_config(j.dump());
    CHECK(cfg.dataset.kind == "idx");
    CHECK(cfg.dataset.train_images == "a.idx");
    CHECK(cfg.partition.kind == PartitionKind::TargetEmd);
    CHECK(cfg.partition.target_emd == 0.9);
    REQUIRE(cfg.verify.has_value());
    REQUIRE(cfg.verify->lambda_override.has_value());
    CHECK(*cfg.verify->lambda_override == std::vector<double>{1.0, 2.0});

    nlohmann::json missing = j;
    missing["dataset"].erase("test_labels");
    CHECK(config_field([&] { (void)parse_config(missing.dump()); }) ==
          "dataset.test_labels");
}

TEST_CASE("load_config reports unreadable files as IoError") {
    CHECK_THROWS_AS((void)load_config("/nonexistent/nowhere.json"), IoError);
}

TEST_CASE("exit codes and error reports follow the contract") {
    ConfigError config_err("bad knob", "fed.rounds");
    IoError io_err("cannot read");
    DataError data_err("labels broken");
    ShapeError shape_err("dims off");

    CHECK(exit_code_for(config_err) == 2);
    CHECK(exit_code_for(io_err) == 3);
    CHECK(exit_code_for(data_err) == 1);
    CHECK(exit_code_for(shape_err) == 1);

    nlohmann::json parsed = nlohmann::json::parse(error_json(config_err));
    CHECK(parsed["error"]["kind"] == "config");
    CHECK(parsed["error"]["message"] == "bad knob");
    CHECK(parsed["error"]["field"] == "fed.rounds");

    nlohmann::json io_parsed = nlohmann::json::parse(error_json(io_err));
    CHECK(io_parsed["error"]["kind"] == "io");
    CHECK_FALSE(io_parsed["error"].contains("field"));

    CHECK(nlohmann::json::parse(error_json(data_err))["error"]["kind"] == "data");
    CHECK(nlohmann::json::parse(error_json(shape_err))["error"]["kind"] == "shape");
}

TEST_CASE("run_command dispatches and rejects unknown names") {
    ExperimentConfig cfg = parse_config(minimal_train_config("unused"));
    CHECK_THROWS_AS((void)run_command("fit", cfg), ConfigError);

    // subcommands guard their required sections
    CHECK(config_field([&] { (void)run_command("sweep-emd", cfg); }) == "sweep");
    CHECK(config_field([&] { (void)run_command("verify-bound", cfg); }) == "verify");
    CHECK(config_field([&] { (void)run_command("share", cfg); }) == "share");

    nlohmann::json no_fed = nlohmann::json::parse(minimal_train_config("unused"));
    no_fed.erase("fed");
    ExperimentConfig bare = parse_config(no_fed.dump());
    CHECK(config_field([&] { (void)run_command("train", bare); }) == "fed");
}

TEST_CASE("cmd_train writes its artifact set deterministically") {
    TempDir tmp("train");
    ExperimentConfig cfg = parse_config(minimal_train_config((tmp.dir / "a").string()));

    CHECK(run_command("train", cfg) == 0);
    for (const char* name :
         {"rounds.csv", "rounds.meta.json", "rounds.json", "shards.json", "summary.json"}) {
        CHECK(fs::exists(tmp.dir / "a" / name));
    }

    std::string rounds = slurp(tmp.dir / "a" / "rounds.csv");
    CHECK(rounds.rfind("round,eta,acc_fedavg,acc_sgd\n", 0) == 0);
    // header + init record + 2 rounds
    CHECK(std::count(rounds.begin(), rounds.end(), '\n') == 4);
    CHECK(rounds.find("\r") == std::string::npos);

    // a second run into a different directory is byte-identical
    ExperimentConfig cfg_b = cfg;
    cfg_b.output_dir = (tmp.dir / "b").string();
    CHECK(run_command("train", cfg_b) == 0);
    CHECK(slurp(tmp.dir / "b" / "rounds.csv") == rounds);
    CHECK(slurp(tmp.dir / "b" / "rounds.json") == slurp(tmp.dir / "a" / "rounds.json"));
    CHECK(slurp(tmp.dir / "b" / "shards.json") == slurp(tmp.dir / "a" / "shards.json"));

    // the sidecar records the resolved config including derived seeds
    nlohmann::json meta = nlohmann::json::parse(slurp(tmp.dir / "a" / "rounds.meta.json"));
    CHECK(meta["command"] == "train");
    CHECK(meta["artifact"] == "rounds.csv");
    CHECK(meta["seed"] == 42);
    CHECK(meta["derived_seeds"].contains("dataset"));
    CHECK(meta["derived_seeds"].contains("fed"));
    CHECK(meta["fed"]["rounds"] == 2);

    // a different seed changes the numbers
    ExperimentConfig cfg_c = cfg;
    cfg_c.seed = 43;
    cfg_c.output_dir = (tmp.dir / "c").string();
    CHECK(run_command("train", cfg_c) == 0);
    CHECK(slurp(tmp.dir / "c" / "rounds.csv") != rounds);

    // shard manifest indices parse back and cover the training set
    nlohmann::json shards = nlohmann::json::parse(slurp(tmp.dir / "a" / "shards.json"));
    REQUIRE(shards.size() == 3);
    size_t covered = 0;
    for (const auto& entry : shards) covered += entry["indices"].size();
    CHECK(covered == 60);
}

TEST_CASE("cmd_train surfaces infeasible configs as ConfigError") {
    TempDir tmp("badtrain");
    nlohmann::json j = nlohmann::json::parse(minimal_train_config((tmp.dir / "x").string()));
    j["fed"]["batch_size"] = 50; // shard size is 20
    ExperimentConfig cfg = parse_config(j.dump());
    CHECK(config_field([&] { (void)run_command("train", cfg); }) == "fed.batch_size");
}

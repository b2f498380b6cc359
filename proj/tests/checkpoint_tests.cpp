#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "arcade/checkpoint.hpp"
#include "test_support.hpp"

using namespace arcade;

namespace {

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Checkpoint<double> sample_checkpoint(std::uint64_t seed) {
    Checkpoint<double> ckpt;
    ckpt.learner = LearnerKind::arcade_m;
    ckpt.spec = MlpSpec{2, {5, 3}};
    const MlpModel<double> model(ckpt.spec);
    Rng rng(seed);
    ckpt.theta = model.init_params(rng);
    LearningRateSet<double> lrs;
    for (std::size_t i = 0; i < ckpt.theta.values.size(); ++i)
        lrs.raw.push_back(rng.uniform(-0.5, 1.5));
    ckpt.alpha = lrs;
    ckpt.meta_config.seed = seed;
    ckpt.meta_config.L = 3;
    ckpt.rng_state = rng.state_string();
    ckpt.best_iteration = 120;
    ckpt.best_val_retained = 0.87;
    return ckpt;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("checkpoint: exact round trip", "[checkpoint]") {
    const auto ckpt = sample_checkpoint(11);
    const std::string path = temp_file("arcade_ckpt.json");
    save_checkpoint(ckpt, path);
    const auto loaded = load_checkpoint<double>(path);
    CHECK(loaded.learner == ckpt.learner);
    CHECK(loaded.spec == ckpt.spec);
    CHECK(loaded.theta.values == ckpt.theta.values);  // bit-exact
    CHECK(loaded.theta.layer_map == ckpt.theta.layer_map);
    REQUIRE(loaded.alpha.has_value());
    CHECK(loaded.alpha->raw == ckpt.alpha->raw);
    CHECK(loaded.meta_config.L == 3);
    CHECK(loaded.rng_state == ckpt.rng_state);
    CHECK(loaded.best_iteration == 120);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: serialization bytes are deterministic", "[checkpoint]") {
    const auto ckpt = sample_checkpoint(12);
    const std::string p1 = temp_file("arcade_ckpt_a.json");
    const std::string p2 = temp_file("arcade_ckpt_b.json");
    save_checkpoint(ckpt, p1);
    save_checkpoint(ckpt, p2);
    CHECK(slurp(p1) == slurp(p2));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("checkpoint: scalar-rate learners store no alpha", "[checkpoint]") {
    auto ckpt = sample_checkpoint(13);
    ckpt.learner = LearnerKind::seqfomaml;
    ckpt.alpha.reset();
    const std::string path = temp_file("arcade_ckpt_theta_only.json");
    save_checkpoint(ckpt, path);
    CHECK(slurp(path).find("alpha_raw") == std::string::npos);
    const auto loaded = load_checkpoint<double>(path);
    CHECK_FALSE(loaded.alpha.has_value());
    CHECK(loaded.learner == LearnerKind::seqfomaml);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: precision, shape and version mismatches are rejected", "[checkpoint]") {
    const auto ckpt = sample_checkpoint(14);
    const std::string path = temp_file("arcade_ckpt_bad.json");
    save_checkpoint(ckpt, path);
    CHECK_THROWS_AS(load_checkpoint<float>(path), CheckpointError);

    nlohmann::json j;
    {
        std::ifstream in(path);
        in >> j;
    }

    {  // theta shorter than the layer map demands
        nlohmann::json bad = j;
        bad["theta"].erase(bad["theta"].size() - 1);
        std::ofstream out(path);
        out << bad.dump(2);
    }
    CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);

    {  // model spec disagrees with the stored layer map
        nlohmann::json bad = j;
        bad["model"]["hidden"] = {5, 4};
        std::ofstream out(path);
        out << bad.dump(2);
    }
    CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);

    {  // future version
        nlohmann::json bad = j;
        bad["version"] = 999;
        std::ofstream out(path);
        out << bad.dump(2);
    }
    CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);

    {  // not a checkpoint at all
        std::ofstream out(path);
        out << "{\"hello\": 1}";
    }
    CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);

    {  // invalid JSON
        std::ofstream out(path);
        out << "not json";
    }
    CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);

    CHECK_THROWS_AS(load_checkpoint<double>(temp_file("arcade_no_such_ckpt.json")), IoError);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint: float precision round trip", "[checkpoint]") {
    Checkpoint<float> ckpt;
    ckpt.learner = LearnerKind::arcade_h;
    ckpt.spec = MlpSpec{2, {4}};
    const MlpModel<float> model(ckpt.spec);
    Rng rng(15);
    ckpt.theta = model.init_params(rng);
    ckpt.alpha = LearningRateSet<float>::constant(ckpt.theta.values.size(), 0.1);
    ckpt.rng_state = "s";
    const std::string path = temp_file("arcade_ckpt_float.json");
    save_checkpoint(ckpt, path);
    const auto loaded = load_checkpoint<float>(path);
    CHECK(loaded.theta.values == ckpt.theta.values);
    CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);
    std::filesystem::remove(path);
}

#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "cmbpo/config.hpp"

using namespace cmbpo;

TEST_CASE("empty object yields the default experiment") {
    ExperimentConfig cfg = ExperimentConfig::from_json(nlohmann::json::object());
    CHECK(cfg.train.episodes == 100);
    CHECK(cfg.train.horizon == 200);
    CHECK(cfg.train.warmup_steps == 2000);
    CHECK(cfg.eval_episodes == 100);
    CHECK(cfg.env.sigma_x == 0.1);
    CHECK(cfg.env.sigma_z == 0.1);
    CHECK(cfg.env.sigma_r == 0.1);
    CHECK(cfg.train.sac.gamma == 0.99);
    CHECK(cfg.train.discovery_alpha == 0.01);
    CHECK(cfg.train.scm.ensemble_size == 5);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    REQUIRE(cfg.eval_shifts.size() == 3);
    CHECK(cfg.eval_shifts[0] == Shift::Id);
    CHECK(cfg.eval_shifts[1] == Shift::NearOod);
    CHECK(cfg.eval_shifts[2] == Shift::FarOod);
}

TEST_CASE("overrides land in the right fields") {
    nlohmann::json j = {
        {"train", {{"variant", "mbpo"}, {"episodes", 7}, {"mix_initial", 0.8}}},
        {"sac", {{"gamma", 0.95}, {"hidden", {32, 32}}}},
        {"model", {{"ensemble_size", 3}, {"activation", "relu"}}},
        {"discovery", {{"alpha", 0.05}, {"oracle_ci", true}}},
        {"eval", {{"episodes", 10}, {"shifts", {"id", "far"}}}},
        {"seeds", {42}},
        {"out_dir", "runs/x"}};
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    CHECK(cfg.train.variant == Variant::Mbpo);
    CHECK(cfg.train.episodes == 7);
    CHECK(cfg.train.mix_initial == 0.8);
    CHECK(cfg.train.sac.gamma == 0.95);
    CHECK(cfg.train.sac.hidden == std::vector<int>{32, 32});
    CHECK(cfg.train.scm.ensemble_size == 3);
    CHECK(cfg.train.scm.activation == Activation::Relu);
    CHECK(cfg.train.discovery_alpha == 0.05);
    CHECK(cfg.train.oracle_ci);
    CHECK(cfg.eval_episodes == 10);
    REQUIRE(cfg.eval_shifts.size() == 2);
    CHECK(cfg.eval_shifts[1] == Shift::FarOod);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{42});
    CHECK(cfg.out_dir == "runs/x");
}

TEST_CASE("unknown keys are rejected and all offenders listed") {
    nlohmann::json j = {{"trian", {{"episodes", 5}}},
                        {"sac", {{"gama", 0.9}, {"lr", 1e-3}}},
                        {"eval", {{"episoddes", 10}}}};
    try {
        ExperimentConfig::from_json(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("trian") != std::string::npos);
        CHECK(msg.find("sac.gama") != std::string::npos);
        CHECK(msg.find("eval.episoddes") != std::string::npos);
    }
}

TEST_CASE("semantic validation") {
    SUBCASE("negative horizon") {
        nlohmann::json j = {{"train", {{"horizon", -5}}}};
        CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
    }
    SUBCASE("empty seeds") {
        nlohmann::json j = {{"seeds", nlohmann::json::array()}};
        CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
    }
    SUBCASE("bad variant name") {
        nlohmann::json j = {{"train", {{"variant", "dyna"}}}};
        CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::runtime_error);
    }
    SUBCASE("bad activation name") {
        nlohmann::json j = {{"model", {{"activation", "swish"}}}};
        CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
    }
    SUBCASE("negative noise scale") {
        nlohmann::json j = {{"env", {{"sigma_x", -0.1}}}};
        CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::runtime_error);
    }
}

TEST_CASE("to_json then from_json is stable") {
    nlohmann::json j = {{"train", {{"episodes", 12}, {"variant", "cmbpo"}}},
                        {"eval", {{"near_ood_z", 0.25}}}};
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.train.episodes == 12);
    CHECK(back.near_ood_z == 0.25);
    CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("load_config") {
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    }
    SUBCASE("malformed json") {
        std::string path = "bad_config_test.json";
        std::ofstream(path) << "{ not json";
        CHECK_THROWS_AS(load_config(path), ConfigError);
        std::remove(path.c_str());
    }
    SUBCASE("valid file round-trips") {
        std::string path = "ok_config_test.json";
        std::ofstream(path) << R"({"train": {"episodes": 4}})";
        ExperimentConfig cfg = load_config(path);
        CHECK(cfg.train.episodes == 4);
        std::remove(path.c_str());
    }
}

#include <string>

#include "doctest.h"
#include "normpert/config.hpp"

using namespace normpert;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("empty object gives defaults") {
    const auto cfg = parse_config("{}");
    CHECK(cfg == ExperimentConfig{});
    CHECK(cfg.training.learning_rate == 0.02);
    CHECK(cfg.network.stages.size() == 4);
  }

  TEST_CASE("round trip through json") {
    ExperimentConfig cfg;
    cfg.dataset.benchmark.seed = 99;
    cfg.training.epochs = 3;
    cfg.training.precision = Precision::float64;
    NpSiteConfig s;
    s.stage = 2;
    s.probability = 0.25;
    s.noise = NoiseSpec::beta_scaled(0.75, 0.75);
    s.granularity = Granularity::spatial;
    cfg.np.sites = {s};
    cfg.np.augment = true;
    cfg.diagnostics.kernel = KernelSpec{KernelFamily::rbf, 0.5};
    cfg.diagnostics.embedding = Embedding::zscore;
    cfg.diagnostics.sweep.noises = {NoiseSpec::uniform(0.0, 2.0)};
    cfg.diagnostics.sweep.placements = {{1}, {3}};
    cfg.output_dir = "runs/x";
    const auto back = parse_config(dump_config(cfg));
    CHECK(back == cfg);
    CHECK(config_hash(back) == config_hash(cfg));
    cfg.training.seed = 2;
    CHECK(config_hash(back) != config_hash(cfg));
    CHECK(config_hash(cfg).size() == 16);
  }

  TEST_CASE("np plus switches every site") {
    const auto cfg = parse_config(R"({"np": {"sites": [{"stage": 1}, {"stage": 2}], "plus": true}})");
    for (const auto& s : cfg.effective_network().np_sites) CHECK(s.mode == NpMode::np_plus);
    CHECK(cfg.network.np_sites.empty());
  }

  TEST_CASE("unknown keys are rejected with their path") {
    CHECK(contains(error_of(R"({"trainig": {}})"), "trainig: unknown key"));
    CHECK(contains(error_of(R"({"training": {"lr": 0.1}})"), "training.lr: unknown key"));
    CHECK(contains(error_of(R"({"np": {"sites": [{"stage": 1, "sigma": 1}]}})"), "np.sites[0].sigma"));
  }

  TEST_CASE("type and range errors name the field") {
    CHECK(contains(error_of(R"({"training": {"epochs": "ten"}})"), "training.epochs"));
    CHECK(contains(error_of(R"({"training": {"epochs": -1}})"), "training.epochs"));
    CHECK(contains(error_of(R"({"training": {"precision": "half"}})"), "training.precision"));
    CHECK(contains(error_of(R"({"np": {"sites": [{"stage": 5}]}})"), "np"));
    CHECK(contains(error_of(R"({"np": {"sites": [{"probability": 1.5}]}})"), "np"));
    CHECK(contains(error_of(R"({"np": {"sites": [{"noise": {"family": "cauchy"}}]}})"), "np.sites[0].noise"));
    CHECK(contains(error_of(R"({"dataset": {"image_size": 16}})"), "network.input_size"));
    CHECK(contains(error_of(R"({"diagnostics": {"gap_target": "snow"}})"), "diagnostics"));
    CHECK(contains(error_of(R"({"diagnostics": {"transfer_fraction": 2}})"), "transfer_fraction"));
    CHECK(contains(error_of(R"([1, 2])"), "expected an object"));
  }

  TEST_CASE("syntax errors report line and column") {
    const auto msg = error_of("{\n  \"training\": {\n    \"epochs\": 3,\n  }\n}");
    CHECK(contains(msg, "line 4"));
    CHECK(contains(msg, "column"));
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  }
}

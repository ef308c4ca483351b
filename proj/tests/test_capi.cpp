#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "whdspot/whdspot.h"

namespace fs = std::filesystem;

TEST_CASE("status codes and errors") {
  CHECK(std::string(whdspot_status_name(WHDSPOT_OK)) == "ok");
  whdspot_config* config = nullptr;
  REQUIRE(whdspot_config_create(&config) == WHDSPOT_OK);
  CHECK(whdspot_config_set(config, "bogus", "1") == WHDSPOT_ERR_INVALID_ARGUMENT);
  CHECK(std::string(whdspot_last_error()).find("bogus") != std::string::npos);
  CHECK(whdspot_config_set(nullptr, "lr", "1") == WHDSPOT_ERR_INVALID_ARGUMENT);
  CHECK(whdspot_config_load(config, "/nonexistent/whdspot.txt") != WHDSPOT_OK);

  REQUIRE(whdspot_config_set(config, "lr", "0.25") == WHDSPOT_OK);
  char buffer[8];
  size_t length = 0;
  REQUIRE(whdspot_config_get(config, "lr", buffer, sizeof buffer, &length) == WHDSPOT_OK);
  CHECK(std::string(buffer) == "0.25");
  CHECK(length == 4);
  char tiny[2] = {'x', 0};
  length = 0;
  CHECK(whdspot_config_get(config, "lr", tiny, sizeof tiny, &length) == WHDSPOT_OK);
  CHECK(length == 4);
  CHECK(tiny[0] == 'x');

  CHECK(whdspot_config_key_count() > 50);
  CHECK(std::string(whdspot_config_key_name(0)) == "preset");
  CHECK(whdspot_config_key_name(whdspot_config_key_count()) == nullptr);
  whdspot_config_destroy(config);

  double p = 0, r = 0, f = 0;
  REQUIRE(whdspot_precision_recall_f1(3, 1, 2, &p, &r, &f) == WHDSPOT_OK);
  CHECK(p == doctest::Approx(0.75));
  CHECK(r == doctest::Approx(0.6));
  CHECK(f == doctest::Approx(whdspot_f1(0.75, 0.6)));
  CHECK(whdspot_f1(0.0, 1.0) == 0.0);
}

TEST_CASE("pipeline through the shared library") {
  const fs::path dir = fs::temp_directory_path() / "whdspot_test_capi";
  fs::remove_all(dir);
  whdspot_config* config = nullptr;
  REQUIRE(whdspot_config_create(&config) == WHDSPOT_OK);
  for (auto [k, v] : {std::pair{"preset", "easy"}, {"total", "12"}, {"seed", "5"}, {"epochs", "1"},
                      {"validate-every", "1"}, {"bench-reps", "1"}, {"bench-warmup", "0"}})
    REQUIRE(whdspot_config_set(config, k, v) == WHDSPOT_OK);

  const std::string data = (dir / "data").string(), run = (dir / "run").string(), inf = (dir / "inf").string();
  whdspot_gen_summary gen{};
  REQUIRE(whdspot_generate(config, data.c_str(), &gen) == WHDSPOT_OK);
  CHECK(gen.train + gen.val + gen.test == 12);

  int calls = 0;
  whdspot_train_summary ts{};
  REQUIRE(whdspot_train(
              config, data.c_str(), run.c_str(),
              [](const whdspot_epoch_report* report, void* user) {
                ++*static_cast<int*>(user);
                CHECK(report->validated);
              },
              &calls, &ts) == WHDSPOT_OK);
  CHECK(calls == 1);
  CHECK(ts.epochs_run == 1);

  const std::string ckpt = (dir / "run" / "latest.ckpt").string();
  whdspot_infer_summary is{};
  REQUIRE(whdspot_infer(config, ckpt.c_str(), data.c_str(), "test", inf.c_str(), 0, 1, &is) == WHDSPOT_OK);
  CHECK(std::string(is.model) == "unet");
  CHECK(whdspot_infer(config, ckpt.c_str(), data.c_str(), "holdout", inf.c_str(), 0, 1, &is) ==
        WHDSPOT_ERR_INVALID_ARGUMENT);

  whdspot_metrics m{};
  const std::string pred = (dir / "inf" / "pred_points.csv").string();
  REQUIRE(whdspot_evaluate(config, pred.c_str(), data.c_str(), "test", nullptr, inf.c_str(), &m) == WHDSPOT_OK);
  CHECK(std::string(m.model) == "unet");
  CHECK(std::string(m.split) == "test");
  CHECK_FALSE(m.has_tpi);

  whdspot_bench_summary bs{};
  const std::string metrics = (dir / "inf" / "metrics.csv").string();
  REQUIRE(whdspot_bench(config, ckpt.c_str(), data.c_str(), "test", metrics.c_str(), 1, &bs) == WHDSPOT_OK);
  CHECK(bs.tpi_seconds > 0.0);
  CHECK(std::strlen(bs.hardware) > 0);

  whdspot_model* model = nullptr;
  REQUIRE(whdspot_model_load(ckpt.c_str(), &model) == WHDSPOT_OK);
  CHECK(std::string(whdspot_model_architecture(model)) == "unet");
  size_t params = 0;
  REQUIRE(whdspot_model_parameter_count(model, &params) == WHDSPOT_OK);
  CHECK(params > 0);
  std::vector<uint8_t> rgb(64 * 64 * 3, 90);
  std::vector<double> xys(3 * 16);
  size_t count = 0;
  REQUIRE(whdspot_model_detect(model, nullptr, rgb.data(), 64, xys.data(), 16, &count) == WHDSPOT_OK);
  CHECK(whdspot_model_detect(model, nullptr, rgb.data(), 32, xys.data(), 16, &count) == WHDSPOT_ERR_INVALID_ARGUMENT);
  whdspot_model_destroy(model);
  CHECK(whdspot_model_load("/nonexistent.ckpt", &model) == WHDSPOT_ERR_IO);
  whdspot_config_destroy(config);
}

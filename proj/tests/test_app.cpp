#include <filesystem>
#include <fstream>
#include <sstream>

#include "app/commands.hpp"
#include "app/run_config.hpp"
#include "common/error.hpp"
#include "models/model.hpp"
#include "doctest.h"

using namespace whdspot;
using namespace whdspot::app;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("whdspot_test_app_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config() {
  RunConfig c;
  c.apply({{"preset", "easy"}, {"total", "20"}, {"seed", "3"}, {"count-min", "1"}, {"count-max", "4"}});
  return c;
}

// Writes the ground truth of the test split back out as point predictions.
fs::path truth_as_predictions(const fs::path& data, const fs::path& out) {
  std::istringstream in(slurp(data / "test" / "points.csv"));
  std::string line;
  std::getline(in, line);
  std::ofstream f(out);
  f << "filename,x,y,score\n";
  while (std::getline(in, line)) f << line << ",1\n";
  return out;
}

}  // namespace

TEST_CASE("run config keys") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(c.set("no-such-key", "1"), doctest::Contains("no-such-key"), Error);
  CHECK_THROWS_AS(c.set("lr", "fast"), Error);
  c.set("lr", "0.01");
  CHECK(c.get("lr") == "0.01");
  CHECK(c.train.learning_rate == 0.01);

  SUBCASE("preset never overrides explicit scene keys") {
    RunConfig a, b;
    a.apply({{"count-max", "3"}, {"preset", "full"}});
    b.apply({{"preset", "full"}, {"count-max", "3"}});
    CHECK(a.scene.count_max == 3);
    CHECK(a.format() == b.format());
  }
  SUBCASE("save and load round trip") {
    const fs::path dir = scratch("config");
    c.set("model", "network1");
    c.set("window-scales", "8,12");
    c.save(dir / kResolvedConfigName);
    RunConfig d;
    d.load(dir / kResolvedConfigName);
    CHECK(d.format() == c.format());
  }
  SUBCASE("load errors name the line") {
    const fs::path dir = scratch("badconfig");
    std::ofstream(dir / "c.txt") << "# comment\nlr = 1e-3\nbogus = 2\n";
    CHECK_THROWS_WITH_AS(c.load(dir / "c.txt"), doctest::Contains(":3"), Error);
  }
  SUBCASE("loss must fit the model") {
    c.set("loss", "whd");
    c.set("model", "network1");
    CHECK_THROWS_AS(c.train_config(models::Architecture::network1), Error);
    c.set("loss", "auto");
    CHECK(c.train_config(models::Architecture::network1).loss == train::LossKind::cross_entropy);
    CHECK(c.train_config(models::Architecture::unet).loss == train::LossKind::whd);
  }
  CHECK(config_keys().size() > 50);
}

TEST_CASE("gen, eval and metrics file") {
  const fs::path dir = scratch("eval");
  const auto config = small_config();
  const auto summary = run_gen(config, dir / "data");
  CHECK(summary.train + summary.val + summary.test == 20);
  CHECK(summary.test == 2);
  CHECK(fs::exists(dir / "data" / kResolvedConfigName));

  SUBCASE("perfect predictions") {
    const auto pred = truth_as_predictions(dir / "data", dir / "pred_points.csv");
    const auto r = run_eval(config, pred, dir / "data", data::Split::test, "oracle", dir / "out");
    CHECK(r.scores.precision == 1.0);
    CHECK(r.scores.recall == 1.0);
    CHECK(r.scores.f1 == 1.0);
    CHECK(r.counts.rmse == 0.0);
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
    CHECK(r.tp > 0);
    const std::string csv = slurp(dir / "out" / "metrics.csv");
    CHECK(csv.rfind("model,split,precision,recall,f1,count_me,count_mse,count_rmse,count_mae,count_mape,loc_rmse,"
                    "tpi_seconds\n",
                    0) == 0);
    CHECK(csv.find("oracle,test,1.000000,1.000000,1.000000,") != std::string::npos);

    // Re-evaluating replaces the row instead of appending.
    run_eval(config, pred, dir / "data", data::Split::test, "oracle", dir / "out");
    const std::string again = slurp(dir / "out" / "metrics.csv");
    CHECK(std::count(again.begin(), again.end(), '\n') == 2);
  }
  SUBCASE("empty predictions") {
    std::ofstream(dir / "empty.csv") << "filename,x,y,score\n";
    const auto r = run_eval(config, dir / "empty.csv", dir / "data", data::Split::test, "none", dir / "out");
    CHECK(r.scores.precision_undefined);
    CHECK(r.scores.recall == 0.0);
    CHECK(slurp(dir / "out" / "metrics.csv").find("none,test,NA,0.000000,0.000000,") != std::string::npos);
  }
  SUBCASE("predictions for images outside the split are rejected") {
    std::ofstream(dir / "stray.csv") << "filename,x,y,score\nnot_in_split.png,1,1,1\n";
    CHECK_THROWS_WITH_AS(run_eval(config, dir / "stray.csv", dir / "data", data::Split::test, "x", dir / "out"),
                         doctest::Contains("not_in_split.png"), Error);
  }
  SUBCASE("box predictions score by their centres") {
    std::istringstream in(slurp(dir / "data" / "test" / "points.csv"));
    std::string line;
    std::getline(in, line);
    std::ofstream f(dir / "detections.csv");
    f << "filename,x,y,w,h,score\n";
    while (std::getline(in, line)) {
      std::stringstream row(line);
      std::string name, x, y;
      std::getline(row, name, ',');
      std::getline(row, x, ',');
      std::getline(row, y, ',');
      f << name << "," << std::stod(x) - 4 << "," << std::stod(y) - 4 << ",8,8,0.9\n";
    }
    f.close();
    const auto pred = read_predictions(dir / "detections.csv");
    CHECK(pred.boxes);
    const auto r = run_eval(config, dir / "detections.csv", dir / "data", data::Split::test, "boxes", dir / "out");
    CHECK(r.scores.f1 == 1.0);
  }
}

TEST_CASE("train, infer and bench") {
  const fs::path dir = scratch("pipeline");
  auto config = small_config();
  config.apply({{"epochs", "1"}, {"validate-every", "1"}, {"bench-reps", "1"}, {"bench-warmup", "0"}});
  run_gen(config, dir / "data");

  const auto history = run_train(config, dir / "data", dir / "unet");
  CHECK(history.train_loss.size() == 1);
  for (const char* f : {"best.ckpt", "latest.ckpt", "history.csv", kResolvedConfigName})
    CHECK(fs::exists(dir / "unet" / f));

  const auto infer = run_infer(config, dir / "unet" / "latest.ckpt", dir / "data", data::Split::test, dir / "inf");
  CHECK(infer.model == "unet");
  CHECK(infer.images == 2);
  CHECK(infer.predictions.filename() == "pred_points.csv");
  CHECK_FALSE(fs::exists(dir / "inf" / "detections.csv"));
  std::size_t overlays = 0;
  for (const auto& e : fs::directory_iterator(dir / "inf" / "overlays")) overlays += e.path().extension() == ".png";
  CHECK(overlays == 2);

  // The eval name defaults to the model recorded next to the predictions.
  const auto r = run_eval(config, infer.predictions, dir / "data", data::Split::test, "", dir / "inf");
  CHECK(r.model == "unet");

  const auto bench =
      run_bench(config, dir / "unet" / "latest.ckpt", dir / "data", data::Split::test, dir / "inf" / "metrics.csv");
  CHECK(bench.tpi_seconds > 0.0);
  CHECK(bench.images == 2);
  const std::string csv = slurp(dir / "inf" / "metrics.csv");
  CHECK(csv.find(",NA\n") == std::string::npos);

  SUBCASE("classifier checkpoints write detections") {
    auto c = config;
    c.set("model", "network1");
    c.set("patch-size", "16");
    c.set("window-scales", "12");
    c.set("window-stride", "8");
    run_train(c, dir / "data", dir / "n1");
    const auto out = run_infer(c, dir / "n1" / "latest.ckpt", dir / "data", data::Split::test, dir / "inf", false);
    CHECK(out.model == "network1");
    CHECK(out.predictions.filename() == "detections.csv");
    CHECK_FALSE(fs::exists(dir / "inf" / "pred_points.csv"));
    CHECK(slurp(out.predictions).rfind("filename,x,y,w,h,score\n", 0) == 0);
  }
}

// Command-line front end over the C API: gen, train, infer, eval, bench.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "whdspot/whdspot.h"

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct Failure {
  int code;
};

void check(whdspot_status status, int code = kRuntimeError) {
  if (status == WHDSPOT_OK) return;
  std::fprintf(stderr, "error: %s\n", whdspot_last_error());
  throw Failure{code};
}

std::string value_or_na(double v, bool missing) {
  char buf[32];
  if (missing) return "NA";
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void print_metrics_table(const whdspot_metrics& m) {
  std::printf("%-10s %-6s %9s %9s %9s %9s %9s %9s %10s %9s %10s %9s\n", "model", "split", "precision", "recall", "f1",
              "tpi_s", "count_me", "count_mse", "count_rmse", "count_mae", "count_mape", "loc_rmse");
  std::printf("%-10s %-6s %9s %9s %9s %9s %9s %9s %10s %9s %10s %9s\n", m.model, m.split,
              value_or_na(m.precision, m.precision_undefined).c_str(), value_or_na(m.recall, m.recall_undefined).c_str(),
              value_or_na(m.f1, false).c_str(), value_or_na(m.tpi_seconds, !m.has_tpi).c_str(),
              value_or_na(m.count_me, false).c_str(), value_or_na(m.count_mse, false).c_str(),
              value_or_na(m.count_rmse, false).c_str(), value_or_na(m.count_mae, false).c_str(),
              value_or_na(m.count_mape, false).c_str(), value_or_na(m.loc_rmse, m.loc_empty).c_str());
  std::printf("tp %d, fp %d, fn %d\n", m.tp, m.fp, m.fn);
}

void print_epoch(const whdspot_epoch_report* r, void* user) {
  const int total = *static_cast<const int*>(user);
  if (r->validated)
    std::printf("epoch %d/%d  train_loss %.6f  val_loss %.6f  val_f1 %.4f\n", r->epoch, total, r->train_loss,
                r->val_loss, r->val_f1);
  else
    std::printf("epoch %d/%d  train_loss %.6f\n", r->epoch, total, r->train_loss);
  std::fflush(stdout);
}

struct ConfigHandle {
  whdspot_config* ptr = nullptr;
  ConfigHandle() { check(whdspot_config_create(&ptr)); }
  ~ConfigHandle() { whdspot_config_destroy(ptr); }
};

int run(int argc, char** argv) {
  CLI::App app{"Synthetic aerial sheep data, point-detector training, inference and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", whdspot_version());

  std::string config_file;
  int threads = 1;
  app.add_option("--config", config_file, "key = value file applied before flags")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "worker threads for inference and benchmarks")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // Every config key doubles as a flag of the same name.
  std::map<std::string, std::string> key_values;
  std::vector<std::pair<std::string, CLI::Option*>> key_options;
  auto* settings = app.add_option_group("Settings", "Run configuration keys (see run_config.txt of any run)");
  for (std::size_t i = 0; i < whdspot_config_key_count(); ++i) {
    const std::string name = whdspot_config_key_name(i);
    key_options.emplace_back(name, settings->add_option("--" + name, key_values[name], whdspot_config_key_help(i)));
  }

  auto* gen = app.add_subcommand("gen", "render a synthetic dataset")->fallthrough();
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset directory")->required();

  auto* train = app.add_subcommand("train", "train a model on a dataset")->fallthrough();
  std::string train_data, train_out;
  train->add_option("--data", train_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "output directory for checkpoints and history")->required();

  auto* infer = app.add_subcommand("infer", "predict one split and draw overlays")->fallthrough();
  std::string infer_ckpt, infer_data, infer_out, infer_split = "test";
  bool no_overlays = false;
  infer->add_option("--ckpt", infer_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--data", infer_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--out", infer_out, "output directory")->required();
  infer->add_option("--split", infer_split, "train, val or test")->capture_default_str();
  infer->add_flag("--no-overlays", no_overlays, "skip the overlay images");

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth")->fallthrough();
  std::string eval_pred, eval_gt, eval_out, eval_split = "test", eval_name;
  eval->add_option("--pred", eval_pred, "pred_points.csv or detections.csv")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", eval_gt, "dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out, "directory receiving metrics.csv")->required();
  eval->add_option("--split", eval_split, "train, val or test")->capture_default_str();
  eval->add_option("--name", eval_name, "model column (default: the model recorded with the predictions)");

  auto* bench = app.add_subcommand("bench", "time inference per image")->fallthrough();
  std::string bench_ckpt, bench_data, bench_split = "test", bench_metrics;
  int reps = 0, warmup = -1;
  bench->add_option("--ckpt", bench_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  bench->add_option("--data", bench_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--split", bench_split, "train, val or test")->capture_default_str();
  bench->add_option("--reps", reps, "timed runs (same as --bench-reps)")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "untimed runs (same as --bench-warmup)")->check(CLI::NonNegativeNumber);
  bench->add_option("--metrics", bench_metrics, "metrics.csv that receives the TPI");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  ConfigHandle config;
  // Bad settings are usage errors; failures while running are runtime errors.
  if (!config_file.empty()) check(whdspot_config_load(config.ptr, config_file.c_str()), kUsageError);
  const auto set = [&](const std::string& key, const std::string& value) {
    check(whdspot_config_set(config.ptr, key.c_str(), value.c_str()), kUsageError);
  };
  for (const auto& [name, opt] : key_options)
    if (name == "preset" && opt->count() > 0) set(name, key_values[name]);
  for (const auto& [name, opt] : key_options)
    if (name != "preset" && opt->count() > 0) set(name, key_values[name]);
  if (reps > 0) set("bench-reps", std::to_string(reps));
  if (warmup >= 0) set("bench-warmup", std::to_string(warmup));

  if (gen->parsed()) {
    whdspot_gen_summary s{};
    check(whdspot_generate(config.ptr, gen_out.c_str(), &s));
    std::printf("wrote %lld images (%lld sheep) to %s\n", static_cast<long long>(s.train + s.val + s.test),
                static_cast<long long>(s.objects), gen_out.c_str());
    std::printf("split train %lld / val %lld / test %lld\n", static_cast<long long>(s.train),
                static_cast<long long>(s.val), static_cast<long long>(s.test));
  } else if (train->parsed()) {
    char buf[64];
    size_t len = 0;
    check(whdspot_config_get(config.ptr, "epochs", buf, sizeof buf, &len));
    int epochs = std::stoi(buf);
    check(whdspot_config_get(config.ptr, "model", buf, sizeof buf, &len));
    std::printf("training %s on %s\n", buf, train_data.c_str());
    whdspot_train_summary s{};
    check(whdspot_train(config.ptr, train_data.c_str(), train_out.c_str(), print_epoch, &epochs, &s));
    if (s.best_epoch > 0)
      std::printf("done after %d epochs%s; best validation F1 %.4f at epoch %d\n", s.epochs_run,
                  s.stopped_early ? " (early stop)" : "", s.best_val_f1, s.best_epoch);
    else
      std::printf("done after %d epochs; no validation ran\n", s.epochs_run);
    std::printf("checkpoints and history in %s\n", train_out.c_str());
  } else if (infer->parsed()) {
    whdspot_infer_summary s{};
    check(whdspot_infer(config.ptr, infer_ckpt.c_str(), infer_data.c_str(), infer_split.c_str(), infer_out.c_str(),
                        no_overlays ? 0 : 1, threads, &s));
    std::printf("%s: %zu detections over %zu %s images; %s written to %s\n", s.model, s.detections, s.images,
                infer_split.c_str(), std::string(s.model) == "unet" ? "pred_points.csv" : "detections.csv",
                infer_out.c_str());
  } else if (eval->parsed()) {
    whdspot_metrics m{};
    check(whdspot_evaluate(config.ptr, eval_pred.c_str(), eval_gt.c_str(), eval_split.c_str(),
                           eval_name.empty() ? nullptr : eval_name.c_str(), eval_out.c_str(), &m));
    print_metrics_table(m);
  } else if (bench->parsed()) {
    whdspot_bench_summary s{};
    check(whdspot_bench(config.ptr, bench_ckpt.c_str(), bench_data.c_str(), bench_split.c_str(),
                        bench_metrics.empty() ? nullptr : bench_metrics.c_str(), threads, &s));
    std::printf("%s: tpi %.6f s (median of %d runs over %zu images)\n", s.model, s.tpi_seconds, s.reps, s.images);
    std::printf("hardware: %s\n", s.hardware);
    if (s.reps == 1) std::printf("warning: a single timed run says nothing about timing variance\n");
    if (!bench_metrics.empty()) std::printf("tpi stored in %s\n", bench_metrics.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Failure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "app/run_config.hpp"
#include "metrics/metrics.hpp"
#include "synthdata/dataset.hpp"
#include "trainer/trainer.hpp"

namespace whdspot::app {

struct GenSummary {
  std::int64_t train = 0;
  std::int64_t val = 0;
  std::int64_t test = 0;
  std::int64_t objects = 0;
};

// Writes the dataset and the resolved config into `out`.
GenSummary run_gen(const RunConfig& config, const std::filesystem::path& out);

// Trains config.model on the train/val splits of `data`; history.csv,
// best.ckpt, latest.ckpt and the resolved config go to `out`.
train::TrainHistory run_train(const RunConfig& config, const std::filesystem::path& data,
                              const std::filesystem::path& out, const train::EpochCallback& on_epoch = {});

struct InferSummary {
  std::string model;
  std::size_t images = 0;
  std::size_t detections = 0;
  std::filesystem::path predictions;  // pred_points.csv or detections.csv
};

// Predicts every image of one split. UNet checkpoints write pred_points.csv,
// classifiers detections.csv; each image also gets an overlay PNG under
// out/overlays when `overlays` is set.
InferSummary run_infer(RunConfig config, const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                       data::Split split, const std::filesystem::path& out, bool overlays = true, int threads = 1);

// Scores a pred_points.csv or detections.csv against the ground truth of one
// split of the dataset in `gt`. The row for (name, split) in out/metrics.csv
// is replaced or appended; a TPI already recorded for it is kept. An empty
// name is taken from the run config next to the predictions, if any.
metrics::MetricsReport run_eval(const RunConfig& config, const std::filesystem::path& predictions,
                                const std::filesystem::path& gt, data::Split split, std::string name,
                                const std::filesystem::path& out);

struct BenchSummary {
  std::string model;
  double tpi_seconds = 0.0;
  std::size_t images = 0;
  int reps = 0;
  std::string hardware;  // CPU model and thread counts
};

// Times the full prediction path (no file output) over one split. With a
// metrics path, the TPI is stored in the row for (model, split).
BenchSummary run_bench(const RunConfig& config, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& data, data::Split split,
                       const std::optional<std::filesystem::path>& metrics_csv, int threads = 1);

// Point predictions per image from a pred_points.csv or detections.csv,
// keyed by filename.
struct PredictionFile {
  bool boxes = false;
  std::vector<std::string> filenames;  // in first-appearance order
  std::vector<PointSet> points;
};
PredictionFile read_predictions(const std::filesystem::path& path);

}  // namespace whdspot::app

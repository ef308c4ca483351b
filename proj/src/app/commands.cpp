#include "app/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "common/csv.hpp"
#include "common/error.hpp"
#include "common/parallel.hpp"
#include "pipeline/inference.hpp"
#include "synthdata/image.hpp"

namespace whdspot::app {

namespace fs = std::filesystem;

namespace {

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Io, "cannot create directory " + dir.string());
}

std::unique_ptr<models::Model> build_model(const RunConfig& config, int image_size) {
  const auto arch = models::parse_architecture(config.model);
  if (arch == models::Architecture::unet) {
    models::UNetConfig u = config.unet;
    u.input_size = image_size;
    return std::make_unique<models::UNet>(u, config.seed);
  }
  models::RcnnNetConfig r = config.rcnn;
  r.variant = arch;
  return std::make_unique<models::RcnnNet>(r, config.seed);
}

// Prediction for each image, fanned out over threads.
std::vector<pipeline::Prediction> predict_all(models::Model& model, const std::vector<data::Sample>& samples,
                                              const RunConfig& config, int threads) {
  std::vector<pipeline::Prediction> out(samples.size());
  if (auto* unet = dynamic_cast<models::UNet*>(&model)) {
    const int size = unet->config().input_size;
    for (const auto& s : samples)
      if (s.image.dim(1) != size || s.image.dim(2) != size)
        fail("image " + s.filename + " is " + std::to_string(s.image.dim(2)) + "x" + std::to_string(s.image.dim(1)) +
             " but the checkpoint expects " + std::to_string(size) + "x" + std::to_string(size));
    // Eval mode is set once here; the workers only read the model.
    const diff::Mode saved = unet->mode();
    unet->set_mode(diff::Mode::eval);
    const auto batch = static_cast<std::size_t>(config.train.batch_size);
    const std::size_t batches = (samples.size() + batch - 1) / batch;
    try {
      parallel_for(batches, threads, [&](std::size_t b) {
        const std::size_t begin = b * batch, end = std::min(samples.size(), begin + batch);
        std::vector<diff::Tensor> images;
        for (std::size_t i = begin; i < end; ++i) images.push_back(samples[i].image);
        auto preds = pipeline::infer_unet(*unet, images, config.train.extraction, static_cast<int>(batch),
                                          config.train.precision);
        for (std::size_t i = begin; i < end; ++i) out[i] = std::move(preds[i - begin]);
      });
    } catch (...) {
      unet->set_mode(saved);
      throw;
    }
    unet->set_mode(saved);
  } else {
    auto& net = dynamic_cast<models::RcnnNet&>(model);
    const diff::Mode saved = net.mode();
    net.set_mode(diff::Mode::eval);
    try {
      parallel_for(samples.size(), threads, [&](std::size_t i) {
        out[i] = pipeline::detect_rcnn(net, samples[i].image, config.train.detector, config.train.precision);
      });
    } catch (...) {
      net.set_mode(saved);
      throw;
    }
    net.set_mode(saved);
  }
  return out;
}

std::string hardware_note(int threads) {
  std::string cpu = "unknown CPU";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  return cpu + "; threads used " + std::to_string(threads) + " of " +
         std::to_string(std::thread::hardware_concurrency()) + " available";
}

std::string row_key(const std::string& row) {
  const auto first = row.find(',');
  const auto second = row.find(',', first + 1);
  return row.substr(0, second);
}

std::string tpi_field(const std::string& row) { return row.substr(row.rfind(',') + 1); }

// Replaces or appends one data row of a metrics.csv, keyed by model,split.
void upsert_metrics_row(const fs::path& path, const std::string& row, bool keep_tpi) {
  const std::string header =
      "model,split,precision,recall,f1,count_me,count_mse,count_rmse,count_mae,count_mape,loc_rmse,tpi_seconds";
  std::vector<std::string> rows;
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    if (line != header) fail(ErrorKind::Format, path.string() + " is not a metrics file (unexpected header)");
    while (std::getline(in, line))
      if (!line.empty()) rows.push_back(line);
  }
  bool replaced = false;
  for (auto& r : rows)
    if (row_key(r) == row_key(row)) {
      const std::string old_tpi = tpi_field(r);
      r = row;
      if (keep_tpi && old_tpi != "NA") r = row.substr(0, row.rfind(',') + 1) + old_tpi;
      replaced = true;
    }
  if (!replaced) rows.push_back(row);
  std::string text = header + "\n";
  for (const auto& r : rows) text += r + "\n";
  write_text(path, text);
}

std::string first_data_row(const std::string& csv) {
  const auto nl = csv.find('\n');
  return csv.substr(nl + 1, csv.size() - nl - 2);
}

void write_overlay(const fs::path& path, const data::Sample& sample, const pipeline::Prediction& pred, bool boxes) {
  const auto size = sample.image.dim(1);
  const int factor = size >= 256 ? 1 : static_cast<int>((256 + size - 1) / size);
  diff::Tensor canvas = data::upscale(sample.image, factor);
  const auto scale_point = [&](Point p) { return Point{(p.x + 0.5) * factor - 0.5, (p.y + 0.5) * factor - 0.5}; };
  PointSet truth;
  for (const auto& p : sample.truth.centroids) truth.push_back(scale_point(p));
  data::draw_circles(canvas, truth, 1.5 * factor, {0.0, 0.75, 1.0});
  if (boxes) {
    BoxSet scaled;
    for (const auto& b : pred.boxes) scaled.push_back({(b.x + 0.5) * factor - 0.5, (b.y + 0.5) * factor - 0.5,
                                                       b.w * factor, b.h * factor});
    data::draw_boxes(canvas, scaled, {1.0, 0.1, 0.1});
  } else {
    PointSet points;
    for (const auto& p : pred.points) points.push_back(scale_point(p));
    data::draw_points(canvas, points, {1.0, 0.1, 0.1}, factor);
  }
  data::write_png(path, data::to_image(canvas));
}

}  // namespace

GenSummary run_gen(const RunConfig& config, const fs::path& out) {
  config.validate();
  prepare_dir(out);
  const double train_fraction = 1.0 - config.val_fraction - config.test_fraction;
  const auto manifest = data::make_dataset(config.scene_config(), config.total,
                                           {train_fraction, config.val_fraction, config.test_fraction}, out);
  config.save(out / kResolvedConfigName);
  GenSummary s;
  for (const auto& e : manifest) {
    (e.split == data::Split::train ? s.train : e.split == data::Split::val ? s.val : s.test) += 1;
    s.objects += e.count;
  }
  return s;
}

train::TrainHistory run_train(const RunConfig& config, const fs::path& data, const fs::path& out,
                              const train::EpochCallback& on_epoch) {
  config.validate();
  const auto arch = models::parse_architecture(config.model);
  auto train_config = config.train_config(arch);
  const auto train_set = data::load_dataset(data, data::Split::train);
  const auto val_set = data::load_dataset(data, data::Split::val);
  if (train_set.empty()) fail("dataset " + data.string() + " has no training images");
  prepare_dir(out);
  config.save(out / kResolvedConfigName);
  auto model = build_model(config, static_cast<int>(train_set.front().image.dim(1)));
  train_config.checkpoint_dir = out;
  return train::train(*model, train_set, val_set, train_config, on_epoch);
}

InferSummary run_infer(RunConfig config, const fs::path& checkpoint, const fs::path& data, data::Split split,
                       const fs::path& out, bool overlays, int threads) {
  config.validate();
  auto model = models::load_checkpoint(checkpoint);
  config.model = models::to_string(model->architecture());
  const auto samples = data::load_dataset(data, split);
  const bool boxes = model->architecture() != models::Architecture::unet;
  if (boxes) {
    const auto patch = dynamic_cast<models::RcnnNet&>(*model).config().patch_size;
    config.rcnn.patch_size = patch;
  }
  const auto preds = predict_all(*model, samples, config, threads);

  prepare_dir(out);
  InferSummary summary;
  summary.model = config.model;
  summary.images = samples.size();
  std::string csv = boxes ? "filename,x,y,w,h,score\n" : "filename,x,y,score\n";
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t k = 0; k < preds[i].points.size(); ++k) {
      ++summary.detections;
      if (boxes) {
        const Box& b = preds[i].boxes[k];
        csv += samples[i].filename + "," + fixed(b.x, 3) + "," + fixed(b.y, 3) + "," + fixed(b.w, 3) + "," +
               fixed(b.h, 3) + "," + fixed(preds[i].scores[k], 6) + "\n";
      } else {
        const Point& p = preds[i].points[k];
        csv += samples[i].filename + "," + fixed(p.x, 3) + "," + fixed(p.y, 3) + "," + fixed(preds[i].scores[k], 6) +
               "\n";
      }
    }
  summary.predictions = out / (boxes ? "detections.csv" : "pred_points.csv");
  write_text(summary.predictions, csv);
  fs::remove(out / (boxes ? "pred_points.csv" : "detections.csv"));
  if (overlays) {
    prepare_dir(out / "overlays");
    for (std::size_t i = 0; i < samples.size(); ++i)
      write_overlay(out / "overlays" / samples[i].filename, samples[i], preds[i], boxes);
  }
  config.save(out / kResolvedConfigName);
  return summary;
}

PredictionFile read_predictions(const fs::path& path) {
  const CsvTable table = read_csv(path);
  PredictionFile f;
  const std::vector<std::string> points_header{"filename", "x", "y", "score"};
  const std::vector<std::string> boxes_header{"filename", "x", "y", "w", "h", "score"};
  if (table.header == boxes_header) f.boxes = true;
  else if (table.header != points_header)
    fail(ErrorKind::Format, path.string() + ": expected header filename,x,y,score or filename,x,y,w,h,score");
  std::map<std::string, std::size_t> slot;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + " row " + std::to_string(r + 2);
    const double x = parse_double(row[1], where), y = parse_double(row[2], where);
    Point p{x, y};
    if (f.boxes) {
      const double w = parse_double(row[3], where), h = parse_double(row[4], where);
      p = Box{x, y, w, h}.center();
    }
    auto [it, fresh] = slot.emplace(row[0], f.filenames.size());
    if (fresh) {
      f.filenames.push_back(row[0]);
      f.points.emplace_back();
    }
    f.points[it->second].push_back(p);
  }
  return f;
}

metrics::MetricsReport run_eval(const RunConfig& config, const fs::path& predictions, const fs::path& gt,
                                data::Split split, std::string name, const fs::path& out) {
  config.validate();
  const PredictionFile pred = read_predictions(predictions);
  std::vector<std::string> filenames;
  std::map<std::string, std::size_t> position;
  for (const auto& e : data::read_manifest(gt))
    if (e.split == split) {
      position[e.filename] = filenames.size();
      filenames.push_back(e.filename);
    }
  std::vector<PointSet> truth(filenames.size());
  const fs::path points_path = gt / data::to_string(split) / "points.csv";
  const CsvTable points = read_csv(points_path);
  const auto fcol = points.column("filename", points_path.string());
  const auto xcol = points.column("x", points_path.string()), ycol = points.column("y", points_path.string());
  for (std::size_t r = 0; r < points.rows.size(); ++r) {
    const auto& row = points.rows[r];
    const auto it = position.find(row[fcol]);
    if (it == position.end())
      fail(ErrorKind::Format, points_path.string() + " row " + std::to_string(r + 2) + " names " + row[fcol] +
                                  ", which is not in the " + data::to_string(split) + " split");
    const std::string where = points_path.string() + " row " + std::to_string(r + 2);
    truth[it->second].push_back({parse_double(row[xcol], where), parse_double(row[ycol], where)});
  }

  std::vector<std::string> offenders;
  std::vector<PointSet> per_image(filenames.size());
  for (std::size_t i = 0; i < pred.filenames.size(); ++i) {
    const auto it = position.find(pred.filenames[i]);
    if (it == position.end()) offenders.push_back(pred.filenames[i]);
    else per_image[it->second] = pred.points[i];
  }
  if (!offenders.empty()) {
    std::string list;
    for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) list += (i ? ", " : "") + offenders[i];
    if (offenders.size() > 10) list += " and " + std::to_string(offenders.size() - 10) + " more";
    fail(ErrorKind::Format, predictions.string() + " names images missing from the " + data::to_string(split) +
                                " split of " + gt.string() + ": " + list);
  }
  std::vector<long> counts;
  for (const auto& p : per_image) counts.push_back(static_cast<long>(p.size()));

  if (name.empty()) {
    name = "model";
    const fs::path sibling = predictions.parent_path() / kResolvedConfigName;
    if (fs::exists(sibling))
      for (const auto& [k, v] : read_assignments(sibling))
        if (k == "model") name = v;
  }
  require(name.find(',') == std::string::npos && name.find('\n') == std::string::npos,
          "model name must not contain commas or newlines");
  auto report = metrics::evaluate(per_image, truth, config.train.match_radius, counts);
  report.model = name;
  report.split = data::to_string(split);
  prepare_dir(out);
  upsert_metrics_row(out / "metrics.csv", first_data_row(metrics::format_metrics_csv({report})), true);
  config.save(out / kResolvedConfigName);
  return report;
}

BenchSummary run_bench(const RunConfig& config, const fs::path& checkpoint, const fs::path& data, data::Split split,
                       const std::optional<fs::path>& metrics_csv, int threads) {
  config.validate();
  auto model = models::load_checkpoint(checkpoint);
  const auto samples = data::load_dataset(data, split);
  if (samples.empty()) fail("the " + data::to_string(split) + " split of " + data.string() + " has no images");
  BenchSummary s;
  s.model = models::to_string(model->architecture());
  s.images = samples.size();
  s.reps = config.bench_reps;
  s.hardware = hardware_note(threads);
  s.tpi_seconds = metrics::time_per_image([&] { predict_all(*model, samples, config, threads); }, samples.size(),
                                          config.bench_warmup, config.bench_reps);
  if (metrics_csv) {
    const std::string key = s.model + "," + data::to_string(split);
    const std::string tpi = fixed(s.tpi_seconds, 6);
    // A model without scores yet gets a row holding only its TPI.
    std::string row = key + ",NA,NA,NA,NA,NA,NA,NA,NA,NA," + tpi;
    if (fs::exists(*metrics_csv)) {
      std::ifstream in(*metrics_csv);
      std::string line;
      while (std::getline(in, line))
        if (row_key(line) == key) row = line.substr(0, line.rfind(',') + 1) + tpi;
    }
    upsert_metrics_row(*metrics_csv, row, false);
  }
  return s;
}

}  // namespace whdspot::app

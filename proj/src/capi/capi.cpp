#include "whdspot/whdspot.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "app/commands.hpp"
#include "app/run_config.hpp"
#include "common/error.hpp"
#include "metrics/metrics.hpp"
#include "pipeline/inference.hpp"
#include "synthdata/image.hpp"

struct whdspot_config {
  whdspot::app::RunConfig config;
};

struct whdspot_model {
  std::unique_ptr<whdspot::models::Model> model;
};

namespace {

using namespace whdspot;

thread_local std::string last_error;

whdspot_status fail_with(whdspot_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
whdspot_status guarded(Fn&& fn) {
  try {
    fn();
    return WHDSPOT_OK;
  } catch (const Error& e) {
    return fail_with(static_cast<whdspot_status>(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(WHDSPOT_ERR_RUNTIME, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail_with(WHDSPOT_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail_with(WHDSPOT_ERR_RUNTIME, e.what());
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(std::string(what) + " must not be NULL");
}

void copy_string(char* dst, std::size_t capacity, const std::string& src) {
  const std::size_t n = std::min(capacity - 1, src.size());
  std::memcpy(dst, src.data(), n);
  dst[n] = '\0';
}

const app::RunConfig& config_or_default(const whdspot_config* c) {
  static const app::RunConfig defaults;
  return c ? c->config : defaults;
}

}  // namespace

extern "C" {

const char* whdspot_version(void) { return "1.0.0"; }

const char* whdspot_last_error(void) { return last_error.c_str(); }

const char* whdspot_status_name(whdspot_status status) {
  switch (status) {
    case WHDSPOT_OK: return "ok";
    case WHDSPOT_ERR_INVALID_ARGUMENT: return "invalid argument";
    case WHDSPOT_ERR_IO: return "i/o error";
    case WHDSPOT_ERR_FORMAT: return "format error";
    case WHDSPOT_ERR_NUMERIC: return "numeric error";
    case WHDSPOT_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

whdspot_status whdspot_config_create(whdspot_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new whdspot_config();
  });
}

void whdspot_config_destroy(whdspot_config* config) { delete config; }

whdspot_status whdspot_config_set(whdspot_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->config.set(key, value);
  });
}

whdspot_status whdspot_config_get(const whdspot_config* config, const char* key, char* buffer, size_t capacity,
                                  size_t* length) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    const std::string v = config->config.get(key);
    if (length) *length = v.size();
    if (buffer && capacity > v.size()) copy_string(buffer, capacity, v);
  });
}

whdspot_status whdspot_config_load(whdspot_config* config, const char* path) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    config->config.load(path);
  });
}

whdspot_status whdspot_config_save(const whdspot_config* config, const char* path) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    config->config.save(path);
  });
}

size_t whdspot_config_key_count(void) { return app::config_keys().size(); }

const char* whdspot_config_key_name(size_t index) {
  const auto& keys = app::config_keys();
  return index < keys.size() ? keys[index].name.c_str() : nullptr;
}

const char* whdspot_config_key_help(size_t index) {
  const auto& keys = app::config_keys();
  return index < keys.size() ? keys[index].help.c_str() : nullptr;
}

whdspot_status whdspot_generate(const whdspot_config* config, const char* out_dir, whdspot_gen_summary* summary) {
  return guarded([&] {
    need(out_dir, "out_dir");
    const auto s = app::run_gen(config_or_default(config), out_dir);
    if (summary) *summary = {s.train, s.val, s.test, s.objects};
  });
}

whdspot_status whdspot_train(const whdspot_config* config, const char* data_dir, const char* out_dir,
                             whdspot_epoch_callback callback, void* user, whdspot_train_summary* summary) {
  return guarded([&] {
    need(data_dir, "data_dir");
    need(out_dir, "out_dir");
    train::EpochCallback on_epoch;
    if (callback)
      on_epoch = [&](const train::EpochReport& r) {
        whdspot_epoch_report c{r.epoch, r.train_loss, r.validation ? 1 : 0, 0.0, 0.0};
        if (r.validation) {
          c.val_loss = r.validation->loss;
          c.val_f1 = r.validation->f1;
        }
        callback(&c, user);
      };
    const auto h = app::run_train(config_or_default(config), data_dir, out_dir, on_epoch);
    if (summary) {
      *summary = {static_cast<int>(h.train_loss.size()), h.best_epoch.value_or(0), 0.0, h.stopped_early ? 1 : 0};
      for (const auto& v : h.validations)
        if (v.epoch == summary->best_epoch) summary->best_val_f1 = v.f1;
    }
  });
}

whdspot_status whdspot_infer(const whdspot_config* config, const char* checkpoint, const char* data_dir,
                             const char* split, const char* out_dir, int overlays, int threads,
                             whdspot_infer_summary* summary) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(data_dir, "data_dir");
    need(out_dir, "out_dir");
    const auto s = app::run_infer(config_or_default(config), checkpoint, data_dir,
                                  data::parse_split(split ? split : "test"), out_dir, overlays != 0, threads);
    if (summary) {
      copy_string(summary->model, sizeof summary->model, s.model);
      summary->images = s.images;
      summary->detections = s.detections;
    }
  });
}

whdspot_status whdspot_evaluate(const whdspot_config* config, const char* predictions, const char* gt_dir,
                                const char* split, const char* name, const char* out_dir, whdspot_metrics* metrics) {
  return guarded([&] {
    need(predictions, "predictions");
    need(gt_dir, "gt_dir");
    need(out_dir, "out_dir");
    const auto r = app::run_eval(config_or_default(config), predictions, gt_dir,
                                 data::parse_split(split ? split : "test"), name ? name : "", out_dir);
    if (metrics) {
      whdspot_metrics m{};
      copy_string(m.model, sizeof m.model, r.model);
      copy_string(m.split, sizeof m.split, r.split);
      m.precision = r.scores.precision;
      m.recall = r.scores.recall;
      m.f1 = r.scores.f1;
      m.precision_undefined = r.scores.precision_undefined;
      m.recall_undefined = r.scores.recall_undefined;
      m.count_me = r.counts.me;
      m.count_mse = r.counts.mse;
      m.count_rmse = r.counts.rmse;
      m.count_mae = r.counts.mae;
      m.count_mape = r.counts.mape;
      m.loc_rmse = r.localization.rmse;
      m.loc_empty = r.localization.empty;
      m.has_tpi = r.tpi_seconds.has_value();
      m.tpi_seconds = r.tpi_seconds.value_or(0.0);
      m.tp = r.tp;
      m.fp = r.fp;
      m.fn = r.fn;
      *metrics = m;
    }
  });
}

whdspot_status whdspot_bench(const whdspot_config* config, const char* checkpoint, const char* data_dir,
                             const char* split, const char* metrics_csv, int threads, whdspot_bench_summary* summary) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(data_dir, "data_dir");
    std::optional<std::filesystem::path> metrics;
    if (metrics_csv) metrics = metrics_csv;
    const auto s = app::run_bench(config_or_default(config), checkpoint, data_dir,
                                  data::parse_split(split ? split : "test"), metrics, threads);
    if (summary) {
      copy_string(summary->model, sizeof summary->model, s.model);
      summary->tpi_seconds = s.tpi_seconds;
      summary->images = s.images;
      summary->reps = s.reps;
      copy_string(summary->hardware, sizeof summary->hardware, s.hardware);
    }
  });
}

whdspot_status whdspot_model_load(const char* checkpoint, whdspot_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    auto m = std::make_unique<whdspot_model>();
    m->model = models::load_checkpoint(checkpoint);
    *out = m.release();
  });
}

void whdspot_model_destroy(whdspot_model* model) { delete model; }

const char* whdspot_model_architecture(const whdspot_model* model) {
  if (!model) return nullptr;
  switch (model->model->architecture()) {
    case models::Architecture::unet: return "unet";
    case models::Architecture::network1: return "network1";
    case models::Architecture::network2: return "network2";
  }
  return nullptr;
}

whdspot_status whdspot_model_parameter_count(const whdspot_model* model, size_t* count) {
  return guarded([&] {
    need(model, "model");
    need(count, "count");
    *count = model->model->parameter_count();
  });
}

whdspot_status whdspot_model_detect(whdspot_model* model, const whdspot_config* config, const uint8_t* rgb, int size,
                                    double* xys, size_t capacity, size_t* count) {
  return guarded([&] {
    need(model, "model");
    need(rgb, "rgb");
    need(count, "count");
    if (capacity > 0) need(xys, "xys");
    require(size >= 1, "size must be positive");
    data::Image image;
    image.width = size;
    image.height = size;
    image.rgb.assign(rgb, rgb + static_cast<std::size_t>(size) * static_cast<std::size_t>(size) * 3);
    const diff::Tensor t = data::to_tensor(image);
    const auto& cfg = config_or_default(config).train;
    pipeline::Prediction p;
    if (auto* unet = dynamic_cast<models::UNet*>(model->model.get())) {
      require(unet->config().input_size == size, "image is " + std::to_string(size) + " px, the model expects " +
                                                     std::to_string(unet->config().input_size));
      p = pipeline::infer_unet(*unet, {t}, cfg.extraction, 1, cfg.precision).front();
    } else {
      p = pipeline::detect_rcnn(dynamic_cast<models::RcnnNet&>(*model->model), t, cfg.detector, cfg.precision);
    }
    *count = p.points.size();
    for (std::size_t i = 0; i < p.points.size() && i < capacity; ++i) {
      xys[3 * i] = p.points[i].x;
      xys[3 * i + 1] = p.points[i].y;
      xys[3 * i + 2] = p.scores[i];
    }
  });
}

whdspot_status whdspot_precision_recall_f1(int tp, int fp, int fn, double* precision, double* recall, double* f1) {
  return guarded([&] {
    const auto s = metrics::precision_recall_f1(tp, fp, fn);
    if (precision) *precision = s.precision;
    if (recall) *recall = s.recall;
    if (f1) *f1 = s.f1;
  });
}

double whdspot_f1(double precision, double recall) { return metrics::f1_score(precision, recall); }

}  // extern "C"

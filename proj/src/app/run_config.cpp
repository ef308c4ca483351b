#include "app/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "common/csv.hpp"
#include "common/error.hpp"

namespace whdspot::app {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(parse_int(trim(item), "config key '" + key + "'")));
  require(!out.empty(), "config key '" + key + "': empty list");
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Key {
  KeyInfo info;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Access>
Key real(const std::string& name, const std::string& help, Access access) {
  return {{name, help},
          [access](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); },
          [access, name](RunConfig& c, const std::string& v) {
            access(c) = parse_double(v, "config key '" + name + "'");
          }};
}

template <typename Access>
Key integer(const std::string& name, const std::string& help, Access access) {
  return {{name, help},
          [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); },
          [access, name](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(access(c))>;
            const long long parsed = parse_int(v, "config key '" + name + "'");
            if constexpr (std::is_unsigned_v<T>) require(parsed >= 0, "config key '" + name + "' must be >= 0");
            access(c) = static_cast<T>(parsed);
          }};
}

template <typename Access>
Key boolean(const std::string& name, const std::string& help, Access access) {
  return {{name, help},
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [access, name](RunConfig& c, const std::string& v) { access(c) = parse_bool(v, name); }};
}

template <typename Access>
Key int_list(const std::string& name, const std::string& help, Access access) {
  return {{name, help},
          [access](const RunConfig& c) { return format_int_list(access(const_cast<RunConfig&>(c))); },
          [access, name](RunConfig& c, const std::string& v) { access(c) = parse_int_list(v, name); }};
}

data::SceneConfig preset_scene(const std::string& name) {
  if (name == "desk") return data::SceneConfig::desk();
  if (name == "easy") return data::SceneConfig::easy();
  if (name == "full") return data::SceneConfig::full();
  fail("unknown preset '" + name + "' (expected desk, easy or full)");
}

#define SCENE(field) [](RunConfig& c) -> auto& { return c.scene.field; }
#define TRAIN(field) [](RunConfig& c) -> auto& { return c.train.field; }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back({{"preset", "scene defaults: desk, easy or full (applied before other keys)"},
                 [](const RunConfig& c) { return c.preset; },
                 [](RunConfig& c, const std::string& v) {
                   c.scene = preset_scene(v);
                   c.preset = v;
                 }});
    k.push_back(integer("seed", "seed for scenes, initialisation and shuffling",
                        [](RunConfig& c) -> auto& { return c.seed; }));
    k.push_back(integer("total", "images generated by gen", [](RunConfig& c) -> auto& { return c.total; }));
    k.push_back(real("val-fraction", "share of images in the validation split",
                     [](RunConfig& c) -> auto& { return c.val_fraction; }));
    k.push_back(real("test-fraction", "share of images in the test split",
                     [](RunConfig& c) -> auto& { return c.test_fraction; }));
    k.push_back(integer("image-size", "square image side in pixels", SCENE(image_size)));
    k.push_back(integer("count-min", "fewest sheep per image", SCENE(count_min)));
    k.push_back(integer("count-max", "most sheep per image", SCENE(count_max)));
    k.push_back(real("length-min", "shortest sheep body length (px)", SCENE(length_min)));
    k.push_back(real("length-max", "longest sheep body length (px)", SCENE(length_max)));
    k.push_back(real("width-min", "narrowest sheep body width (px)", SCENE(width_min)));
    k.push_back(real("width-max", "widest sheep body width (px)", SCENE(width_max)));
    k.push_back(real("brightness-min", "darkest sheep brightness", SCENE(brightness_min)));
    k.push_back(real("brightness-max", "brightest sheep brightness", SCENE(brightness_max)));
    k.push_back(real("edge-softness", "width of the sheep edge ramp (px)", SCENE(edge_softness)));
    k.push_back(real("hue-min", "grass hue lower bound (degrees)", SCENE(hue_min)));
    k.push_back(real("hue-max", "grass hue upper bound (degrees)", SCENE(hue_max)));
    k.push_back(real("grass-saturation", "grass saturation", SCENE(grass_saturation)));
    k.push_back(real("grass-value", "grass value (brightness)", SCENE(grass_value)));
    k.push_back(integer("noise-octaves", "grass noise octaves", SCENE(noise_octaves)));
    k.push_back(real("noise-amplitude", "grass noise amplitude", SCENE(noise_amplitude)));
    k.push_back(real("noise-cell", "coarsest grass noise cell (px)", SCENE(noise_cell)));
    k.push_back(real("fence-probability", "chance of a fence line per image", SCENE(fence_probability)));
    k.push_back(real("fence-brightness", "fence brightness", SCENE(fence_brightness)));
    k.push_back(real("shadow-offset", "shadow displacement (px)", SCENE(shadow_offset)));
    k.push_back(real("shadow-alpha", "shadow opacity", SCENE(shadow_alpha)));
    k.push_back(real("illumination-min", "lowest global illumination factor", SCENE(illumination_min)));
    k.push_back(real("illumination-max", "highest global illumination factor", SCENE(illumination_max)));
    k.push_back(real("min-separation", "least distance between sheep centres (px)", SCENE(min_separation)));
    k.push_back(boolean("allow-overlap", "let sheep overlap", SCENE(allow_overlap)));
    k.push_back(real("contrast-margin", "least luminance gap between sheep and grass", SCENE(contrast_margin)));

    k.push_back({{"model", "architecture: unet, network1 or network2"},
                 [](const RunConfig& c) { return c.model; },
                 [](RunConfig& c, const std::string& v) {
                   models::parse_architecture(v);
                   c.model = v;
                 }});
    k.push_back(real("unet-width-scale", "UNet channel multiplier",
                     [](RunConfig& c) -> auto& { return c.unet.width_scale; }));
    k.push_back(int_list("unet-contraction", "UNet contraction channels at full width",
                         [](RunConfig& c) -> auto& { return c.unet.contraction_channels; }));
    k.push_back(int_list("unet-expansion", "UNet expansion channels at full width",
                         [](RunConfig& c) -> auto& { return c.unet.expansion_channels; }));
    k.push_back(integer("patch-size", "classifier patch side (px)",
                        [](RunConfig& c) -> auto& { return c.rcnn.patch_size; }));
    k.push_back(integer("network1-kernels", "Network-I filter count",
                        [](RunConfig& c) -> auto& { return c.rcnn.network1_kernels; }));
    k.push_back(integer("network1-kernel-size", "Network-I kernel side",
                        [](RunConfig& c) -> auto& { return c.rcnn.network1_kernel_size; }));
    k.push_back(integer("network1-stride", "Network-I convolution stride",
                        [](RunConfig& c) -> auto& { return c.rcnn.network1_stride; }));
    k.push_back(int_list("network2-channels", "Network-II channels of the seven blocks",
                         [](RunConfig& c) -> auto& { return c.rcnn.network2_channels; }));

    k.push_back(real("lr", "learning rate", TRAIN(learning_rate)));
    k.push_back(real("momentum", "momentum coefficient", TRAIN(momentum)));
    k.push_back(integer("batch-size", "images (or patches) per step", TRAIN(batch_size)));
    k.push_back(integer("epochs", "training epochs", TRAIN(epochs)));
    k.push_back(integer("validate-every", "epochs between validations", TRAIN(validate_every)));
    k.push_back({{"patience", "epochs without a better validation F1 before stopping; 0 disables"},
                 [](const RunConfig& c) { return std::to_string(c.train.early_stop_patience.value_or(0)); },
                 [](RunConfig& c, const std::string& v) {
                   const long long p = parse_int(v, "config key 'patience'");
                   require(p >= 0, "config key 'patience' must be >= 0");
                   if (p == 0) c.train.early_stop_patience.reset();
                   else c.train.early_stop_patience = static_cast<int>(p);
                 }});
    k.push_back(boolean("augment", "random flips and right-angle rotations", TRAIN(augment)));
    k.push_back({{"precision", "arithmetic precision: f64 or f32"},
                 [](const RunConfig& c) {
                   return std::string(c.train.precision == diff::Precision::f64 ? "f64" : "f32");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "f64") c.train.precision = diff::Precision::f64;
                   else if (v == "f32") c.train.precision = diff::Precision::f32;
                   else fail("config key 'precision': expected f64 or f32, got '" + v + "'");
                 }});
    k.push_back({{"loss", "auto, whd or cross_entropy"},
                 [](const RunConfig& c) { return c.loss; },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "auto") train::parse_loss_kind(v);
                   c.loss = v;
                 }});
    k.push_back(real("whd-alpha", "exponent on p in the coverage term", TRAIN(whd.alpha)));
    k.push_back(real("whd-epsilon", "stabiliser in the WHD denominators", TRAIN(whd.epsilon)));
    k.push_back(integer("proposals", "training proposals drawn per image", TRAIN(proposals.count)));
    k.push_back(integer("positives-per-image", "positive patches kept per image per epoch",
                        TRAIN(positives_per_image)));
    k.push_back({{"threshold-mode", "probability-map threshold: otsu or fixed"},
                 [](const RunConfig& c) {
                   return std::string(c.train.extraction.mode == post::ThresholdMode::otsu ? "otsu" : "fixed");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "otsu") c.train.extraction.mode = post::ThresholdMode::otsu;
                   else if (v == "fixed") c.train.extraction.mode = post::ThresholdMode::fixed;
                   else fail("config key 'threshold-mode': expected otsu or fixed, got '" + v + "'");
                 }});
    k.push_back(real("threshold", "fixed probability threshold", TRAIN(extraction.threshold)));
    k.push_back(integer("min-area", "smallest kept component (pixels)", TRAIN(extraction.min_area)));
    k.push_back(boolean("reconcile", "match the component count to the count head", TRAIN(extraction.reconcile)));
    k.push_back(int_list("window-scales", "sliding-window sides (px)", TRAIN(detector.scales)));
    k.push_back(integer("window-stride", "sliding-window step (px)", TRAIN(detector.stride)));
    k.push_back(real("score-threshold", "least object probability kept", TRAIN(detector.score_threshold)));
    k.push_back(real("nms-threshold", "IoU above which detections are suppressed", TRAIN(detector.nms_threshold)));
    k.push_back(real("radius", "matching radius for true positives (px)", TRAIN(match_radius)));
    k.push_back(integer("bench-warmup", "untimed benchmark runs", [](RunConfig& c) -> auto& { return c.bench_warmup; }));
    k.push_back(integer("bench-reps", "timed benchmark runs", [](RunConfig& c) -> auto& { return c.bench_reps; }));
    return k;
  }();
  return keys;
}

#undef SCENE
#undef TRAIN

const Key& find_key(const std::string& name) {
  for (const auto& k : registry())
    if (k.info.name == name) return k;
  fail("unknown config key '" + name + "'");
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> infos = [] {
    std::vector<KeyInfo> out;
    for (const auto& k : registry()) out.push_back(k.info);
    return out;
  }();
  return infos;
}

void RunConfig::set(const std::string& key, const std::string& value) { find_key(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return find_key(key).get(*this); }

namespace {

struct Assignment {
  int line = 0;
  std::string key;
  std::string value;
};

std::vector<Assignment> read_numbered(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config file " + path.string());
  std::vector<Assignment> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
    out.push_back({number, trim(t.substr(0, eq)), trim(t.substr(eq + 1))});
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_assignments(const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto& a : read_numbered(path)) out.emplace_back(std::move(a.key), std::move(a.value));
  return out;
}

void RunConfig::load(const std::filesystem::path& path) {
  const auto assignments = read_numbered(path);
  const auto set_at = [&](const Assignment& a) {
    try {
      set(a.key, a.value);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgument)
        fail(path.string() + ":" + std::to_string(a.line) + ": " + e.what());
      throw;
    }
  };
  for (const auto& a : assignments)
    if (a.key == "preset") set_at(a);
  for (const auto& a : assignments)
    if (a.key != "preset") set_at(a);
}

void RunConfig::apply(const std::vector<std::pair<std::string, std::string>>& assignments) {
  for (const auto& [k, v] : assignments)
    if (k == "preset") set(k, v);
  for (const auto& [k, v] : assignments)
    if (k != "preset") set(k, v);
}

std::string RunConfig::format() const {
  std::string out;
  for (const auto& k : registry()) out += k.info.name + " = " + k.get(*this) + "\n";
  return out;
}

void RunConfig::save(const std::filesystem::path& path) const { write_text(path, format()); }

data::SceneConfig RunConfig::scene_config() const {
  data::SceneConfig s = scene;
  s.seed = seed;
  return s;
}

train::TrainConfig RunConfig::train_config(models::Architecture arch) const {
  train::TrainConfig t = train;
  t.seed = seed;
  t.loss = train::loss_for(arch);
  if (loss != "auto" && train::parse_loss_kind(loss) != t.loss)
    fail("loss " + loss + " cannot train " + models::to_string(arch) + " (it needs " + train::to_string(t.loss) +
         ")");
  return t;
}

void RunConfig::validate() const {
  scene_config().validate();
  require(total >= 1, "total must be at least 1");
  require(val_fraction >= 0 && test_fraction >= 0 && val_fraction + test_fraction <= 1,
          "val-fraction and test-fraction must be non-negative and sum to at most 1");
  train.validate();
  require(bench_warmup >= 0, "bench-warmup must be >= 0");
  require(bench_reps >= 1, "bench-reps must be >= 1");
}

}  // namespace whdspot::app

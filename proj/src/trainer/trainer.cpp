#include "trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/csv.hpp"
#include "common/error.hpp"
#include "common/rng.hpp"
#include "metrics/metrics.hpp"
#include "synthdata/augment.hpp"

namespace whdspot::train {

using diff::Tensor;
using diff::Variable;

std::string to_string(LossKind k) { return k == LossKind::whd ? "whd" : "cross_entropy"; }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "whd") return LossKind::whd;
  if (name == "cross_entropy" || name == "cross-entropy") return LossKind::cross_entropy;
  fail("unknown loss '" + name + "' (expected whd or cross_entropy)");
}

LossKind loss_for(models::Architecture arch) {
  return arch == models::Architecture::unet ? LossKind::whd : LossKind::cross_entropy;
}

void TrainConfig::validate() const {
  require(learning_rate > 0 && std::isfinite(learning_rate), "train: learning rate must be positive");
  require(momentum >= 0 && momentum < 1, "train: momentum must lie in [0,1)");
  require(batch_size >= 1, "train: batch size must be at least 1");
  require(epochs >= 1, "train: epochs must be at least 1");
  require(validate_every >= 1, "train: validate_every must be at least 1");
  require(!early_stop_patience || *early_stop_patience >= 1, "train: early-stop patience must be at least 1");
  require(match_radius > 0, "train: match radius must be positive");
  require(positives_per_image >= 1, "train: positives_per_image must be at least 1");
  extraction.validate();
  detector.validate();
}

void sgd_momentum_step(const std::vector<Variable>& params, std::vector<Tensor>& velocities, double lr, double mu) {
  if (velocities.empty())
    for (const auto& p : params) velocities.emplace_back(p.value().shape());
  require(velocities.size() == params.size(), "sgd: one velocity per parameter");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params[i].mutable_value();
    Tensor& v = velocities[i];
    const Tensor& g = params[i].grad();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      v[j] = mu * v[j] - lr * g[j];
      theta[j] += v[j];
    }
    params[i].zero_grad();
  }
}

namespace {

// Positions of `samples` sorted by (index, filename).
std::vector<std::size_t> canonical_order(const std::vector<data::Sample>& samples) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (samples[a].index != samples[b].index) return samples[a].index < samples[b].index;
    return samples[a].filename < samples[b].filename;
  });
  return order;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
}

std::uint64_t stream(std::uint64_t seed, std::uint64_t tag, int epoch) {
  return splitmix64(seed ^ splitmix64(tag)) + static_cast<std::uint64_t>(epoch);
}

constexpr std::uint64_t kShuffleTag = 1, kAugmentTag = 2, kProposalTag = 3, kPickTag = 4, kValidationTag = 5;

// Batch boundaries; a trailing batch of one joins the previous batch so batch
// norm always sees two or more images.
std::vector<std::pair<std::size_t, std::size_t>> batches(std::size_t n, int batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto b = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < n; i += b) out.emplace_back(i, std::min(n, i + b));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

// One of the eight symmetries of the square.
std::vector<data::AugmentOp> dihedral(int k) {
  using data::AugmentOp;
  static const std::vector<AugmentOp> table[8] = {
      {}, {AugmentOp::rot90}, {AugmentOp::rot180}, {AugmentOp::rot270}, {AugmentOp::hflip}, {AugmentOp::vflip},
      {AugmentOp::hflip, AugmentOp::rot90}, {AugmentOp::hflip, AugmentOp::rot270}};
  return table[k];
}

bool finite(double v) { return std::isfinite(v); }

std::vector<Variable> variables(const models::Model& model) {
  std::vector<Variable> out;
  for (const auto& p : model.parameters()) out.push_back(p.var);
  return out;
}

struct EvalGuard {
  models::Model& model;
  diff::Mode saved;
  explicit EvalGuard(models::Model& m) : model(m), saved(m.mode()) { m.set_mode(diff::Mode::eval); }
  ~EvalGuard() { model.set_mode(saved); }
};

void check_samples(const std::vector<data::Sample>& samples, int size, const std::string& what) {
  for (const auto& s : samples) {
    const auto& shape = s.image.shape();
    require(shape.size() == 3 && shape[0] == 3 && shape[1] == shape[2],
            what + " image " + s.filename + " is not a square RGB image");
    if (size > 0)
      require(shape[1] == size, what + " image " + s.filename + " is " + std::to_string(shape[1]) +
                                    " px, the model expects " + std::to_string(size));
  }
}

loss::WhdParams whd_params(const TrainConfig& config, int size) {
  loss::WhdParams p = config.whd;
  p.height = size;
  p.width = size;
  p.validate();
  return p;
}

Tensor patch_batch(const std::vector<data::Sample>& samples, const std::vector<PatchExample>& examples,
                   std::size_t begin, std::size_t end, int patch_size, const TrainConfig& config, int epoch,
                   bool augment) {
  std::vector<Tensor> patches;
  for (std::size_t i = begin; i < end; ++i) {
    Tensor p = proposals::extract_patch(samples[examples[i].image].image, examples[i].box, patch_size);
    if (augment) {
      Rng rng(stream(config.seed, kAugmentTag, epoch), i);
      p = data::augment(p, {}, dihedral(static_cast<int>(rng.integer(0, 7)))).image;
    }
    patches.push_back(std::move(p));
  }
  return pipeline::stack(patches, 0, patches.size());
}

std::vector<int> labels_of(const std::vector<PatchExample>& examples, std::size_t begin, std::size_t end) {
  std::vector<int> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(examples[i].label);
  return out;
}

void save_atomically(const models::Model& model, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  models::save_checkpoint(model, tmp);
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::vector<std::size_t> epoch_order(const std::vector<data::Sample>& samples, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order = canonical_order(samples);
  Rng rng(stream(seed, kShuffleTag, epoch));
  shuffle(order, rng);
  return order;
}

std::vector<PatchExample> sample_patch_examples(const std::vector<data::Sample>& samples, const TrainConfig& config,
                                                int image_size, int epoch) {
  std::vector<PatchExample> pos, neg;
  for (std::size_t i : canonical_order(samples)) {
    const auto& s = samples[i];
    const auto props = proposals::generate_train_proposals(s.truth.boxes, image_size, config.proposals,
                                                           stream(config.seed, kProposalTag, epoch) ^ s.index);
    std::vector<PatchExample> p, n;
    for (const auto& lp : props) {
      if (lp.label == proposals::Label::positive) p.push_back({i, lp.box, 1});
      if (lp.label == proposals::Label::negative) n.push_back({i, lp.box, 0});
    }
    Rng rng(stream(config.seed, kPickTag, epoch), s.index);
    shuffle(p, rng);
    shuffle(n, rng);
    const auto kp = std::min<std::size_t>(p.size(), static_cast<std::size_t>(config.positives_per_image));
    const auto kn = std::min<std::size_t>(n.size(), 3 * static_cast<std::size_t>(config.positives_per_image));
    pos.insert(pos.end(), p.begin(), p.begin() + static_cast<std::ptrdiff_t>(kp));
    neg.insert(neg.end(), n.begin(), n.begin() + static_cast<std::ptrdiff_t>(kn));
  }
  Rng rng(stream(config.seed, kShuffleTag, epoch) ^ 0xc1a55ULL);
  shuffle(pos, rng);
  shuffle(neg, rng);
  // Batch b takes round((b+1)B/4) - round(bB/4) positives.
  std::vector<PatchExample> out;
  const int b = config.batch_size;
  std::size_t ip = 0, in = 0;
  for (long k = 0;; ++k) {
    const auto want_pos = static_cast<std::size_t>(std::lround((k + 1) * b / 4.0) - std::lround(k * b / 4.0));
    const std::size_t want_neg = static_cast<std::size_t>(b) - want_pos;
    if (ip + want_pos > pos.size() || in + want_neg > neg.size()) break;
    std::vector<PatchExample> batch(pos.begin() + static_cast<std::ptrdiff_t>(ip),
                                    pos.begin() + static_cast<std::ptrdiff_t>(ip + want_pos));
    batch.insert(batch.end(), neg.begin() + static_cast<std::ptrdiff_t>(in),
                 neg.begin() + static_cast<std::ptrdiff_t>(in + want_neg));
    shuffle(batch, rng);
    out.insert(out.end(), batch.begin(), batch.end());
    ip += want_pos;
    in += want_neg;
  }
  return out;
}

ValidationEntry validate_model(models::Model& model, const std::vector<data::Sample>& val_set,
                               const TrainConfig& config, int epoch) {
  require(!val_set.empty(), "validation split is empty");
  EvalGuard guard(model);
  ValidationEntry entry;
  entry.epoch = epoch;
  std::vector<PointSet> pred, truth;
  std::vector<long> counts;
  if (auto* unet = dynamic_cast<models::UNet*>(&model)) {
    const int size = unet->config().input_size;
    check_samples(val_set, size, "validation");
    const auto params = whd_params(config, size);
    double total = 0.0;
    for (const auto& [b, e] : batches(val_set.size(), config.batch_size)) {
      std::vector<Tensor> images;
      std::vector<PointSet> points;
      for (std::size_t i = b; i < e; ++i) {
        images.push_back(val_set[i].image);
        points.push_back(val_set[i].truth.centroids);
      }
      diff::Tape tape(config.precision, false);
      const auto out = unet->forward(tape, Variable(pipeline::stack(images, 0, images.size())));
      total += loss::whd_loss_batch(tape, out.probmap, points, params, out.count_signal).value().item() *
               static_cast<double>(e - b);
      const auto pixels = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
      for (std::size_t i = 0; i < e - b; ++i) {
        auto p = pipeline::predict_from_map(out.probmap.value().ptr() + i * pixels, size, out.count[i],
                                            config.extraction);
        counts.push_back(static_cast<long>(p.points.size()));
        pred.push_back(std::move(p.points));
        truth.push_back(points[i]);
      }
    }
    entry.loss = total / static_cast<double>(val_set.size());
  } else {
    auto& net = dynamic_cast<models::RcnnNet&>(model);
    check_samples(val_set, -1, "validation");
    const int size = static_cast<int>(val_set.front().image.dim(1));
    TrainConfig val_config = config;
    val_config.seed = splitmix64(config.seed ^ kValidationTag);
    const auto examples = sample_patch_examples(val_set, val_config, size, 0);
    double total = 0.0;
    for (const auto& [b, e] : batches(examples.size(), config.batch_size)) {
      diff::Tape tape(config.precision, false);
      const auto logits = net.logits(
          tape, Variable(patch_batch(val_set, examples, b, e, net.config().patch_size, config, 0, false)));
      const auto labels = labels_of(examples, b, e);
      total += loss::cross_entropy(tape, logits, labels).value().item() * static_cast<double>(e - b);
    }
    entry.loss = examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
    for (const auto& s : val_set) {
      auto p = pipeline::detect_rcnn(net, s.image, config.detector, config.precision);
      counts.push_back(static_cast<long>(p.points.size()));
      pred.push_back(std::move(p.points));
      truth.push_back(s.truth.centroids);
    }
  }
  entry.f1 = metrics::evaluate(pred, truth, config.match_radius, counts).scores.f1;
  return entry;
}

std::string format_history_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,val_loss,val_f1\n";
  std::size_t v = 0;
  for (std::size_t i = 0; i < history.train_loss.size(); ++i) {
    const int epoch = static_cast<int>(i) + 1;
    out += std::to_string(epoch) + "," + fixed(history.train_loss[i], 6) + ",";
    if (v < history.validations.size() && history.validations[v].epoch == epoch) {
      out += fixed(history.validations[v].loss, 6) + "," + fixed(history.validations[v].f1, 6) + "\n";
      ++v;
    } else {
      out += "NA,NA\n";
    }
  }
  return out;
}

TrainHistory train(models::Model& model, const std::vector<data::Sample>& train_set,
                   const std::vector<data::Sample>& val_set, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  require(!train_set.empty(), "train: the training split is empty");
  require(config.loss == loss_for(model.architecture()),
          "train: loss " + to_string(config.loss) + " does not fit model " + to_string(model.architecture()));
  require(val_set.size() > 0 || config.epochs < config.validate_every,
          "train: validation is scheduled but the validation split is empty");
  auto* unet = dynamic_cast<models::UNet*>(&model);
  auto* net = dynamic_cast<models::RcnnNet*>(&model);
  const int size = unet ? unet->config().input_size : static_cast<int>(train_set.front().image.dim(1));
  check_samples(train_set, unet ? size : -1, "training");
  check_samples(val_set, unet ? size : -1, "validation");
  const auto& dir = config.checkpoint_dir;
  if (!dir.empty()) std::filesystem::create_directories(dir);

  model.set_mode(diff::Mode::train);
  model.zero_grad();
  const auto params = variables(model);
  std::vector<Tensor> velocities;
  auto last_good = model.state();
  TrainHistory history;
  double best_f1 = -1.0;

  const auto write_history = [&] {
    if (!dir.empty()) write_text(dir / "history.csv", format_history_csv(history));
  };
  const auto diverged = [&](int epoch) {
    model.load_state(last_good);
    model.set_mode(diff::Mode::train);
    write_history();
    fail(ErrorKind::Numeric, "training diverged (non-finite loss) in epoch " + std::to_string(epoch) +
                                 "; the model holds the last good state" +
                                 (dir.empty() ? std::string() : ", saved as " + (dir / "latest.ckpt").string()));
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t seen = 0;
    if (unet) {
      const auto order = epoch_order(train_set, config.seed, epoch);
      const auto params_whd = whd_params(config, size);
      for (const auto& [b, e] : batches(order.size(), config.batch_size)) {
        std::vector<Tensor> images;
        std::vector<PointSet> points;
        for (std::size_t i = b; i < e; ++i) {
          const auto& s = train_set[order[i]];
          if (config.augment) {
            Rng rng(stream(config.seed, kAugmentTag, epoch), s.index);
            auto a = data::augment(s.image, s.truth, dihedral(static_cast<int>(rng.integer(0, 7))));
            images.push_back(std::move(a.image));
            points.push_back(std::move(a.truth.centroids));
          } else {
            images.push_back(s.image);
            points.push_back(s.truth.centroids);
          }
        }
        diff::Tape tape(config.precision, true);
        const auto out = unet->forward(tape, Variable(pipeline::stack(images, 0, images.size())));
        const Variable loss = loss::whd_loss_batch(tape, out.probmap, points, params_whd, out.count_signal);
        const double value = loss.value().item();
        if (!finite(value)) diverged(epoch);
        tape.backward(loss);
        sgd_momentum_step(params, velocities, config.learning_rate, config.momentum);
        loss_sum += value * static_cast<double>(e - b);
        seen += e - b;
      }
    } else {
      const auto examples = sample_patch_examples(train_set, config, size, epoch);
      require(!examples.empty(), "train: no positive and negative proposals to train on");
      for (const auto& [b, e] : batches(examples.size(), config.batch_size)) {
        diff::Tape tape(config.precision, true);
        const auto logits = net->logits(
            tape, Variable(patch_batch(train_set, examples, b, e, net->config().patch_size, config, epoch,
                                       config.augment)));
        const auto labels = labels_of(examples, b, e);
        const Variable loss = loss::cross_entropy(tape, logits, labels);
        const double value = loss.value().item();
        if (!finite(value)) diverged(epoch);
        tape.backward(loss);
        sgd_momentum_step(params, velocities, config.learning_rate, config.momentum);
        loss_sum += value * static_cast<double>(e - b);
        seen += e - b;
      }
    }
    for (const auto& p : params)
      if (!p.value().all_finite()) diverged(epoch);

    history.train_loss.push_back(loss_sum / static_cast<double>(seen));
    last_good = model.state();
    EpochReport report{epoch, history.train_loss.back(), std::nullopt};
    if (epoch % config.validate_every == 0) {
      const auto entry = validate_model(model, val_set, config, epoch);
      history.validations.push_back(entry);
      report.validation = entry;
      if (entry.f1 > best_f1) {
        best_f1 = entry.f1;
        history.best_epoch = epoch;
        if (!dir.empty()) save_atomically(model, dir / "best.ckpt");
      }
    }
    if (!dir.empty()) save_atomically(model, dir / "latest.ckpt");
    write_history();
    if (on_epoch) on_epoch(report);
    if (config.early_stop_patience && history.best_epoch &&
        epoch - *history.best_epoch >= *config.early_stop_patience && epoch < config.epochs) {
      history.stopped_early = true;
      break;
    }
  }
  return history;
}

}  // namespace whdspot::train

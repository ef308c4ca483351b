#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "diffcore/tape.hpp"
#include "losses/losses.hpp"
#include "models/rcnn_net.hpp"
#include "models/unet.hpp"
#include "pipeline/inference.hpp"
#include "postprocess/postprocess.hpp"
#include "proposals/proposals.hpp"
#include "synthdata/dataset.hpp"

namespace whdspot::train {

enum class LossKind { whd, cross_entropy };

std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& name);
// whd for the UNet, cross-entropy for the patch classifiers.
LossKind loss_for(models::Architecture arch);

struct TrainConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  int batch_size = 10;
  int epochs = 100;
  int validate_every = 2;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::whd;
  loss::WhdParams whd;  // grid size is taken from the model
  std::filesystem::path checkpoint_dir;  // empty: keep nothing on disk
  std::optional<int> early_stop_patience = 20;
  // Random flips and right-angle rotations of every training image.
  bool augment = true;
  diff::Precision precision = diff::Precision::f64;

  // Validation F1.
  double match_radius = 4.0;
  post::ExtractionParams extraction{post::ThresholdMode::otsu, 0.5, 2, true};
  pipeline::DetectorParams detector;

  // Classifier path: proposals drawn per image, then per image at most
  // `positives_per_image` positives and three times as many negatives.
  proposals::ProposalConfig proposals;
  int positives_per_image = 2;

  void validate() const;
};

struct ValidationEntry {
  int epoch = 0;
  double loss = 0.0;
  double f1 = 0.0;
};

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch
  std::vector<ValidationEntry> validations;
  std::optional<int> best_epoch;
  bool stopped_early = false;
};

// v <- mu v - lr g; theta <- theta + v; gradients are zeroed afterwards.
// velocities is sized on first use.
void sgd_momentum_step(const std::vector<diff::Variable>& params, std::vector<diff::Tensor>& velocities, double lr,
                       double mu);

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<ValidationEntry> validation;
};
using EpochCallback = std::function<void(const EpochReport&)>;

// Trains `model` in place. A non-finite loss restores the last good state
// (the latest checkpoint, or the initial parameters) and throws.
TrainHistory train(models::Model& model, const std::vector<data::Sample>& train_set,
                   const std::vector<data::Sample>& val_set, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

// One labelled classifier example.
struct PatchExample {
  std::size_t image = 0;
  Box box;
  int label = 0;  // 1 object, 0 background
};

// Classifier examples for one epoch, in batch order: every batch of
// batch_size holds positives and negatives in a 1:3 ratio (rounded per batch,
// exact over consecutive batches). Depends only on (seed, epoch) and the
// sample indices, never on the order of `samples`.
std::vector<PatchExample> sample_patch_examples(const std::vector<data::Sample>& samples, const TrainConfig& config,
                                                int image_size, int epoch);

// Order in which samples are visited in an epoch; a function of the seed,
// the epoch and the sample indices only.
std::vector<std::size_t> epoch_order(const std::vector<data::Sample>& samples, std::uint64_t seed, int epoch);

// Validation loss and F1 in eval mode; parameters and running statistics
// are left untouched.
ValidationEntry validate_model(models::Model& model, const std::vector<data::Sample>& val_set,
                               const TrainConfig& config, int epoch);

// One row per epoch; validation columns are NA between validations.
std::string format_history_csv(const TrainHistory& history);

}  // namespace whdspot::train

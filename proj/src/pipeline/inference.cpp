#include "pipeline/inference.hpp"

#include <algorithm>
#include <cstring>

#include "common/error.hpp"
#include "proposals/proposals.hpp"

namespace whdspot::pipeline {

using diff::Shape;
using diff::Tensor;
using diff::Variable;

Tensor stack(const std::vector<Tensor>& images, std::size_t begin, std::size_t end) {
  require(begin < end && end <= images.size(), "stack: bad range");
  const Shape& s = images[begin].shape();
  require(s.size() == 3, "stack: expected [C,H,W] images, got " + diff::to_string(s));
  Tensor out(Shape{static_cast<std::int64_t>(end - begin), s[0], s[1], s[2]});
  const auto n = static_cast<std::size_t>(images[begin].size());
  for (std::size_t i = begin; i < end; ++i) {
    require(images[i].shape() == s, "stack: images differ in shape");
    std::memcpy(out.ptr() + (i - begin) * n, images[i].ptr(), n * sizeof(double));
  }
  return out;
}

namespace {

// Restores the model mode when leaving scope.
struct EvalScope {
  models::Model& model;
  diff::Mode saved;
  explicit EvalScope(models::Model& m) : model(m), saved(m.mode()) { m.set_mode(diff::Mode::eval); }
  ~EvalScope() { model.set_mode(saved); }
};

}  // namespace

std::vector<Prediction> infer_unet(models::UNet& model, const std::vector<Tensor>& images,
                                   const post::ExtractionParams& params, int batch, diff::Precision precision) {
  require(batch >= 1, "infer_unet: batch must be positive");
  params.validate();
  EvalScope scope(model);
  std::vector<Prediction> out;
  const int size = model.config().input_size;
  for (std::size_t b = 0; b < images.size(); b += static_cast<std::size_t>(batch)) {
    const std::size_t e = std::min(images.size(), b + static_cast<std::size_t>(batch));
    diff::Tape tape(precision, false);
    const auto result = model.forward(tape, Variable(stack(images, b, e)));
    const Tensor& maps = result.probmap.value();
    const std::size_t pixels = static_cast<std::size_t>(size) * size;
    for (std::size_t i = 0; i < e - b; ++i)
      out.push_back(predict_from_map(maps.ptr() + i * pixels, size, result.count[i], params));
  }
  return out;
}

Prediction predict_from_map(const double* map, int size, double count, const post::ExtractionParams& params) {
  const auto pixels = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  const post::MapView view{std::span<const double>(map, pixels), size, size};
  Prediction p;
  p.count_estimate = count;
  for (const auto& d : post::extract_detections(view, params, count)) {
    p.points.push_back(d.point);
    p.scores.push_back(d.score);
  }
  return p;
}

void DetectorParams::validate() const {
  require(!scales.empty(), "detector: need at least one window scale");
  require(stride >= 1, "detector: stride must be positive");
  require(score_threshold >= 0 && score_threshold <= 1, "detector: score threshold must lie in [0,1]");
  require(nms_threshold >= 0 && nms_threshold <= 1, "detector: NMS threshold must lie in [0,1]");
  require(batch >= 1, "detector: batch must be positive");
}

Prediction detect_rcnn(models::RcnnNet& model, const Tensor& image, const DetectorParams& params,
                       diff::Precision precision) {
  params.validate();
  require(image.rank() == 3 && image.dim(1) == image.dim(2), "detect_rcnn: expected a square [3,S,S] image");
  EvalScope scope(model);
  const int size = static_cast<int>(image.dim(1));
  const int patch = model.config().patch_size;
  const BoxSet windows = proposals::sliding_proposals(size, params.scales, params.stride);
  std::vector<double> object_score(windows.size());
  for (std::size_t b = 0; b < windows.size(); b += static_cast<std::size_t>(params.batch)) {
    const std::size_t e = std::min(windows.size(), b + static_cast<std::size_t>(params.batch));
    std::vector<Tensor> patches;
    for (std::size_t i = b; i < e; ++i) patches.push_back(proposals::extract_patch(image, windows[i], patch));
    diff::Tape tape(precision, false);
    const Tensor probs = diff::softmax(tape, model.logits(tape, Variable(stack(patches, 0, patches.size())))).value();
    const auto k = static_cast<std::size_t>(model.config().class_count);
    for (std::size_t i = b; i < e; ++i) object_score[i] = probs[(i - b) * k + 1];
  }
  BoxSet candidates;
  std::vector<double> scores;
  for (std::size_t i = 0; i < windows.size(); ++i)
    if (object_score[i] >= params.score_threshold) {
      candidates.push_back(windows[i]);
      scores.push_back(object_score[i]);
    }
  Prediction p;
  for (std::size_t i : proposals::nms(candidates, scores, params.nms_threshold)) {
    p.boxes.push_back(candidates[i]);
    p.scores.push_back(scores[i]);
    p.points.push_back(candidates[i].center());
  }
  p.count_estimate = static_cast<double>(p.points.size());
  return p;
}

}  // namespace whdspot::pipeline

#pragma once

#include <vector>

#include "common/geometry.hpp"
#include "diffcore/tape.hpp"
#include "models/rcnn_net.hpp"
#include "models/unet.hpp"
#include "postprocess/postprocess.hpp"

namespace whdspot::pipeline {

struct Prediction {
  PointSet points;
  std::vector<double> scores;
  BoxSet boxes;               // patch-classifier detections; empty for the UNet
  double count_estimate = 0;  // UNet count head; number of detections otherwise
};

// Runs the UNet in eval mode over [3,S,S] images in batches and extracts
// centroids, reconciled with the count head when the params ask for it.
std::vector<Prediction> infer_unet(models::UNet& model, const std::vector<diff::Tensor>& images,
                                   const post::ExtractionParams& params, int batch = 10,
                                   diff::Precision precision = diff::Precision::f64);

struct DetectorParams {
  std::vector<int> scales{8};
  int stride = 4;
  double score_threshold = 0.5;
  double nms_threshold = 0.3;
  int batch = 128;
  void validate() const;
};

// Sliding-window proposals, patch classification, score threshold, NMS; the
// detection centres become the predicted points.
Prediction detect_rcnn(models::RcnnNet& model, const diff::Tensor& image, const DetectorParams& params,
                       diff::Precision precision = diff::Precision::f64);

// Stacks [3,S,S] images into [N,3,S,S].
diff::Tensor stack(const std::vector<diff::Tensor>& images, std::size_t begin, std::size_t end);

}  // namespace whdspot::pipeline

namespace whdspot::pipeline {

// Extraction for one [size,size] probability map with its count estimate.
Prediction predict_from_map(const double* map, int size, double count, const post::ExtractionParams& params);

}  // namespace whdspot::pipeline

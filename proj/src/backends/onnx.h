#pragma once

#include "backends/backend.h"

namespace trapkit::backends {

// Adapter for networks exported to ONNX, run through OpenCV's DNN module.
//
// Detectors are expected to produce the YOLOv5 export layout, [1, N, 5 + C] rows of
// (cx, cy, w, h, objectness, class scores...) in input pixels, with class 0/1/2
// meaning animal/person/vehicle. Classifiers produce [1, K] logits in
// manifest.class_labels order. Inputs are RGB scaled to [0,1] and resized to
// input_size_px squared.
BackendHandle load_onnx_backend(const ModelManifest& manifest);

}  // namespace trapkit::backends

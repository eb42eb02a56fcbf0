#pragma once

#include <array>
#include <string>
#include <vector>

namespace flowgraph {

/// Axis-aligned box in normalized image coordinates: corner x, y plus
/// width and height, all within the unit square.
struct Detection {
  std::array<double, 4> box{0, 0, 0, 0};  // x, y, w, h
  std::string label;
  double score = 0;

  bool operator==(const Detection&) const = default;
};

using Detections = std::vector<Detection>;

/// Intersection over union of two boxes; 0 when disjoint.
double IoU(const std::array<double, 4>& a, const std::array<double, 4>& b);

/// Pairwise dedup: for any same-label pair with IoU above the threshold,
/// the lower-score member is dropped (earlier one wins a tie). Input
/// order is preserved.
Detections DedupDetections(const Detections& input, double iou_threshold);

/// Canonical literal form, stable across runs: round-trip double
/// formatting, entries in input order.
std::string DetectionsToLiteral(const Detections& dets);

/// Registers the Detections payload type name and formatter. Idempotent.
void RegisterDetectionsPayloadType();

}  // namespace flowgraph

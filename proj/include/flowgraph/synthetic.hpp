#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace flowgraph {

/// Stand-in for a camera frame: ground-truth object centers that drift
/// linearly with the timestamp, plus the drift itself so that a mock
/// tracker can advance detections the way a real tracker would follow
/// motion. Everything is a deterministic function of (seed, timestamp),
/// and all coordinates are dyadic rationals so the linear arithmetic is
/// exact in doubles.
struct SyntheticFrame {
  int64_t index = 0;
  std::vector<std::pair<double, double>> positions;  // centers at this ts
  double drift_x = 0;  // per timestamp tick
  double drift_y = 0;

  bool operator==(const SyntheticFrame&) const = default;
};

/// The deterministic object layout behind a synthetic frame stream.
struct SyntheticWorld {
  /// `objects` starting centers in [1/4, 1/2) on a 1/1024 grid; drift
  /// components in {0, 1, 2}/4096 per tick, derived from the seed.
  SyntheticWorld(uint64_t seed, int objects);

  SyntheticFrame FrameAt(int64_t index, int64_t timestamp) const;

  std::vector<std::pair<double, double>> starts;
  double drift_x = 0;
  double drift_y = 0;
};

/// Registers the SyntheticFrame payload type name and formatter.
void RegisterSyntheticFramePayloadType();

}  // namespace flowgraph

#include "flowgraph/detections.hpp"

#include <algorithm>
#include <charconv>

#include "flowgraph/payload.hpp"
#include "flowgraph/synthetic.hpp"

namespace flowgraph {

namespace {

std::string Round(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace

double IoU(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double x1 = std::max(a[0], b[0]);
  const double y1 = std::max(a[1], b[1]);
  const double x2 = std::min(a[0] + a[2], b[0] + b[2]);
  const double y2 = std::min(a[1] + a[3], b[1] + b[3]);
  const double iw = std::max(0.0, x2 - x1);
  const double ih = std::max(0.0, y2 - y1);
  const double inter = iw * ih;
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni <= 0 ? 0 : inter / uni;
}

Detections DedupDetections(const Detections& input, double iou_threshold) {
  std::vector<bool> dropped(input.size(), false);
  for (size_t i = 0; i < input.size(); ++i) {
    if (dropped[i]) continue;
    for (size_t j = i + 1; j < input.size(); ++j) {
      if (dropped[j]) continue;
      if (input[i].label != input[j].label) continue;
      if (IoU(input[i].box, input[j].box) <= iou_threshold) continue;
      if (input[j].score > input[i].score) {
        dropped[i] = true;
        break;
      }
      dropped[j] = true;
    }
  }
  Detections out;
  for (size_t i = 0; i < input.size(); ++i) {
    if (!dropped[i]) out.push_back(input[i]);
  }
  return out;
}

std::string DetectionsToLiteral(const Detections& dets) {
  std::string out = "[";
  for (size_t i = 0; i < dets.size(); ++i) {
    if (i > 0) out += ", ";
    const Detection& d = dets[i];
    out += "{box=[" + Round(d.box[0]) + "," + Round(d.box[1]) + "," +
           Round(d.box[2]) + "," + Round(d.box[3]) + "] label=" + d.label +
           " score=" + Round(d.score) + "}";
  }
  out += "]";
  return out;
}

void RegisterDetectionsPayloadType() {
  static const bool done = [] {
    RegisterPayloadType<Detections>("detections", DetectionsToLiteral);
    return true;
  }();
  (void)done;
}

void RegisterSyntheticFramePayloadType() {
  static const bool done = [] {
    RegisterPayloadType<SyntheticFrame>(
        "frame", [](const SyntheticFrame& f) {
          std::string out = "frame#" + std::to_string(f.index) + "[";
          for (size_t i = 0; i < f.positions.size(); ++i) {
            if (i > 0) out += ",";
            out += "(" + Round(f.positions[i].first) + "," +
                   Round(f.positions[i].second) + ")";
          }
          out += "]";
          return out;
        });
    return true;
  }();
  (void)done;
}

SyntheticWorld::SyntheticWorld(uint64_t seed, int objects) {
  // splitmix64 over the seed keeps the layout independent of library RNG
  // implementations.
  uint64_t state = seed;
  auto next = [&state] {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  for (int i = 0; i < objects; ++i) {
    const double x = static_cast<double>(256 + next() % 256) / 1024.0;
    const double y = static_cast<double>(256 + next() % 256) / 1024.0;
    starts.push_back({x, y});
  }
  drift_x = static_cast<double>(next() % 3) / 4096.0;
  drift_y = static_cast<double>(next() % 3) / 4096.0;
}

SyntheticFrame SyntheticWorld::FrameAt(int64_t index,
                                       int64_t timestamp) const {
  SyntheticFrame frame;
  frame.index = index;
  frame.drift_x = drift_x;
  frame.drift_y = drift_y;
  for (const auto& [x, y] : starts) {
    frame.positions.push_back({x + drift_x * static_cast<double>(timestamp),
                               y + drift_y * static_cast<double>(timestamp)});
  }
  return frame;
}

}  // namespace flowgraph

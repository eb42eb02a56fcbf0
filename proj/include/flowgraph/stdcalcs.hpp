#pragma once

#include <string>

#include "flowgraph/registry.hpp"

namespace flowgraph {

/// Registers the bundled calculators and their payload types:
///
///   PassThrough      IN -> OUT unchanged (option sleep_ms emulates load)
///   RoundRobinDemux  IN -> OUT0..OUTn-1 interleaved (option outputs)
///   Mux              IN0..INn-1 -> OUT, one present input per timestamp
///   FrameSelector    IN -> OUT at most every min_period ticks, drops rest
///   MockDetector     FRAME + side MODEL -> DETECTIONS (options sleep_ms,
///                    score, box_size, jitter)
///   MockTracker      FRAME + STATE loopback -> TRACKED
///   DetectionMerger  NEW + TRACKED -> MERGED with IoU dedup
///   Interpolator     SPARSE + CLOCK -> DENSE linear interpolation
///   FlowLimiter      IN + FINISHED loopback -> OUT, drops over
///                    max_in_flight
///   ScriptedSource   -> OUT, `count` packets every `period` ticks
///                    (options payload, seed, objects, sleep_ms)
///   MockLandmarker   FRAME -> LANDMARKS flattened positions
///   VectorJoin       IN0..INn-1 -> OUT concatenated vectors
///   RecordingSink    IN -> file or in-memory buffer, one line per packet
void RegisterStandardCalculators(CalculatorRegistry& registry);

/// In-memory recording sinks (option memory_key): fetch-and-clear the
/// recorded text. Used by tests and embedders.
std::string TakeRecordedText(const std::string& memory_key);

}  // namespace flowgraph

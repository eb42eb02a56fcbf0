#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowgraph/tracer.hpp"

namespace flowgraph {

/// Node/stream display names for reports. Indexes match the ids recorded
/// in trace events; id -1 (the application) needs no entry.
struct TraceNames {
  std::map<int, std::string> nodes;
  std::map<int, std::string> streams;

  std::string NodeName(int id) const {
    if (id < 0) return "<app>";
    auto it = nodes.find(id);
    return it == nodes.end() ? "node" + std::to_string(id) : it->second;
  }
  std::string StreamName(int id) const {
    auto it = streams.find(id);
    return it == streams.end() ? "stream" + std::to_string(id) : it->second;
  }
};

struct NodeStats {
  int node_id = -1;
  int64_t process_count = 0;
  int64_t total_us = 0;
  int64_t max_us = 0;
  // Power-of-two microsecond buckets: bucket b counts elapsed times in
  // [2^b, 2^(b+1)) us, bucket 0 also covers sub-microsecond calls.
  std::vector<int64_t> histogram_us;

  double MeanUs() const {
    return process_count == 0
               ? 0.0
               : static_cast<double>(total_us) /
                     static_cast<double>(process_count);
  }
};

struct StreamStats {
  int stream_id = 0;
  int64_t queued = 0;
  int64_t consumed = 0;
  int64_t dropped = 0;
  int64_t queue_high_water = 0;
  int64_t residency_total_us = 0;  // queue wait summed over consumed packets
};

struct TraceSummary {
  std::map<int, NodeStats> per_node;
  std::map<int, StreamStats> per_stream;
  // End-to-end latency for each packet consumed by a sink-like node,
  // keyed by data id: consumption time minus the packet's first
  // appearance in the trace.
  std::vector<std::pair<uint64_t, int64_t>> end_to_end_us;
  int64_t excluded_incomplete = 0;  // start/finish pairs cut by the ring

  std::string ToTable(const TraceNames& names) const;
  /// Machine-readable "node,<name>,count,total_us,mean_us,max_us" lines.
  std::string ToMachineLines(const TraceNames& names) const;
};

/// Aggregates a snapshot. Unmatched start/finish records at ring-overwrite
/// boundaries are excluded and counted, not errors; impossible sequences
/// (finish before start of the same node) throw MalformedTrace.
TraceSummary Summarize(const std::vector<TraceEvent>& events);

struct CriticalPathStep {
  int node_id = -1;
  int64_t start_ns = 0;
  int64_t finish_ns = 0;

  int64_t ElapsedNs() const { return finish_ns - start_ns; }
};

/// Walks backwards from the invocation that emitted `output_data_id`: at
/// each step it follows the input whose producing invocation finished
/// last, back to a source or graph input. Returned root-first. Throws
/// LineageBroken when the required events were overwritten.
///
/// A payload re-emitted downstream keeps its data id; pass
/// `output_stream_id` to anchor the walk at a specific emission,
/// otherwise the latest one is used.
std::vector<CriticalPathStep> CriticalPath(
    const std::vector<TraceEvent>& events, uint64_t output_data_id,
    int output_stream_id = -1);

}  // namespace flowgraph

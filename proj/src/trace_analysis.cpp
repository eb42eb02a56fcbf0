#include "flowgraph/trace_analysis.hpp"

#include <algorithm>
#include <sstream>

#include "flowgraph/error.hpp"

namespace flowgraph {

std::string_view TraceEventTypeName(TraceEventType type) {
  switch (type) {
    case TraceEventType::kProcessStart: return "ProcessStart";
    case TraceEventType::kProcessFinish: return "ProcessFinish";
    case TraceEventType::kOpenStart: return "OpenStart";
    case TraceEventType::kOpenFinish: return "OpenFinish";
    case TraceEventType::kCloseStart: return "CloseStart";
    case TraceEventType::kCloseFinish: return "CloseFinish";
    case TraceEventType::kPacketEmitted: return "PacketEmitted";
    case TraceEventType::kPacketQueued: return "PacketQueued";
    case TraceEventType::kPacketConsumed: return "PacketConsumed";
    case TraceEventType::kPacketDropped: return "PacketDropped";
    case TraceEventType::kBoundAdvanced: return "BoundAdvanced";
    case TraceEventType::kNodeReady: return "NodeReady";
    case TraceEventType::kThrottled: return "Throttled";
    case TraceEventType::kUnthrottled: return "Unthrottled";
    case TraceEventType::kDeadlockRelaxation: return "DeadlockRelaxation";
  }
  return "?";
}

namespace {

bool IsStart(TraceEventType t) {
  return t == TraceEventType::kProcessStart ||
         t == TraceEventType::kOpenStart || t == TraceEventType::kCloseStart;
}

bool IsFinish(TraceEventType t) {
  return t == TraceEventType::kProcessFinish ||
         t == TraceEventType::kOpenFinish || t == TraceEventType::kCloseFinish;
}

TraceEventType MatchingFinish(TraceEventType start) {
  switch (start) {
    case TraceEventType::kProcessStart: return TraceEventType::kProcessFinish;
    case TraceEventType::kOpenStart: return TraceEventType::kOpenFinish;
    default: return TraceEventType::kCloseFinish;
  }
}

int HistogramBucket(int64_t us) {
  int bucket = 0;
  while (us > 1 && bucket < 62) {
    us >>= 1;
    ++bucket;
  }
  return bucket;
}

}  // namespace

TraceSummary Summarize(const std::vector<TraceEvent>& events) {
  TraceSummary summary;
  // Pending start per node; the merged snapshot is time-ordered.
  std::map<int, const TraceEvent*> open_start;
  std::map<int, int64_t> queue_depth;          // per stream (summed queues)
  std::map<uint64_t, int64_t> first_seen_ns;   // data id -> first event
  std::map<std::pair<int, uint64_t>, int64_t> queued_at;  // residency

  for (const auto& e : events) {
    if (e.packet_data_id != 0 && first_seen_ns.count(e.packet_data_id) == 0) {
      first_seen_ns[e.packet_data_id] = e.event_time_ns;
    }
    if (IsStart(e.type)) {
      auto [it, inserted] = open_start.emplace(e.node_id, &e);
      if (!inserted) {
        throw FlowError(ErrorCode::kMalformedTrace,
                        "node " + std::to_string(e.node_id) +
                            " starts twice without finishing");
      }
      continue;
    }
    if (IsFinish(e.type)) {
      auto it = open_start.find(e.node_id);
      if (it == open_start.end() ||
          MatchingFinish(it->second->type) != e.type) {
        // Start overwritten at the ring's oldest edge: exclude and flag.
        ++summary.excluded_incomplete;
        continue;
      }
      if (e.type == TraceEventType::kProcessFinish) {
        NodeStats& stats = summary.per_node[e.node_id];
        stats.node_id = e.node_id;
        int64_t us = (e.event_time_ns - it->second->event_time_ns) / 1000;
        ++stats.process_count;
        stats.total_us += us;
        stats.max_us = std::max(stats.max_us, us);
        int bucket = HistogramBucket(us);
        if (static_cast<int>(stats.histogram_us.size()) <= bucket) {
          stats.histogram_us.resize(bucket + 1);
        }
        ++stats.histogram_us[bucket];
      }
      open_start.erase(it);
      continue;
    }
    switch (e.type) {
      case TraceEventType::kPacketQueued: {
        StreamStats& s = summary.per_stream[e.stream_id];
        s.stream_id = e.stream_id;
        ++s.queued;
        s.queue_high_water = std::max(s.queue_high_water,
                                      ++queue_depth[e.stream_id]);
        queued_at[{e.stream_id, e.packet_data_id}] = e.event_time_ns;
        break;
      }
      case TraceEventType::kPacketConsumed:
      case TraceEventType::kPacketDropped: {
        StreamStats& s = summary.per_stream[e.stream_id];
        s.stream_id = e.stream_id;
        if (e.type == TraceEventType::kPacketConsumed) {
          ++s.consumed;
        } else {
          ++s.dropped;
        }
        auto& depth = queue_depth[e.stream_id];
        if (depth > 0) --depth;
        auto it = queued_at.find({e.stream_id, e.packet_data_id});
        if (it != queued_at.end()) {
          s.residency_total_us += (e.event_time_ns - it->second) / 1000;
          queued_at.erase(it);
        }
        break;
      }
      default:
        break;
    }
  }
  // Starts with no finish (ring cut the tail or the run was sampled
  // mid-flight) are excluded, not errors.
  summary.excluded_incomplete += static_cast<int64_t>(open_start.size());

  // End-to-end: sink-like consumption is approximated by consumption
  // events for packets that are never re-emitted under a new data id by
  // the consuming node; cheap heuristic good enough for reports. The
  // precise per-output-packet latency lives in CriticalPath.
  for (const auto& e : events) {
    if (e.type != TraceEventType::kPacketConsumed) continue;
    auto it = first_seen_ns.find(e.packet_data_id);
    if (it != first_seen_ns.end()) {
      summary.end_to_end_us.push_back(
          {e.packet_data_id, (e.event_time_ns - it->second) / 1000});
    }
  }
  return summary;
}

std::string TraceSummary::ToTable(const TraceNames& names) const {
  std::ostringstream os;
  os << "node                          count    total_us     mean_us      max_us\n";
  for (const auto& [id, stats] : per_node) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-28s %6lld %11lld %11.1f %11lld\n",
                  names.NodeName(id).c_str(),
                  static_cast<long long>(stats.process_count),
                  static_cast<long long>(stats.total_us), stats.MeanUs(),
                  static_cast<long long>(stats.max_us));
    os << line;
  }
  os << "\nstream                        queued  consumed  dropped  high_water  residency_us\n";
  for (const auto& [id, stats] : per_stream) {
    char line[200];
    std::snprintf(line, sizeof(line),
                  "%-28s %7lld %9lld %8lld %11lld %13lld\n",
                  names.StreamName(id).c_str(),
                  static_cast<long long>(stats.queued),
                  static_cast<long long>(stats.consumed),
                  static_cast<long long>(stats.dropped),
                  static_cast<long long>(stats.queue_high_water),
                  static_cast<long long>(stats.residency_total_us));
    os << line;
  }
  if (excluded_incomplete > 0) {
    os << "\n(" << excluded_incomplete
       << " incomplete start/finish pairs excluded)\n";
  }
  return os.str();
}

std::string TraceSummary::ToMachineLines(const TraceNames& names) const {
  std::ostringstream os;
  for (const auto& [id, stats] : per_node) {
    os << "node," << names.NodeName(id) << "," << stats.process_count << ","
       << stats.total_us << "," << stats.MeanUs() << "," << stats.max_us
       << "\n";
  }
  return os.str();
}

namespace {

struct Invocation {
  int node_id = -1;
  int64_t start_ns = 0;
  int64_t finish_ns = 0;
  std::vector<const TraceEvent*> consumed;  // inputs of this invocation
};

struct Lineage {
  // All invocations per node, in time order.
  std::map<int, std::vector<Invocation>> by_node;
  // data id+stream -> (node, invocation index) that emitted it.
  std::map<std::pair<uint64_t, int>, std::pair<int, size_t>> emitted_by;
  // data id -> any emitting invocation (stream-agnostic fallback).
  std::map<uint64_t, std::pair<int, size_t>> emitted_any;
};

Lineage BuildLineage(const std::vector<TraceEvent>& events) {
  Lineage lin;
  std::map<int, Invocation> open;               // node -> running invocation
  std::map<int, std::vector<const TraceEvent*>> pending_consumed;

  for (const auto& e : events) {
    switch (e.type) {
      case TraceEventType::kPacketConsumed:
        // Consumption is recorded just before the invocation it feeds.
        pending_consumed[e.node_id].push_back(&e);
        break;
      case TraceEventType::kProcessStart:
      case TraceEventType::kOpenStart:
      case TraceEventType::kCloseStart: {
        Invocation inv;
        inv.node_id = e.node_id;
        inv.start_ns = e.event_time_ns;
        inv.consumed = std::move(pending_consumed[e.node_id]);
        pending_consumed[e.node_id].clear();
        open[e.node_id] = std::move(inv);
        break;
      }
      case TraceEventType::kProcessFinish:
      case TraceEventType::kOpenFinish:
      case TraceEventType::kCloseFinish: {
        auto it = open.find(e.node_id);
        if (it == open.end()) break;
        it->second.finish_ns = e.event_time_ns;
        lin.by_node[e.node_id].push_back(std::move(it->second));
        open.erase(it);
        break;
      }
      default:
        break;
    }
  }
  // Second pass: map emissions to the invocation whose [start, finish]
  // interval contains them (graph-input emissions map to node -1). A
  // payload keeps its data id when re-emitted downstream, so the
  // stream-agnostic entry point tracks the latest emission.
  for (const auto& e : events) {
    if (e.type != TraceEventType::kPacketEmitted) continue;
    std::pair<uint64_t, int> key{e.packet_data_id, e.stream_id};
    if (e.node_id < 0) {
      lin.emitted_by[key] = {-1, 0};
      lin.emitted_any[e.packet_data_id] = {-1, 0};
      continue;
    }
    const auto& invocations = lin.by_node[e.node_id];
    for (size_t i = 0; i < invocations.size(); ++i) {
      if (e.event_time_ns >= invocations[i].start_ns &&
          e.event_time_ns <= invocations[i].finish_ns) {
        lin.emitted_by[key] = {e.node_id, i};
        lin.emitted_any[e.packet_data_id] = {e.node_id, i};
        break;
      }
    }
  }
  return lin;
}

}  // namespace

std::vector<CriticalPathStep> CriticalPath(
    const std::vector<TraceEvent>& events, uint64_t output_data_id,
    int output_stream_id) {
  Lineage lin = BuildLineage(events);

  std::pair<int, size_t> entry;
  if (output_stream_id >= 0) {
    auto it = lin.emitted_by.find({output_data_id, output_stream_id});
    if (it == lin.emitted_by.end()) {
      throw FlowError(ErrorCode::kLineageBroken,
                      "no emission of data id " +
                          std::to_string(output_data_id) + " on stream " +
                          std::to_string(output_stream_id));
    }
    entry = it->second;
  } else {
    auto it = lin.emitted_any.find(output_data_id);
    if (it == lin.emitted_any.end()) {
      throw FlowError(ErrorCode::kLineageBroken,
                      "no emission recorded for data id " +
                          std::to_string(output_data_id));
    }
    entry = it->second;
  }

  std::vector<CriticalPathStep> path;
  std::pair<int, size_t> at = entry;
  while (at.first >= 0) {
    const Invocation& inv = lin.by_node[at.first][at.second];
    path.push_back({inv.node_id, inv.start_ns, inv.finish_ns});

    // Choose the input whose producing invocation finished last.
    const TraceEvent* latest_input = nullptr;
    std::pair<int, size_t> latest_producer{-1, 0};
    int64_t latest_finish = -1;
    for (const TraceEvent* consumed : inv.consumed) {
      auto produced = lin.emitted_by.find(
          {consumed->packet_data_id, consumed->stream_id});
      if (produced == lin.emitted_by.end()) {
        throw FlowError(ErrorCode::kLineageBroken,
                        "producer of data id " +
                            std::to_string(consumed->packet_data_id) +
                            " missing from trace");
      }
      if (produced->second.first < 0) {
        // Graph input: terminates the walk if it is the latest.
        if (latest_finish < 0) {
          latest_input = consumed;
          latest_producer = {-1, 0};
        }
        continue;
      }
      const Invocation& pinv =
          lin.by_node[produced->second.first][produced->second.second];
      if (pinv.finish_ns > latest_finish) {
        latest_finish = pinv.finish_ns;
        latest_input = consumed;
        latest_producer = produced->second;
      }
    }
    if (latest_input == nullptr) break;  // source invocation: no inputs
    if (latest_producer.first < 0) break;  // fed by a graph input
    at = latest_producer;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace flowgraph

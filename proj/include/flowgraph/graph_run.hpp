#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "flowgraph/packet.hpp"
#include "flowgraph/trace_analysis.hpp"
#include "flowgraph/tracer.hpp"
#include "flowgraph/validated_graph.hpp"

namespace flowgraph {

struct RunResult {
  enum class Status { kDone, kError };
  Status status = Status::kDone;
  std::string message;

  bool ok() const { return status == Status::kDone; }
};

struct RunOptions {
  /// Worker-count overrides by executor name ("" = the default executor).
  std::map<std::string, int> executor_workers;
  /// Overrides the graph-level default queue limit when >= 0.
  int max_queue_size_override = -1;
  /// Overrides the config's trace_enabled when set.
  std::optional<bool> trace_enabled;
  size_t trace_shard_capacity = TraceBuffer::kDefaultShardCapacity;
  /// Serializes every executor onto a single worker.
  bool deterministic = false;
  uint64_t seed = 0;

  // Scheduling-stress knobs for tests: a uniform random delay before each
  // lifecycle call, and a shuffle of equal-priority tie-breaks.
  double test_task_delay_max_ms = 0;
  uint64_t test_task_delay_seed = 0;
  uint64_t test_tie_shuffle_seed = 0;
};

struct OutputEvent {
  enum class Kind { kPacket, kBound, kClosed };
  Kind kind = Kind::kPacket;
  Packet packet;                         // kPacket
  Timestamp bound = Timestamp::Unset();  // kBound
};

/// Pull-style observer of one graph output stream. Events arrive in
/// stream order; kClosed is the final event.
class OutputPoller {
 public:
  /// Blocks until an event is available or the stream can produce no
  /// more; nullopt is terminal.
  std::optional<OutputEvent> Next();
  std::optional<OutputEvent> TryNext();

 private:
  friend class GraphRun;
  struct State;
  explicit OutputPoller(std::shared_ptr<State> state)
      : state_(std::move(state)) {}
  std::shared_ptr<State> state_;
};

/// One execution of a validated graph: fresh calculator instances, fresh
/// queues. Runs are restartable by constructing a new GraphRun over the
/// same ValidatedGraph.
///
/// Thread contract: SupplySidePacket/ObserveOutput/AddOutputPoller before
/// Start; AddToGraphInput/CloseGraphInput/WaitUntilDone from any
/// application thread while running. Observation callbacks fire on worker
/// threads, one at a time per observed stream, in timestamp order.
class GraphRun {
 public:
  GraphRun(const ValidatedGraph& graph, const CalculatorRegistry& registry,
           RunOptions options = {});
  ~GraphRun();

  GraphRun(const GraphRun&) = delete;
  GraphRun& operator=(const GraphRun&) = delete;

  void SupplySidePacket(const std::string& name, Packet value);
  void ObserveOutput(const std::string& stream,
                     std::function<void(const Packet&)> callback);
  OutputPoller AddOutputPoller(const std::string& stream);

  /// Validates side-packet supply and launches the workers. Throws
  /// StartupError.
  void Start();

  /// Feeds a packet into a graph input stream, as if emitted by a virtual
  /// source. Blocks while the destination queues are at their limit, so
  /// back-pressure reaches the application. Throws UnknownStream,
  /// NonMonotonicTimestamp or GraphTerminated.
  void AddToGraphInput(const std::string& stream, Packet p);

  /// Closes a graph input stream (idempotent). All graph inputs must be
  /// closed for the run to terminate.
  void CloseGraphInput(const std::string& stream);
  void CloseAllGraphInputs();

  RunResult WaitUntilDone();

  bool finished() const;

  std::vector<TraceEvent> TraceSnapshot() const;
  uint64_t TraceDroppedCount() const;
  TraceNames MakeTraceNames() const;

 private:
  struct Engine;
  std::unique_ptr<Engine> engine_;
};

/// Convenience for graphs without graph input streams.
RunResult RunGraph(const ValidatedGraph& graph,
                   const CalculatorRegistry& registry, RunOptions options = {},
                   std::map<std::string, Packet> side_packets = {});

}  // namespace flowgraph

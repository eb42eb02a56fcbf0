#include "flowgraph/graph_run.hpp"

#include <algorithm>
#include <cassert>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "flowgraph/policies.hpp"

namespace flowgraph {

// ---------------------------------------------------------------------------
// OutputPoller
// ---------------------------------------------------------------------------

struct OutputPoller::State {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<OutputEvent> events;
  bool terminated = false;  // no further events will ever arrive

  void Push(OutputEvent event) {
    {
      std::lock_guard<std::mutex> lock(mu);
      if (terminated) return;
      if (event.kind == OutputEvent::Kind::kClosed) terminated = true;
      events.push_back(std::move(event));
    }
    cv.notify_all();
  }

  void ForceTerminate() {
    {
      std::lock_guard<std::mutex> lock(mu);
      if (terminated) return;
      terminated = true;
      events.push_back({OutputEvent::Kind::kClosed, {}, Timestamp::Unset()});
    }
    cv.notify_all();
  }
};

std::optional<OutputEvent> OutputPoller::Next() {
  std::unique_lock<std::mutex> lock(state_->mu);
  state_->cv.wait(lock,
                  [&] { return !state_->events.empty() || state_->terminated; });
  if (state_->events.empty()) return std::nullopt;
  OutputEvent event = std::move(state_->events.front());
  state_->events.pop_front();
  return event;
}

std::optional<OutputEvent> OutputPoller::TryNext() {
  std::lock_guard<std::mutex> lock(state_->mu);
  if (state_->events.empty()) return std::nullopt;
  OutputEvent event = std::move(state_->events.front());
  state_->events.pop_front();
  return event;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

namespace {

enum class TaskKind { kOpen, kProcess, kClose, kObserverDrain };

struct TaskKey {
  int priority;   // higher runs first
  int tie_rank;   // declaration order (possibly shuffled for tests)
  int node;       // >= 0 calculator node, < 0 observer (-1 - index)

  bool operator<(const TaskKey& other) const {
    if (priority != other.priority) return priority > other.priority;
    if (tie_rank != other.tie_rank) return tie_rank < other.tie_rank;
    return node < other.node;
  }
};

}  // namespace

struct GraphRun::Engine {
  // -- immutable after Start --------------------------------------------
  const ValidatedGraph& graph;
  const CalculatorRegistry& registry;
  RunOptions options;

  class NodeContext;

  struct NodeRuntime {
    const ValidatedNode* spec = nullptr;
    std::unique_ptr<Calculator> calculator;
    std::unique_ptr<NodeContext> context;
    std::vector<InputQueue*> input_queues;  // by slot; null = unconnected
    std::vector<std::unique_ptr<OutputPort>> output_ports;  // by slot
    std::vector<std::vector<int>> policy_groups;  // grouped policy slots
    bool opened = false;
    bool closed = false;
    bool running = false;
    bool task_pending = false;
    bool throttled = false;
    bool source_done = false;
    TaskKind pending_kind = TaskKind::kOpen;
    Timestamp last_default_ts = Timestamp::Unset();  // ascending-set check
    std::vector<Timestamp> last_group_ts;
  };

  struct ObserverRuntime {
    int id = 0;  // trace node id (beyond calculator nodes)
    int stream_id = 0;
    std::unique_ptr<InputQueue> queue;
    std::function<void(const OutputEvent&)> deliver;
    Timestamp reported_bound = Timestamp::Min();
    bool closed_delivered = false;
    bool task_pending = false;
    bool running = false;
    int priority = 0;
    std::shared_ptr<OutputPoller::State> poller;  // null for callbacks
  };

  struct ExecutorPool {
    ExecutorConfig config;
    int workers = 1;
    std::condition_variable cv;
    std::set<TaskKey> ready;
    std::vector<std::thread> threads;
  };

  // -- state guarded by mu ----------------------------------------------
  std::mutex mu;
  std::condition_variable feeder_cv;
  std::condition_variable done_cv;
  std::vector<NodeRuntime> nodes;
  std::vector<ObserverRuntime> observers;
  std::vector<std::unique_ptr<InputQueue>> queues;  // all consumer queues
  std::vector<std::unique_ptr<OutputPort>> graph_input_ports;
  std::map<std::string, int> graph_input_index;  // stream name -> port idx
  std::vector<bool> graph_input_closed;
  std::vector<int> feed_blocked_on_stream;  // count of blocked feeders
  std::vector<std::unique_ptr<ExecutorPool>> pools;
  std::map<std::string, Packet> supplied_side_packets;
  std::vector<std::optional<Packet>> side_values;  // by side packet id
  std::vector<int> tie_rank;                       // by task node id order
  int pending_tasks = 0;
  int running_tasks = 0;
  int open_graph_inputs = 0;
  int closed_nodes = 0;
  int blocked_feeders = 0;
  bool started = false;
  bool finished_flag = false;
  bool shutdown = false;
  bool error_mode = false;
  bool joined = false;
  std::string error_message;
  RunResult result;
  TraceBuffer tracer;

  Engine(const ValidatedGraph& g, const CalculatorRegistry& r, RunOptions opts)
      : graph(g),
        registry(r),
        options(std::move(opts)),
        tracer(TotalWorkers() + 1, options.trace_shard_capacity,
               options.trace_enabled.value_or(graph.trace_enabled)) {}

  // ---------------------------------------------------------------------
  // Setup
  // ---------------------------------------------------------------------

  int WorkersFor(const ExecutorConfig& config) const {
    if (options.deterministic) return 1;
    auto it = options.executor_workers.find(config.name);
    int n = it != options.executor_workers.end() ? it->second
                                                 : config.num_workers;
    if (n <= 0) {
      n = static_cast<int>(std::thread::hardware_concurrency());
      if (n <= 0) n = 2;
    }
    return n;
  }

  int TotalWorkers() const {
    int total = 0;
    for (const auto& exec : graph.executors) total += WorkersFor(exec);
    return total;
  }

  int QueueLimitFor(const ValidatedNode& consumer) const {
    if (consumer.max_queue_size >= 0) return consumer.max_queue_size;
    if (options.max_queue_size_override >= 0) {
      return options.max_queue_size_override;
    }
    return graph.default_max_queue_size;
  }

  void Build();
  void Start();
  void StartupCheckSidePackets();

  // ---------------------------------------------------------------------
  // Tracing helpers (shard is the calling worker's shard; 0 = external)
  // ---------------------------------------------------------------------

  // Trace stream ids are offset by one: 0 means "no stream".
  static int TraceStreamId(int stream_id) { return stream_id + 1; }

  void Record(int shard, TraceEventType type, int node_id, int stream_id = -1,
              Timestamp ts = Timestamp::Unset(), uint64_t data_id = 0) {
    TraceEvent event;
    event.type = type;
    event.node_id = node_id;
    event.stream_id = TraceStreamId(stream_id);
    event.packet_timestamp = ts.value();
    event.packet_data_id = data_id;
    tracer.Record(shard, event);
  }

  // ---------------------------------------------------------------------
  // Scheduling (all *Locked methods require mu)
  // ---------------------------------------------------------------------

  int TaskRank(int task_node) const {  // declaration-order tie rank
    return tie_rank[TaskIndex(task_node)];
  }
  int TaskIndex(int task_node) const {
    return task_node >= 0 ? task_node
                          : static_cast<int>(nodes.size()) + (-task_node - 1);
  }

  void PromoteLocked(int node_id, TaskKind kind, int shard) {
    NodeRuntime& node = nodes[node_id];
    node.task_pending = true;
    node.pending_kind = kind;
    ++pending_tasks;
    ExecutorPool& pool = *pools[node.spec->executor_id];
    pool.ready.insert({node.spec->priority, TaskRank(node_id), node_id});
    if (kind == TaskKind::kProcess) {
      Record(shard, TraceEventType::kNodeReady, node_id);
    }
    pool.cv.notify_one();
  }

  void PromoteObserverLocked(int index) {
    ObserverRuntime& obs = observers[index];
    if (obs.task_pending || obs.running) return;
    obs.task_pending = true;
    ++pending_tasks;
    pools[0]->ready.insert({obs.priority, TaskRank(-1 - index), -1 - index});
    pools[0]->cv.notify_one();
  }

  bool SidePacketsReadyLocked(const NodeRuntime& node) const {
    for (size_t i = 0; i < node.spec->side_inputs.size(); ++i) {
      int id = node.spec->side_inputs[i].side_id;
      if (id < 0) {
        if (!node.spec->contract.input_side_packets()[i].optional) {
          return false;  // required but unbound: never openable
        }
        continue;
      }
      if (!side_values[id].has_value()) return false;
    }
    return true;
  }

  bool AllInputsDoneAndEmptyLocked(const NodeRuntime& node) const {
    for (const InputQueue* q : node.input_queues) {
      if (q != nullptr && !q->done_and_empty()) return false;
    }
    return true;
  }

  bool PolicyHasReadyLocked(const NodeRuntime& node) const {
    switch (node.spec->policy.kind) {
      case InputPolicyKind::kDefault:
        return DefaultHasReady(node.input_queues);
      case InputPolicyKind::kImmediate:
        return ImmediateHasReady(node.input_queues);
      case InputPolicyKind::kGrouped:
        return GroupedHasReady(node.input_queues, node.policy_groups);
    }
    return false;
  }

  std::optional<InputSet> PolicyPopLocked(NodeRuntime& node) {
    switch (node.spec->policy.kind) {
      case InputPolicyKind::kDefault:
        return DefaultReady(node.input_queues);
      case InputPolicyKind::kImmediate:
        return ImmediateReady(node.input_queues);
      case InputPolicyKind::kGrouped:
        return GroupedReady(node.input_queues, node.policy_groups);
    }
    return std::nullopt;
  }

  void EvaluateNodeLocked(int node_id, int shard) {
    if (finished_flag) return;
    NodeRuntime& node = nodes[node_id];
    if (node.closed || node.running || node.task_pending) return;
    if (!node.opened) {
      if (error_mode) {
        // Never opened: no lifecycle calls; retire it directly.
        node.closed = true;
        ++closed_nodes;
        return;
      }
      if (SidePacketsReadyLocked(node)) {
        PromoteLocked(node_id, TaskKind::kOpen, shard);
      }
      return;
    }
    if (error_mode) {
      PromoteLocked(node_id, TaskKind::kClose, shard);
      return;
    }
    if (node.spec->is_source) {
      if (node.source_done) {
        PromoteLocked(node_id, TaskKind::kClose, shard);
      } else if (!node.throttled) {
        PromoteLocked(node_id, TaskKind::kProcess, shard);
      }
      return;
    }
    if (AllInputsDoneAndEmptyLocked(node)) {
      PromoteLocked(node_id, TaskKind::kClose, shard);
      return;
    }
    if (node.throttled) return;
    if (PolicyHasReadyLocked(node)) {
      PromoteLocked(node_id, TaskKind::kProcess, shard);
    }
  }

  void EvaluateObserverLocked(int index) {
    ObserverRuntime& obs = observers[index];
    if (obs.closed_delivered) return;
    const InputQueue& q = *obs.queue;
    if (q.SettledFrontTimestamp() || q.bound() > obs.reported_bound ||
        q.done_and_empty()) {
      PromoteObserverLocked(index);
    }
  }

  void EvaluateStreamConsumersLocked(int stream_id, int shard) {
    const ValidatedStream& stream = graph.streams[stream_id];
    for (const StreamConsumer& consumer : stream.consumers) {
      EvaluateNodeLocked(consumer.node, shard);
    }
    for (size_t i = 0; i < observers.size(); ++i) {
      if (observers[i].stream_id == stream_id) {
        EvaluateObserverLocked(static_cast<int>(i));
      }
    }
  }

  /// Recomputes the producing node's throttle state after a queue change.
  void UpdateThrottleLocked(int producer_node, int shard) {
    if (producer_node < 0) return;  // graph input: feeder blocking covers it
    NodeRuntime& node = nodes[producer_node];
    bool throttled = false;
    for (const auto& port : node.output_ports) {
      if (port == nullptr) continue;
      for (const InputQueue* q : port->consumers()) {
        if (q->AtOrOverLimit()) {
          throttled = true;
          break;
        }
      }
      if (throttled) break;
    }
    if (throttled != node.throttled) {
      node.throttled = throttled;
      Record(shard,
             throttled ? TraceEventType::kThrottled
                       : TraceEventType::kUnthrottled,
             producer_node);
      if (!throttled) EvaluateNodeLocked(producer_node, shard);
    }
  }

  /// Restores a relaxed limit once the queue drains below the original.
  void AfterPopLocked(InputQueue& q, int shard) {
    if (q.effective_limit() > q.original_limit() && q.original_limit() > 0 &&
        static_cast<int>(q.size()) < q.original_limit()) {
      q.set_effective_limit(q.original_limit());
    }
    UpdateThrottleLocked(graph.streams[q.stream_id()].producer_node, shard);
    if (blocked_feeders > 0) feeder_cv.notify_all();
  }

  // ---------------------------------------------------------------------
  // Emission (reached through contexts and graph inputs)
  // ---------------------------------------------------------------------

  void EmitOnPortLocked(OutputPort& port, const Packet& p, int producer_node,
                        int shard) {
    port.Emit(p);  // throws on misuse; queues updated on success
    Record(shard, TraceEventType::kPacketEmitted, producer_node,
           port.stream_id(), p.timestamp(), p.data_id());
    for (InputQueue* q : port.consumers()) {
      Record(shard, TraceEventType::kPacketQueued, q->consumer_node(),
             q->stream_id(), p.timestamp(), p.data_id());
    }
    EvaluateStreamConsumersLocked(port.stream_id(), shard);
    UpdateThrottleLocked(producer_node, shard);
  }

  void SetBoundOnPortLocked(OutputPort& port, Timestamp bound,
                            int producer_node, int shard) {
    if (bound == port.bound()) return;
    port.SetBound(bound);
    Record(shard, TraceEventType::kBoundAdvanced, producer_node,
           port.stream_id(), bound);
    EvaluateStreamConsumersLocked(port.stream_id(), shard);
  }

  // ---------------------------------------------------------------------
  // Quiescence: deadlock relaxation, forced drain, completion
  // ---------------------------------------------------------------------

  bool AllNodesClosedLocked() const {
    return closed_nodes == static_cast<int>(nodes.size());
  }

  void HandleQuiescenceLocked(int shard) {
    if (finished_flag || pending_tasks > 0 || running_tasks > 0) return;
    if (AllNodesClosedLocked()) {
      bool observers_done = true;
      for (const auto& obs : observers) {
        if (!obs.closed_delivered) observers_done = false;
      }
      if (observers_done) FinishLocked();
      return;
    }
    if (error_mode) return;  // close tasks are in flight or about to be

    bool any_throttled = false;
    for (const auto& node : nodes) {
      if (node.throttled && !node.closed) any_throttled = true;
    }
    if (any_throttled || blocked_feeders > 0) {
      RelaxDeadlockLocked(shard);
      return;
    }
    if (open_graph_inputs > 0) return;  // the application owes input/closes
    ForcedDrainLocked(shard);
  }

  void RelaxDeadlockLocked(int shard) {
    // Smallest-effective-limit saturated queue among throttled producers'
    // outputs and blocked graph-input streams; bump by its original limit.
    InputQueue* target = nullptr;
    for (const auto& up : queues) {
      InputQueue* q = up.get();
      if (!q->AtOrOverLimit()) continue;
      const int producer = graph.streams[q->stream_id()].producer_node;
      bool eligible;
      if (producer >= 0) {
        eligible = nodes[producer].throttled && !nodes[producer].closed;
      } else {
        auto it = graph_input_index.find(graph.streams[q->stream_id()].name);
        eligible = it != graph_input_index.end() &&
                   feed_blocked_on_stream[it->second] > 0;
      }
      if (!eligible) continue;
      if (target == nullptr ||
          q->effective_limit() < target->effective_limit()) {
        target = q;
      }
    }
    if (target == nullptr) {
      // A feeder woken by an earlier relaxation may still be mid-flight;
      // it re-checks saturation itself. Otherwise this is a real stall.
      if (blocked_feeders > 0) return;
      error_mode = true;
      error_message = "Stalled: nothing ready or running and relaxation "
                      "found no saturated queue to raise";
      AbortPendingAndCloseAllLocked(shard);
      return;
    }
    const int producer = graph.streams[target->stream_id()].producer_node;
    target->set_effective_limit(target->effective_limit() +
                                target->original_limit());
    Record(shard, TraceEventType::kDeadlockRelaxation,
           target->consumer_node(), target->stream_id());
    UpdateThrottleLocked(producer, shard);
    feeder_cv.notify_all();
    // A relaxed feeder stream resumes through the waiting feeder. A node
    // producer may still be throttled by another saturated queue, in
    // which case the graph stays quiescent and the next queue gets
    // relaxed here.
    if (producer >= 0 && pending_tasks == 0 && running_tasks == 0) {
      HandleQuiescenceLocked(shard);
    }
  }

  void ForcedDrainLocked(int shard) {
    // Sources are done and all graph inputs are closed, yet nodes remain
    // open: a starved cycle (e.g. a tracker waiting on its loopback).
    // Close the most upstream open node; bounds then propagate and the
    // rest drains or recurses here.
    int victim = -1;
    for (const auto& node : nodes) {
      if (node.closed) continue;
      if (victim < 0 ||
          node.spec->priority < nodes[victim].spec->priority ||
          (node.spec->priority == nodes[victim].spec->priority &&
           node.spec->id < victim)) {
        victim = node.spec->id;
      }
    }
    if (victim < 0) return;
    NodeRuntime& node = nodes[victim];
    if (!node.opened) {
      // It can never open now; that is a configuration error worth
      // surfacing rather than silently skipping.
      error_mode = true;
      error_message = "node " + node.spec->name +
                      " was never opened (side packet missing for the whole "
                      "run)";
      AbortPendingAndCloseAllLocked(shard);
      return;
    }
    PromoteLocked(victim, TaskKind::kClose, shard);
  }

  void AbortPendingAndCloseAllLocked(int shard) {
    for (auto& pool : pools) pool->ready.clear();
    for (auto& node : nodes) {
      if (node.task_pending) {
        node.task_pending = false;
        --pending_tasks;
      }
    }
    for (auto& obs : observers) {
      if (obs.task_pending) {
        obs.task_pending = false;
        --pending_tasks;
      }
    }
    for (auto& node : nodes) {
      EvaluateNodeLocked(node.spec->id, shard);
    }
    for (size_t i = 0; i < observers.size(); ++i) {
      // Observers still drain what is already settled.
      EvaluateObserverLocked(static_cast<int>(i));
    }
    HandleQuiescenceLocked(shard);
  }

  void HandleNodeErrorLocked(int node_id, const std::string& what,
                             int shard) {
    std::string message = "node " + nodes[node_id].spec->name + ": " + what;
    if (!error_mode) {
      error_mode = true;
      error_message = message;
      AbortPendingAndCloseAllLocked(shard);
    } else {
      error_message += "; " + message;
    }
  }

  void FinishLocked() {
    finished_flag = true;
    shutdown = true;
    result.status =
        error_mode ? RunResult::Status::kError : RunResult::Status::kDone;
    result.message = error_message;
    for (auto& pool : pools) pool->cv.notify_all();
    feeder_cv.notify_all();
    done_cv.notify_all();
  }

  // ---------------------------------------------------------------------
  // Task execution
  // ---------------------------------------------------------------------

  void WorkerMain(int pool_index, int shard) {
    std::mt19937_64 delay_rng(options.test_task_delay_seed ^
                              (0x9e3779b97f4a7c15ULL * (shard + 1)));
    std::unique_lock<std::mutex> lock(mu);
    ExecutorPool& pool = *pools[pool_index];
    while (true) {
      pool.cv.wait(lock, [&] { return shutdown || !pool.ready.empty(); });
      if (shutdown) return;
      TaskKey key = *pool.ready.begin();
      pool.ready.erase(pool.ready.begin());
      --pending_tasks;
      if (key.node >= 0) {
        RunNodeTask(lock, key.node, shard, delay_rng);
      } else {
        RunObserverTask(lock, -key.node - 1, shard);
      }
    }
  }

  void MaybeDelay(std::mt19937_64& rng) {
    if (options.test_task_delay_max_ms <= 0) return;
    std::uniform_real_distribution<double> dist(0,
                                                options.test_task_delay_max_ms);
    std::this_thread::sleep_for(
        std::chrono::duration<double, std::milli>(dist(rng)));
  }

  void RunNodeTask(std::unique_lock<std::mutex>& lock, int node_id, int shard,
                   std::mt19937_64& delay_rng);
  void RunObserverTask(std::unique_lock<std::mutex>& lock, int index,
                       int shard);

  // Defined after NodeContext.
  void StartRunLocked();
};

// ---------------------------------------------------------------------------
// NodeContext
// ---------------------------------------------------------------------------

class GraphRun::Engine::NodeContext : public CalculatorContext {
 public:
  enum class Phase { kIdle, kOpen, kProcess, kClose };

  NodeContext(Engine* engine, int node_id, uint64_t seed)
      : engine_(engine), node_id_(node_id), seed_(seed) {
    const ValidatedNode& spec = *engine_->nodes[node_id_].spec;
    for (size_t i = 0; i < spec.inputs.size(); ++i) {
      input_slots_[spec.inputs[i].tag] = static_cast<int>(i);
    }
    for (size_t i = 0; i < spec.outputs.size(); ++i) {
      output_slots_[spec.outputs[i].tag] = static_cast<int>(i);
    }
    for (size_t i = 0; i < spec.side_inputs.size(); ++i) {
      side_input_slots_[spec.side_inputs[i].tag] = static_cast<int>(i);
    }
    for (size_t i = 0; i < spec.side_outputs.size(); ++i) {
      side_output_slots_[spec.side_outputs[i].tag] = static_cast<int>(i);
    }
  }

  // Called by the engine around lifecycle invocations (under mu).
  void BeginTask(Phase phase, int shard) {
    phase_ = phase;
    shard_ = shard;
  }
  void SetInputSet(InputSet set) { set_ = std::move(set); }
  void ClearInputSet() { set_.reset(); }
  int shard() const { return shard_; }

  const NodeOptions& Options() const override {
    return engine_->nodes[node_id_].spec->config.options;
  }
  std::string_view NodeName() const override {
    return engine_->nodes[node_id_].spec->name;
  }
  uint64_t NodeSeed() const override { return seed_; }

  const Packet* InputSidePacket(std::string_view tag) const override {
    auto it = side_input_slots_.find(std::string(tag));
    if (it == side_input_slots_.end()) {
      throw FlowError(ErrorCode::kMissingSidePacket,
                      NodeErr("no input side packet tagged '" +
                              std::string(tag) + "'"));
    }
    int side_id =
        engine_->nodes[node_id_].spec->side_inputs[it->second].side_id;
    if (side_id < 0) return nullptr;
    std::lock_guard<std::mutex> lock(engine_->mu);
    const auto& value = engine_->side_values[side_id];
    return value.has_value() ? &*value : nullptr;
  }

  void SetOutputSidePacket(std::string_view tag, Packet p) override {
    if (phase_ != Phase::kOpen) {
      throw FlowError(ErrorCode::kInvalidOptions,
                      NodeErr("output side packets may only be set in Open"));
    }
    auto it = side_output_slots_.find(std::string(tag));
    if (it == side_output_slots_.end()) {
      throw FlowError(ErrorCode::kMissingSidePacket,
                      NodeErr("no output side packet tagged '" +
                              std::string(tag) + "'"));
    }
    staged_side_packets_.emplace_back(it->second, std::move(p));
  }

  Timestamp InputTimestamp() const override {
    return set_ ? set_->timestamp : Timestamp::Unset();
  }

  const Packet* Input(std::string_view tag) const override {
    if (!set_ || phase_ != Phase::kProcess) return nullptr;
    int slot = InputSlot(tag);
    const auto& entry = set_->entries[slot];
    return entry.has_value() ? &*entry : nullptr;
  }

  Timestamp InputBound(std::string_view tag) const override {
    int slot = InputSlot(tag);
    std::lock_guard<std::mutex> lock(engine_->mu);
    const InputQueue* q = engine_->nodes[node_id_].input_queues[slot];
    if (q == nullptr) return Timestamp::Done();
    // From the consumer's perspective the bound is the lowest timestamp
    // the stream may still deliver, which includes packets already queued
    // but not yet handed over.
    if (!q->empty() && q->front().timestamp() < q->bound()) {
      return q->front().timestamp();
    }
    return q->bound();
  }

  void MarkInputDropped(std::string_view tag) override {
    int slot = InputSlot(tag);
    if (!set_ || !set_->entries[slot].has_value()) {
      throw FlowError(ErrorCode::kInvalidOptions,
                      NodeErr("MarkInputDropped('" + std::string(tag) +
                              "') without a current packet"));
    }
    const Packet& p = *set_->entries[slot];
    std::lock_guard<std::mutex> lock(engine_->mu);
    int stream_id =
        engine_->nodes[node_id_].input_queues[slot]->stream_id();
    engine_->Record(shard_, TraceEventType::kPacketDropped, node_id_,
                    stream_id, p.timestamp(), p.data_id());
  }

  void Emit(std::string_view tag, Packet p) override {
    int slot = OutputSlot(tag);
    std::lock_guard<std::mutex> lock(engine_->mu);
    OutputPort* port = engine_->nodes[node_id_].output_ports[slot].get();
    if (port == nullptr) return;  // dangling optional output
    engine_->EmitOnPortLocked(*port, p, node_id_, shard_);
  }

  void SetOutputBound(std::string_view tag, Timestamp bound) override {
    int slot = OutputSlot(tag);
    std::lock_guard<std::mutex> lock(engine_->mu);
    OutputPort* port = engine_->nodes[node_id_].output_ports[slot].get();
    if (port == nullptr) return;
    engine_->SetBoundOnPortLocked(*port, bound, node_id_, shard_);
  }

  void CloseOutput(std::string_view tag) override {
    SetOutputBound(tag, Timestamp::Done());
  }

  void CloseAllOutputs() override {
    std::lock_guard<std::mutex> lock(engine_->mu);
    for (auto& port : engine_->nodes[node_id_].output_ports) {
      if (port != nullptr && !port->closed()) {
        engine_->SetBoundOnPortLocked(*port, Timestamp::Done(), node_id_,
                                      shard_);
      }
    }
  }

  std::vector<std::pair<int, Packet>> TakeStagedSidePackets() {
    return std::move(staged_side_packets_);
  }

 private:
  std::string NodeErr(const std::string& message) const {
    return std::string(NodeName()) + ": " + message;
  }

  int InputSlot(std::string_view tag) const {
    auto it = input_slots_.find(std::string(tag));
    if (it == input_slots_.end()) {
      throw FlowError(ErrorCode::kUnknownStream,
                      NodeErr("no input tagged '" + std::string(tag) + "'"));
    }
    return it->second;
  }
  int OutputSlot(std::string_view tag) const {
    auto it = output_slots_.find(std::string(tag));
    if (it == output_slots_.end()) {
      throw FlowError(ErrorCode::kUnknownStream,
                      NodeErr("no output tagged '" + std::string(tag) + "'"));
    }
    return it->second;
  }

  Engine* engine_;
  int node_id_;
  uint64_t seed_;
  Phase phase_ = Phase::kIdle;
  int shard_ = 0;
  std::optional<InputSet> set_;
  std::map<std::string, int> input_slots_;
  std::map<std::string, int> output_slots_;
  std::map<std::string, int> side_input_slots_;
  std::map<std::string, int> side_output_slots_;
  std::vector<std::pair<int, Packet>> staged_side_packets_;
};

// ---------------------------------------------------------------------------
// Engine: construction and startup
// ---------------------------------------------------------------------------

void GraphRun::Engine::Build() {
  nodes.resize(graph.nodes.size());
  side_values.resize(graph.side_packets.size());

  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    nodes[i].spec = &graph.nodes[i];
  }

  // Consumer queues, keyed by (stream, consumer slot).
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    NodeRuntime& node = nodes[i];
    const ValidatedNode& spec = graph.nodes[i];
    node.input_queues.resize(spec.inputs.size(), nullptr);
    for (size_t slot = 0; slot < spec.inputs.size(); ++slot) {
      const ResolvedSlot& input = spec.inputs[slot];
      if (input.stream_id < 0) continue;
      const ValidatedStream& stream = graph.streams[input.stream_id];
      auto queue = std::make_unique<InputQueue>(
          stream.id, spec.id, stream.name, stream.type, QueueLimitFor(spec));
      if (input.back_edge) {
        // Loopback edges start one tick above the minimum so the topology
        // sort exclusion has a concrete runtime counterpart.
        queue->AdvanceBound(Timestamp::Min().Successor());
      }
      node.input_queues[slot] = queue.get();
      queues.push_back(std::move(queue));
    }
    if (spec.policy.kind == InputPolicyKind::kGrouped) {
      for (const auto& group : spec.policy.groups) {
        std::vector<int> slots;
        for (const auto& tag : group) {
          for (size_t slot = 0; slot < spec.inputs.size(); ++slot) {
            if (spec.inputs[slot].tag == tag) {
              slots.push_back(static_cast<int>(slot));
            }
          }
        }
        node.policy_groups.push_back(std::move(slots));
      }
      node.last_group_ts.assign(node.policy_groups.size(),
                                Timestamp::Unset());
    }
  }

  // Output ports wired to consumer queues.
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    NodeRuntime& node = nodes[i];
    const ValidatedNode& spec = graph.nodes[i];
    node.output_ports.resize(spec.outputs.size());
    for (size_t slot = 0; slot < spec.outputs.size(); ++slot) {
      const ResolvedSlot& output = spec.outputs[slot];
      if (output.stream_id < 0) continue;
      const ValidatedStream& stream = graph.streams[output.stream_id];
      auto port = std::make_unique<OutputPort>(stream.id, stream.name,
                                               stream.type);
      for (const StreamConsumer& consumer : stream.consumers) {
        port->Connect(nodes[consumer.node].input_queues[consumer.slot]);
      }
      node.output_ports[slot] = std::move(port);
    }
  }

  // Virtual producer ports for graph input streams.
  for (int stream_id : graph.graph_input_streams) {
    const ValidatedStream& stream = graph.streams[stream_id];
    auto port =
        std::make_unique<OutputPort>(stream.id, stream.name, stream.type);
    for (const StreamConsumer& consumer : stream.consumers) {
      port->Connect(nodes[consumer.node].input_queues[consumer.slot]);
    }
    graph_input_index[stream.name] =
        static_cast<int>(graph_input_ports.size());
    graph_input_ports.push_back(std::move(port));
    graph_input_closed.push_back(false);
    feed_blocked_on_stream.push_back(0);
  }
  open_graph_inputs = static_cast<int>(graph_input_ports.size());

  // Executor pools.
  for (const auto& exec : graph.executors) {
    auto pool = std::make_unique<ExecutorPool>();
    pool->config = exec;
    pool->workers = WorkersFor(exec);
    pools.push_back(std::move(pool));
  }
}

void GraphRun::Engine::StartupCheckSidePackets() {
  for (const auto& side : graph.side_packets) {
    if (side.producer_node >= 0) continue;
    if (side.consumer_nodes.empty()) continue;
    auto it = supplied_side_packets.find(side.name);
    if (it == supplied_side_packets.end()) {
      throw FlowError(ErrorCode::kStartupError,
                      "required side packet '" + side.name +
                          "' was not supplied");
    }
    if (side.type != nullptr && it->second.type() != side.type) {
      throw FlowError(ErrorCode::kStartupError,
                      "side packet '" + side.name + "' should be " +
                          side.type->name + ", got " +
                          it->second.type()->name);
    }
  }
}

void GraphRun::Engine::Start() {
  std::unique_lock<std::mutex> lock(mu);
  if (started) {
    throw FlowError(ErrorCode::kStartupError, "run already started");
  }
  StartupCheckSidePackets();
  for (const auto& [name, packet] : supplied_side_packets) {
    auto it = graph.side_packet_ids.find(name);
    if (it != graph.side_packet_ids.end()) {
      side_values[it->second] = packet;
    }
  }

  // Calculator instances and contexts; fresh per run.
  std::mt19937_64 seeder(options.seed ^ 0x5eedf00dULL);
  for (size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].calculator = registry.Create(graph.nodes[i].config.calculator);
    nodes[i].context = std::make_unique<NodeContext>(
        this, static_cast<int>(i), seeder());
  }

  // Tie ranks: declaration order, optionally shuffled for stress tests.
  const int total_tasks =
      static_cast<int>(nodes.size() + observers.size());
  tie_rank.resize(total_tasks);
  for (int i = 0; i < total_tasks; ++i) tie_rank[i] = i;
  if (options.test_tie_shuffle_seed != 0) {
    std::mt19937_64 rng(options.test_tie_shuffle_seed);
    std::shuffle(tie_rank.begin(), tie_rank.end(), rng);
  }

  started = true;
  StartRunLocked();

  int shard = 1;
  for (size_t p = 0; p < pools.size(); ++p) {
    for (int w = 0; w < pools[p]->workers; ++w) {
      pools[p]->threads.emplace_back(
          [this, p, shard] { WorkerMain(static_cast<int>(p), shard); });
      ++shard;
    }
  }
}

void GraphRun::Engine::StartRunLocked() {
  for (size_t i = 0; i < nodes.size(); ++i) {
    EvaluateNodeLocked(static_cast<int>(i), 0);
  }
  HandleQuiescenceLocked(0);
}

// ---------------------------------------------------------------------------
// Engine: task bodies
// ---------------------------------------------------------------------------

void GraphRun::Engine::RunNodeTask(std::unique_lock<std::mutex>& lock,
                                   int node_id, int shard,
                                   std::mt19937_64& delay_rng) {
  NodeRuntime& node = nodes[node_id];
  node.task_pending = false;
  const TaskKind kind = node.pending_kind;

  if (node.closed || (error_mode && kind != TaskKind::kClose)) {
    EvaluateNodeLocked(node_id, shard);
    HandleQuiescenceLocked(shard);
    return;
  }

  InputSet set;
  bool have_set = false;
  if (kind == TaskKind::kProcess && !node.spec->is_source) {
    auto popped = PolicyPopLocked(node);
    if (!popped) {  // stale promotion
      EvaluateNodeLocked(node_id, shard);
      HandleQuiescenceLocked(shard);
      return;
    }
    set = std::move(*popped);
    have_set = true;

    // Default policy sets strictly ascend; grouped sets ascend per group.
    // A violation is an engine bug worth failing the run over.
    if (node.spec->policy.kind == InputPolicyKind::kDefault) {
      if (!node.last_default_ts.IsUnset() &&
          set.timestamp <= node.last_default_ts) {
        HandleNodeErrorLocked(node_id,
                              "internal: input sets regressed from " +
                                  node.last_default_ts.ToString() + " to " +
                                  set.timestamp.ToString(),
                              shard);
        HandleQuiescenceLocked(shard);
        return;
      }
      node.last_default_ts = set.timestamp;
    } else if (node.spec->policy.kind == InputPolicyKind::kGrouped &&
               set.group >= 0) {
      if (!node.last_group_ts[set.group].IsUnset() &&
          set.timestamp <= node.last_group_ts[set.group]) {
        HandleNodeErrorLocked(node_id,
                              "internal: grouped input sets regressed",
                              shard);
        HandleQuiescenceLocked(shard);
        return;
      }
      node.last_group_ts[set.group] = set.timestamp;
    }

    for (size_t slot = 0; slot < set.entries.size(); ++slot) {
      if (!set.entries[slot].has_value()) continue;
      const Packet& p = *set.entries[slot];
      InputQueue* q = node.input_queues[slot];
      Record(shard, TraceEventType::kPacketConsumed, node_id, q->stream_id(),
             p.timestamp(), p.data_id());
      AfterPopLocked(*q, shard);
    }
  }

  node.running = true;
  ++running_tasks;
  NodeContext& ctx = *node.context;
  switch (kind) {
    case TaskKind::kOpen: ctx.BeginTask(NodeContext::Phase::kOpen, shard); break;
    case TaskKind::kProcess: ctx.BeginTask(NodeContext::Phase::kProcess, shard); break;
    default: ctx.BeginTask(NodeContext::Phase::kClose, shard); break;
  }
  if (have_set) ctx.SetInputSet(std::move(set));

  lock.unlock();
  MaybeDelay(delay_rng);

  const TraceEventType start_type =
      kind == TaskKind::kOpen ? TraceEventType::kOpenStart
      : kind == TaskKind::kProcess ? TraceEventType::kProcessStart
                                   : TraceEventType::kCloseStart;
  const TraceEventType finish_type =
      kind == TaskKind::kOpen ? TraceEventType::kOpenFinish
      : kind == TaskKind::kProcess ? TraceEventType::kProcessFinish
                                   : TraceEventType::kCloseFinish;

  Record(shard, start_type, node_id, 0,
         have_set ? ctx.InputTimestamp() : Timestamp::Unset());
  std::string error;
  bool failed = false;
  try {
    switch (kind) {
      case TaskKind::kOpen: node.calculator->Open(ctx); break;
      case TaskKind::kProcess: node.calculator->Process(ctx); break;
      default: node.calculator->Close(ctx); break;
    }
  } catch (const std::exception& e) {
    failed = true;
    error = e.what();
  } catch (...) {
    failed = true;
    error = "unknown exception";
  }
  Record(shard, finish_type, node_id);

  lock.lock();
  ctx.BeginTask(NodeContext::Phase::kIdle, shard);

  if (kind == TaskKind::kProcess) {
    if (!failed && node.spec->timestamp_offset_zero && have_set &&
        ctx.InputTimestamp().IsPacketLegal()) {
      const Timestamp next = ctx.InputTimestamp().Successor();
      for (auto& port : node.output_ports) {
        if (port != nullptr && !port->closed() && port->bound() < next) {
          SetBoundOnPortLocked(*port, next, node_id, shard);
        }
      }
    }
    ctx.ClearInputSet();
    if (node.spec->is_source && !failed) {
      // A source is done once every connected output is closed. A source
      // with no connected outputs cannot signal, so it runs exactly once.
      bool all_closed = true;
      for (const auto& port : node.output_ports) {
        if (port != nullptr && !port->closed()) all_closed = false;
      }
      if (all_closed) node.source_done = true;
    }
  } else if (kind == TaskKind::kOpen && !failed) {
    node.opened = true;
    for (auto& [slot, packet] : ctx.TakeStagedSidePackets()) {
      int side_id = node.spec->side_outputs[slot].side_id;
      if (side_id >= 0) {
        side_values[side_id] = std::move(packet);
        for (int consumer : graph.side_packets[side_id].consumer_nodes) {
          EvaluateNodeLocked(consumer, shard);
        }
      }
    }
  } else if (kind == TaskKind::kClose) {
    node.closed = true;
    ++closed_nodes;
    // Residual queued packets are flushed as drops, and every output
    // closes so downstream termination propagates.
    for (InputQueue* q : node.input_queues) {
      if (q == nullptr) continue;
      while (!q->empty()) {
        Packet p = q->PopFront();
        Record(shard, TraceEventType::kPacketDropped, node_id, q->stream_id(),
               p.timestamp(), p.data_id());
        AfterPopLocked(*q, shard);
      }
    }
    for (auto& port : node.output_ports) {
      if (port != nullptr && !port->closed()) {
        SetBoundOnPortLocked(*port, Timestamp::Done(), node_id, shard);
      }
    }
  }

  node.running = false;
  --running_tasks;
  if (failed) {
    HandleNodeErrorLocked(node_id, error, shard);
  } else {
    EvaluateNodeLocked(node_id, shard);
  }
  HandleQuiescenceLocked(shard);
}

void GraphRun::Engine::RunObserverTask(std::unique_lock<std::mutex>& lock,
                                       int index, int shard) {
  ObserverRuntime& obs = observers[index];
  obs.task_pending = false;
  obs.running = true;
  ++running_tasks;

  std::vector<OutputEvent> to_deliver;
  InputQueue& q = *obs.queue;
  while (q.SettledFrontTimestamp().has_value()) {
    Packet p = q.PopFront();
    Record(shard, TraceEventType::kPacketConsumed, obs.id, q.stream_id(),
           p.timestamp(), p.data_id());
    AfterPopLocked(q, shard);
    to_deliver.push_back({OutputEvent::Kind::kPacket, std::move(p),
                          Timestamp::Unset()});
  }
  if (q.done_and_empty()) {
    if (!obs.closed_delivered) {
      obs.closed_delivered = true;
      to_deliver.push_back(
          {OutputEvent::Kind::kClosed, {}, Timestamp::Unset()});
    }
  } else if (q.bound() > obs.reported_bound) {
    obs.reported_bound = q.bound();
    to_deliver.push_back({OutputEvent::Kind::kBound, {}, q.bound()});
  }

  lock.unlock();
  for (const OutputEvent& event : to_deliver) {
    obs.deliver(event);
  }
  lock.lock();

  obs.running = false;
  --running_tasks;
  EvaluateObserverLocked(index);
  HandleQuiescenceLocked(shard);
}

// ---------------------------------------------------------------------------
// GraphRun
// ---------------------------------------------------------------------------

GraphRun::GraphRun(const ValidatedGraph& graph,
                   const CalculatorRegistry& registry, RunOptions options)
    : engine_(std::make_unique<Engine>(graph, registry, std::move(options))) {
  engine_->Build();
}

GraphRun::~GraphRun() {
  {
    std::lock_guard<std::mutex> lock(engine_->mu);
    if (engine_->started && !engine_->finished_flag) {
      engine_->error_mode = true;
      engine_->error_message = "run aborted by GraphRun destruction";
      engine_->FinishLocked();
    }
  }
  if (engine_->started && !engine_->joined) {
    for (auto& pool : engine_->pools) {
      for (auto& thread : pool->threads) thread.join();
    }
    engine_->joined = true;
  }
  for (auto& obs : engine_->observers) {
    if (obs.poller != nullptr) obs.poller->ForceTerminate();
  }
}

void GraphRun::SupplySidePacket(const std::string& name, Packet value) {
  std::lock_guard<std::mutex> lock(engine_->mu);
  if (engine_->started) {
    throw FlowError(ErrorCode::kStartupError,
                    "side packets must be supplied before Start");
  }
  engine_->supplied_side_packets[name] = std::move(value);
}

static int ResolveObservableStream(const ValidatedGraph& graph,
                                   const std::string& stream) {
  auto it = graph.stream_ids.find(stream);
  if (it == graph.stream_ids.end()) {
    throw FlowError(ErrorCode::kUnknownStream,
                    "no stream named '" + stream + "'");
  }
  return it->second;
}

void GraphRun::ObserveOutput(const std::string& stream,
                             std::function<void(const Packet&)> callback) {
  std::lock_guard<std::mutex> lock(engine_->mu);
  if (engine_->started) {
    throw FlowError(ErrorCode::kStartupError,
                    "observers must be added before Start");
  }
  int stream_id = ResolveObservableStream(engine_->graph, stream);
  Engine::ObserverRuntime obs;
  obs.id = static_cast<int>(engine_->nodes.size() +
                            engine_->observers.size());
  obs.stream_id = stream_id;
  // Observer queues are unbounded: application consumption speed should
  // not throttle the graph by default.
  obs.queue = std::make_unique<InputQueue>(
      stream_id, obs.id, engine_->graph.streams[stream_id].name,
      engine_->graph.streams[stream_id].type, 0);
  obs.deliver = [cb = std::move(callback)](const OutputEvent& event) {
    if (event.kind == OutputEvent::Kind::kPacket) cb(event.packet);
  };
  int max_priority = 0;
  for (const auto& node : engine_->graph.nodes) {
    max_priority = std::max(max_priority, node.priority);
  }
  obs.priority = max_priority + 1;
  engine_->observers.push_back(std::move(obs));
}

OutputPoller GraphRun::AddOutputPoller(const std::string& stream) {
  auto state = std::make_shared<OutputPoller::State>();
  {
    std::lock_guard<std::mutex> lock(engine_->mu);
    if (engine_->started) {
      throw FlowError(ErrorCode::kStartupError,
                      "pollers must be added before Start");
    }
    int stream_id = ResolveObservableStream(engine_->graph, stream);
    Engine::ObserverRuntime obs;
    obs.id = static_cast<int>(engine_->nodes.size() +
                              engine_->observers.size());
    obs.stream_id = stream_id;
    obs.queue = std::make_unique<InputQueue>(
        stream_id, obs.id, engine_->graph.streams[stream_id].name,
        engine_->graph.streams[stream_id].type, 0);
    obs.poller = state;
    obs.deliver = [state](const OutputEvent& event) { state->Push(event); };
    int max_priority = 0;
    for (const auto& node : engine_->graph.nodes) {
      max_priority = std::max(max_priority, node.priority);
    }
    obs.priority = max_priority + 1;
    engine_->observers.push_back(std::move(obs));
  }
  return OutputPoller(std::move(state));
}

void GraphRun::Start() {
  // Observer queues must be wired into the producer ports before launch.
  {
    std::lock_guard<std::mutex> lock(engine_->mu);
    if (engine_->started) {
      throw FlowError(ErrorCode::kStartupError, "run already started");
    }
    for (auto& obs : engine_->observers) {
      const ValidatedStream& stream = engine_->graph.streams[obs.stream_id];
      if (stream.producer_node >= 0) {
        auto& port = engine_->nodes[stream.producer_node]
                         .output_ports[stream.producer_slot];
        port->Connect(obs.queue.get());
      } else {
        auto it = engine_->graph_input_index.find(stream.name);
        if (it != engine_->graph_input_index.end()) {
          engine_->graph_input_ports[it->second]->Connect(obs.queue.get());
        }
      }
    }
  }
  engine_->Start();
}

void GraphRun::AddToGraphInput(const std::string& stream, Packet p) {
  std::unique_lock<std::mutex> lock(engine_->mu);
  Engine& e = *engine_;
  if (!e.started) {
    throw FlowError(ErrorCode::kStartupError,
                    "AddToGraphInput before Start");
  }
  auto it = e.graph_input_index.find(stream);
  if (it == e.graph_input_index.end()) {
    throw FlowError(ErrorCode::kUnknownStream,
                    "'" + stream + "' is not a graph input stream");
  }
  const int index = it->second;
  if (e.finished_flag || e.graph_input_closed[index]) {
    throw FlowError(ErrorCode::kGraphTerminated,
                    "graph input '" + stream + "' is closed");
  }
  OutputPort& port = *e.graph_input_ports[index];
  // Validate before blocking so bad feeds fail fast.
  if (!p.timestamp().IsPacketLegal()) {
    throw FlowError(ErrorCode::kSentinelTimestamp,
                    "graph input '" + stream + "' fed timestamp " +
                        p.timestamp().ToString());
  }
  if (!port.last_emitted().IsUnset() && p.timestamp() <= port.last_emitted()) {
    throw FlowError(ErrorCode::kNonMonotonicTimestamp,
                    "graph input '" + stream + "' fed " +
                        p.timestamp().ToString() + " after " +
                        port.last_emitted().ToString());
  }

  auto saturated = [&] {
    for (const InputQueue* q : port.consumers()) {
      if (q->AtOrOverLimit()) return true;
    }
    return false;
  };
  while (saturated() && !e.finished_flag && !e.graph_input_closed[index]) {
    ++e.blocked_feeders;
    ++e.feed_blocked_on_stream[index];
    e.HandleQuiescenceLocked(0);  // a blocked feeder can be the deadlock
    e.feeder_cv.wait(lock, [&] {
      return !saturated() || e.finished_flag || e.graph_input_closed[index];
    });
    --e.blocked_feeders;
    --e.feed_blocked_on_stream[index];
  }
  if (e.finished_flag || e.graph_input_closed[index]) {
    throw FlowError(ErrorCode::kGraphTerminated,
                    "graph terminated while feeding '" + stream + "'");
  }
  e.EmitOnPortLocked(port, p, -1, 0);
  e.HandleQuiescenceLocked(0);
}

void GraphRun::CloseGraphInput(const std::string& stream) {
  std::unique_lock<std::mutex> lock(engine_->mu);
  Engine& e = *engine_;
  auto it = e.graph_input_index.find(stream);
  if (it == e.graph_input_index.end()) {
    throw FlowError(ErrorCode::kUnknownStream,
                    "'" + stream + "' is not a graph input stream");
  }
  const int index = it->second;
  if (e.graph_input_closed[index]) return;  // idempotent
  e.graph_input_closed[index] = true;
  --e.open_graph_inputs;
  e.feeder_cv.notify_all();
  if (!e.finished_flag) {
    e.SetBoundOnPortLocked(*e.graph_input_ports[index], Timestamp::Done(), -1,
                           0);
    e.HandleQuiescenceLocked(0);
  }
}

void GraphRun::CloseAllGraphInputs() {
  std::vector<std::string> names;
  {
    std::lock_guard<std::mutex> lock(engine_->mu);
    for (const auto& [name, index] : engine_->graph_input_index) {
      names.push_back(name);
    }
  }
  for (const auto& name : names) CloseGraphInput(name);
}

RunResult GraphRun::WaitUntilDone() {
  std::unique_lock<std::mutex> lock(engine_->mu);
  if (!engine_->started) {
    throw FlowError(ErrorCode::kStartupError, "WaitUntilDone before Start");
  }
  engine_->done_cv.wait(lock, [&] { return engine_->finished_flag; });
  lock.unlock();
  if (!engine_->joined) {
    for (auto& pool : engine_->pools) {
      for (auto& thread : pool->threads) thread.join();
    }
    engine_->joined = true;
    // Error shutdown may leave observers undrained; their pollers must
    // still terminate.
    for (auto& obs : engine_->observers) {
      if (obs.poller != nullptr) obs.poller->ForceTerminate();
      if (!obs.closed_delivered) obs.closed_delivered = true;
    }
  }
  return engine_->result;
}

bool GraphRun::finished() const {
  std::lock_guard<std::mutex> lock(engine_->mu);
  return engine_->finished_flag;
}

std::vector<TraceEvent> GraphRun::TraceSnapshot() const {
  return engine_->tracer.Snapshot();
}

uint64_t GraphRun::TraceDroppedCount() const {
  return engine_->tracer.DroppedCount();
}

TraceNames GraphRun::MakeTraceNames() const {
  TraceNames names;
  for (const auto& node : engine_->graph.nodes) {
    names.nodes[node.id] = node.name;
  }
  for (size_t i = 0; i < engine_->observers.size(); ++i) {
    names.nodes[engine_->observers[i].id] =
        "observer(" +
        engine_->graph.streams[engine_->observers[i].stream_id].name + ")";
  }
  for (const auto& stream : engine_->graph.streams) {
    names.streams[Engine::TraceStreamId(stream.id)] = stream.name;
  }
  return names;
}

RunResult RunGraph(const ValidatedGraph& graph,
                   const CalculatorRegistry& registry, RunOptions options,
                   std::map<std::string, Packet> side_packets) {
  GraphRun run(graph, registry, std::move(options));
  for (auto& [name, packet] : side_packets) {
    run.SupplySidePacket(name, std::move(packet));
  }
  run.Start();
  run.CloseAllGraphInputs();
  return run.WaitUntilDone();
}

}  // namespace flowgraph

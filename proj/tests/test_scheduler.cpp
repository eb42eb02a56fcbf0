#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include "flowgraph/policies.hpp"
#include "test_support.hpp"
#include "trace_checks.hpp"

using namespace flowgraph;
using namespace flowgraph::testing;

namespace {

Timestamp TS(int64_t v) { return Timestamp(v); }

std::unique_ptr<InputQueue> Queue(int id, const std::string& name) {
  return std::make_unique<InputQueue>(id, 0, name);
}

void Feed(InputQueue& q, int64_t ts) {
  q.Push(MakePacket<int64_t>(ts, TS(ts)));
  q.AdvanceBound(TS(ts + 1));
}

std::vector<int64_t> Timestamps(const std::vector<RecordedSet>& sets) {
  std::vector<int64_t> out;
  for (const auto& s : sets) out.push_back(s.timestamp.value());
  return out;
}

}  // namespace

// --------------------------------------------------------------------------
// Input policies (pure units)
// --------------------------------------------------------------------------

TEST_CASE("default policy follows the two-stream synchronization example") {
  auto foo = Queue(1, "FOO");
  auto bar = Queue(2, "BAR");
  QueueGroup queues{foo.get(), bar.get()};

  Feed(*foo, 10);
  Feed(*foo, 20);  // FOO bound 21
  Feed(*bar, 10);
  Feed(*bar, 30);  // BAR bound 31

  auto first = DefaultReady(queues);
  REQUIRE(first.has_value());
  CHECK(first->timestamp == TS(10));
  CHECK(first->entries[0].has_value());
  CHECK(first->entries[1].has_value());

  auto second = DefaultReady(queues);
  REQUIRE(second.has_value());
  CHECK(second->timestamp == TS(20));
  CHECK(second->entries[0].has_value());
  CHECK_FALSE(second->entries[1].has_value());  // no packet for BAR at 20

  // 30 cannot be processed yet: FOO is unknown past 20.
  CHECK_FALSE(DefaultReady(queues).has_value());

  // A late FOO packet at 25 must precede 30.
  Feed(*foo, 25);
  auto third = DefaultReady(queues);
  REQUIRE(third.has_value());
  CHECK(third->timestamp == TS(25));
  CHECK(third->entries[0].has_value());
  CHECK_FALSE(third->entries[1].has_value());

  CHECK_FALSE(DefaultReady(queues).has_value());
  foo->AdvanceBound(Timestamp::Done());
  auto fourth = DefaultReady(queues);
  REQUIRE(fourth.has_value());
  CHECK(fourth->timestamp == TS(30));
  CHECK_FALSE(fourth->entries[0].has_value());
  CHECK(fourth->entries[1].has_value());
}

TEST_CASE("default policy: closed stream settles everything") {
  auto foo = Queue(1, "FOO");
  auto bar = Queue(2, "BAR");
  QueueGroup queues{foo.get(), bar.get()};
  foo->AdvanceBound(Timestamp::Done());
  Feed(*bar, 30);
  auto set = DefaultReady(queues);
  REQUIRE(set.has_value());
  CHECK(set->timestamp == TS(30));
  CHECK(set->entries[1].has_value());
}

TEST_CASE("default policy: single input degenerates to FIFO") {
  auto q = Queue(1, "S");
  QueueGroup queues{q.get()};
  for (int64_t ts : {1, 2, 5}) Feed(*q, ts);
  for (int64_t ts : {1, 2, 5}) {
    auto set = DefaultReady(queues);
    REQUIRE(set.has_value());
    CHECK(set->timestamp == TS(ts));
  }
  CHECK_FALSE(DefaultReady(queues).has_value());
}

TEST_CASE("immediate policy pops the smallest front regardless of bounds") {
  auto foo = Queue(1, "FOO");
  auto bar = Queue(2, "BAR");
  QueueGroup queues{foo.get(), bar.get()};

  SUBCASE("one queue empty with a low bound does not block") {
    Feed(*foo, 10);
    // BAR bound stays at Min: a default-policy node would wait.
    auto set = ImmediateReady(queues);
    REQUIRE(set.has_value());
    CHECK(set->timestamp == TS(10));
  }

  SUBCASE("smallest front first, hand-stepped reference") {
    Feed(*foo, 10);
    Feed(*bar, 5);
    // Reference trace: pops 5 (BAR), then 10 (FOO), then empty.
    auto first = ImmediateReady(queues);
    REQUIRE(first.has_value());
    CHECK(first->timestamp == TS(5));
    CHECK_FALSE(first->entries[0].has_value());
    CHECK(first->entries[1].has_value());
    auto second = ImmediateReady(queues);
    REQUIRE(second.has_value());
    CHECK(second->timestamp == TS(10));
    CHECK_FALSE(ImmediateReady(queues).has_value());
  }

  SUBCASE("both empty") { CHECK_FALSE(ImmediateReady(queues).has_value()); }
}

TEST_CASE("grouped policy synchronizes within but not across groups") {
  auto a = Queue(1, "A");
  auto b = Queue(2, "B");
  QueueGroup queues{a.get(), b.get()};
  std::vector<std::vector<int>> groups{{0}, {1}};

  SUBCASE("lowest-timestamp group fires first") {
    Feed(*a, 10);
    Feed(*b, 7);
    // Oracle: DefaultReady per group.
    {
      QueueGroup ga{a.get()};
      QueueGroup gb{b.get()};
      CHECK(DefaultHasReady(ga));
      CHECK(DefaultHasReady(gb));
    }
    auto set = GroupedReady(queues, groups);
    REQUIRE(set.has_value());
    CHECK(set->group == 1);
    CHECK(set->timestamp == TS(7));
    auto next = GroupedReady(queues, groups);
    REQUIRE(next.has_value());
    CHECK(next->group == 0);
    CHECK(next->timestamp == TS(10));
  }

  SUBCASE("a stalled group does not hold back a ready one") {
    Feed(*a, 10);
    a->AdvanceBound(TS(11));
    b->Push(MakePacket<int64_t>(9, TS(9)));  // bound NOT advanced: unsettled
    auto set = GroupedReady(queues, groups);
    REQUIRE(set.has_value());
    CHECK(set->group == 0);
    CHECK(set->timestamp == TS(10));
    CHECK_FALSE(GroupedReady(queues, groups).has_value());
  }

  SUBCASE("nothing ready") {
    CHECK_FALSE(GroupedReady(queues, groups).has_value());
  }
}

// --------------------------------------------------------------------------
// Graph runs
// --------------------------------------------------------------------------

TEST_CASE("source to sink: five packets, result Done") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 5 sink_id: \"\" } }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:s\" "
      "options { sink_id: \"src5\" } }\n",
      registry);
  RunResult result = RunGraph(graph, registry);
  CHECK(result.ok());
  auto sets = RecordingBoard::Instance().Take("src5");
  CHECK(Timestamps(sets) == std::vector<int64_t>{0, 1, 2, 3, 4});
}

TEST_CASE("graph inputs feed a pass-through graph") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"in\"\n"
      "output_stream: \"out\"\n"
      "node { calculator: \"TestPass\" input_stream: \"in\" "
      "output_stream: \"out\" }\n",
      registry);

  GraphRun run(graph, registry);
  std::vector<int64_t> seen;
  std::mutex seen_mu;
  run.ObserveOutput("out", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(seen_mu);
    seen.push_back(p.timestamp().value());
  });
  run.Start();
  for (int64_t ts : {1, 2, 3}) {
    run.AddToGraphInput("in", MakePacket<int64_t>(ts, TS(ts)));
  }

  SUBCASE("feed errors") {
    CHECK_THROWS_AS(run.AddToGraphInput("nope", MakePacket<int64_t>(9, TS(9))),
                    FlowError);
    CHECK_THROWS_AS(run.AddToGraphInput("in", MakePacket<int64_t>(3, TS(3))),
                    FlowError);  // non-monotonic
  }

  run.CloseGraphInput("in");
  CHECK_NOTHROW(run.CloseGraphInput("in"));  // double close is idempotent
  CHECK_THROWS_AS(run.AddToGraphInput("in", MakePacket<int64_t>(9, TS(9))),
                  FlowError);  // feed after close

  RunResult result = run.WaitUntilDone();
  CHECK(result.ok());
  CHECK(seen == std::vector<int64_t>{1, 2, 3});
}

TEST_CASE("graph with only inputs closed empty completes with zero outputs") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"in\"\n"
      "output_stream: \"out\"\n"
      "node { calculator: \"TestPass\" input_stream: \"in\" "
      "output_stream: \"out\" }\n",
      registry);
  GraphRun run(graph, registry);
  int count = 0;
  run.ObserveOutput("out", [&](const Packet&) { ++count; });
  run.Start();
  run.CloseAllGraphInputs();
  CHECK(run.WaitUntilDone().ok());
  CHECK(count == 0);
}

TEST_CASE("two observers see identical sequences; poller sees close") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 4 } }\n",
      registry);
  GraphRun run(graph, registry);
  std::vector<int64_t> a, b;
  std::mutex mu;
  run.ObserveOutput("s", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(mu);
    a.push_back(p.Get<int64_t>());
  });
  run.ObserveOutput("s", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(mu);
    b.push_back(p.Get<int64_t>());
  });
  OutputPoller poller = run.AddOutputPoller("s");
  run.Start();
  CHECK(run.WaitUntilDone().ok());
  CHECK(a == b);
  CHECK(a == std::vector<int64_t>{0, 1, 2, 3});

  int packets = 0;
  bool closed = false;
  while (auto event = poller.Next()) {
    if (event->kind == OutputEvent::Kind::kPacket) ++packets;
    if (event->kind == OutputEvent::Kind::kClosed) closed = true;
  }
  CHECK(packets == 4);
  CHECK(closed);
}

TEST_CASE("error in Process: Close runs everywhere, result is Error") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "trace_enabled: true\n"
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 10 } }\n"
      "node { calculator: \"TestError\" input_stream: \"s\" "
      "output_stream: \"t\" options { fail_at: 3 } }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:t\" "
      "options { sink_id: \"err\" } }\n",
      registry);
  RunOptions options;
  options.deterministic = true;
  GraphRun run(graph, registry, options);
  run.Start();
  RunResult result = run.WaitUntilDone();
  CHECK_FALSE(result.ok());
  CHECK(result.message.find("TestError") != std::string::npos);
  CHECK(result.message.find("synthetic failure") != std::string::npos);

  auto events = run.TraceSnapshot();
  auto check = CheckTraceInvariants(events);
  for (const auto& p : check.problems) MESSAGE(p);
  CHECK(check.ok);

  // No Process may start after the error was observed.
  int64_t error_time = -1;
  for (const auto& e : events) {
    if (e.type == TraceEventType::kProcessFinish && e.node_id == 1) {
      error_time = e.event_time_ns;  // last Process of the failing node
    }
  }
  REQUIRE(error_time >= 0);
  for (const auto& e : events) {
    if (e.type == TraceEventType::kProcessStart) {
      CHECK(e.event_time_ns <= error_time);
    }
  }
  RecordingBoard::Instance().Take("err");
}

TEST_CASE("lifecycle order and per-node serialization hold under load") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "trace_enabled: true\n"
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 30 } }\n"
      "node { calculator: \"TestPass\" input_stream: \"s\" "
      "output_stream: \"t\" }\n"
      "node { calculator: \"TestPass\" input_stream: \"t\" "
      "output_stream: \"u\" }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:u\" "
      "options { sink_id: \"life\" } }\n",
      registry);
  RunOptions options;
  options.executor_workers[""] = 4;
  options.test_task_delay_max_ms = 0.2;
  options.test_task_delay_seed = 42;
  GraphRun run(graph, registry, options);
  run.Start();
  CHECK(run.WaitUntilDone().ok());
  auto check = CheckTraceInvariants(run.TraceSnapshot());
  for (const auto& p : check.problems) MESSAGE(p);
  CHECK(check.ok);
  CHECK(Timestamps(RecordingBoard::Instance().Take("life")).size() == 30);
}

TEST_CASE("determinism: output content is identical across worker counts") {
  auto registry = MakeEngineTestRegistry();
  // Diamond with a default-policy join; all nodes deterministic.
  const char* config =
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 25 } }\n"
      "node { calculator: \"TestPass\" input_stream: \"s\" "
      "output_stream: \"a\" }\n"
      "node { calculator: \"TestSparse3\" input_stream: \"s\" "
      "output_stream: \"b\" }\n"
      "node { calculator: \"TestJoin2\" input_stream: \"A:a\" "
      "input_stream: \"B:b\" output_stream: \"j\" }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:j\" "
      "options { sink_id: \"det\" } }\n";
  ValidatedGraph graph = BuildGraph(config, registry);

  std::vector<std::vector<std::pair<int64_t, int64_t>>> runs;
  for (int workers : {1, 2, 4}) {
    for (int repeat = 0; repeat < 3; ++repeat) {
      RunOptions options;
      options.executor_workers[""] = workers;
      options.test_task_delay_max_ms = 0.3;
      options.test_task_delay_seed = 1000 + repeat + workers;
      options.test_tie_shuffle_seed = 77 * (repeat + 1);
      GraphRun run(graph, registry, options);
      run.Start();
      REQUIRE(run.WaitUntilDone().ok());
      std::vector<std::pair<int64_t, int64_t>> outputs;
      for (const auto& set : RecordingBoard::Instance().Take("det")) {
        outputs.push_back({set.timestamp.value(), set.present.at("A")});
      }
      runs.push_back(std::move(outputs));
    }
  }
  for (size_t i = 1; i < runs.size(); ++i) {
    CHECK(runs[i] == runs[0]);
  }
  // The join saw every timestamp (sparse branch settles via offset zero).
  CHECK(runs[0].size() == 25);
}

TEST_CASE("same-timestamp packets join regardless of arrival order") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"x\"\n"
      "input_stream: \"y\"\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:x\" "
      "input_stream: \"B:y\" options { sink_id: \"join\" } }\n",
      registry);
  GraphRun run(graph, registry);
  run.Start();
  // Arrival order y@10 then x@10: still one joint input set.
  run.AddToGraphInput("y", MakePacket<int64_t>(100, TS(10)));
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  run.AddToGraphInput("x", MakePacket<int64_t>(200, TS(10)));
  run.CloseAllGraphInputs();
  REQUIRE(run.WaitUntilDone().ok());
  auto sets = RecordingBoard::Instance().Take("join");
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].timestamp == TS(10));
  CHECK(sets[0].present.count("A") == 1);
  CHECK(sets[0].present.count("B") == 1);
}

TEST_CASE("open emissions are delivered before any Process downstream") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"TestOpenEmitter\" output_stream: \"s\" }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:s\" "
      "options { sink_id: \"open\" } }\n",
      registry);
  REQUIRE(RunGraph(graph, registry).ok());
  auto sets = RecordingBoard::Instance().Take("open");
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].present.at("A") == 41);
}

TEST_CASE("Close may flush buffered packets before the stream closes") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 3 } }\n"
      "node { calculator: \"TestHold2\" input_stream: \"s\" "
      "output_stream: \"t\" }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:t\" "
      "options { sink_id: \"flush\" } }\n",
      registry);
  REQUIRE(RunGraph(graph, registry).ok());
  CHECK(Timestamps(RecordingBoard::Instance().Take("flush")) ==
        std::vector<int64_t>{0, 1, 2});
}

TEST_CASE("Close emitting non-monotonically fails the run") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 3 } }\n"
      "node { calculator: \"TestBadCloser\" input_stream: \"s\" "
      "output_stream: \"t\" }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:t\" "
      "options { sink_id: \"bad\" } }\n",
      registry);
  RunResult result = RunGraph(graph, registry);
  CHECK_FALSE(result.ok());
  CHECK(result.message.find("NonMonotonicTimestamp") != std::string::npos);
  RecordingBoard::Instance().Take("bad");
}

TEST_CASE("side packets order Opens and reach consumers") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "trace_enabled: true\n"
      "node { calculator: \"TestSideUser\" input_stream: \"dummy\" "
      "input_side_packet: \"CFG:cfg\" output_stream: \"t\" "
      "options { sink_id: \"sideuser\" } }\n"
      "node { calculator: \"TestSideProducer\" output_stream: \"dummy\" "
      "output_side_packet: \"CFG:cfg\" options { v: 99 } }\n",
      registry);
  GraphRun run(graph, registry);
  run.Start();
  REQUIRE(run.WaitUntilDone().ok());
  auto sets = RecordingBoard::Instance().Take("sideuser");
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].present.at("SIDE") == 99);

  // Producer's Open finished before the consumer's Open started.
  auto events = run.TraceSnapshot();
  int64_t producer_open_finish = -1, consumer_open_start = -1;
  for (const auto& e : events) {
    if (e.type == TraceEventType::kOpenFinish && e.node_id == 1) {
      producer_open_finish = e.event_time_ns;
    }
    if (e.type == TraceEventType::kOpenStart && e.node_id == 0) {
      consumer_open_start = e.event_time_ns;
    }
  }
  REQUIRE(producer_open_finish >= 0);
  REQUIRE(consumer_open_start >= 0);
  CHECK(producer_open_finish <= consumer_open_start);
}

TEST_CASE("missing required side packet fails at startup") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "input_side_packet: \"cfg\"\n"
      "node { calculator: \"TestSource\" output_stream: \"s\" }\n"
      "node { calculator: \"TestSideUser\" input_stream: \"s\" "
      "input_side_packet: \"CFG:cfg\" output_stream: \"t\" }\n",
      registry);
  GraphRun run(graph, registry);
  try {
    run.Start();
    FAIL("expected StartupError");
  } catch (const FlowError& e) {
    CHECK(e.code() == ErrorCode::kStartupError);
  }
}

TEST_CASE("supplied side packets reach consumers") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "input_side_packet: \"cfg\"\n"
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 1 } }\n"
      "node { calculator: \"TestSideUser\" input_stream: \"s\" "
      "input_side_packet: \"CFG:cfg\" output_stream: \"t\" "
      "options { sink_id: \"supplied\" } }\n",
      registry);
  GraphRun run(graph, registry);
  run.SupplySidePacket("cfg", Packet::Of<int64_t>(1234));
  run.Start();
  REQUIRE(run.WaitUntilDone().ok());
  auto sets = RecordingBoard::Instance().Take("supplied");
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].present.at("SIDE") == 1234);
}

TEST_CASE("back-pressure throttles transitively along a chain") {
  auto registry = MakeEngineTestRegistry();
  // src -> a -> b(slow): queue limits 2 fill back to the source.
  ValidatedGraph graph = BuildGraph(
      "trace_enabled: true\n"
      "max_queue_size: 2\n"
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 10 } }\n"
      "node { calculator: \"TestPass\" input_stream: \"s\" "
      "output_stream: \"t\" }\n"
      "node { calculator: \"TestPass\" input_stream: \"t\" "
      "output_stream: \"u\" options { sleep_ms: 15 } }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:u\" "
      "options { sink_id: \"bp\" } }\n",
      registry);
  RunOptions options;
  options.executor_workers[""] = 2;
  GraphRun run(graph, registry, options);
  run.Start();
  REQUIRE(run.WaitUntilDone().ok());
  auto events = run.TraceSnapshot();

  // Both the source and the intermediate node were throttled at some
  // point; the queues never exceeded their limit; nothing deadlocked.
  std::set<int> throttled_nodes;
  for (const auto& e : events) {
    if (e.type == TraceEventType::kThrottled) throttled_nodes.insert(e.node_id);
  }
  CHECK(throttled_nodes.count(0) == 1);
  CHECK(throttled_nodes.count(1) == 1);
  CHECK(CountEvents(events, TraceEventType::kDeadlockRelaxation) == 0);
  CHECK(QueueHighWater(events, 2) <= 2);  // stream ids are offset by one
  CHECK(QueueHighWater(events, 3) <= 2);
  CHECK(Timestamps(RecordingBoard::Instance().Take("bp")).size() == 10);
}

TEST_CASE("deadlock relaxation: lagging-bound join with a tight limit") {
  auto registry = MakeEngineTestRegistry();
  // PairSum only advances its output bound on every second packet, so the
  // join's direct queue (limit 1) jams while the join waits. Quiescence
  // with a throttled source must trigger relaxation, then completion.
  ValidatedGraph graph = BuildGraph(
      "trace_enabled: true\n"
      "node { calculator: \"TestSource\" output_stream: \"raw\" "
      "options { count: 4 } }\n"
      "node { calculator: \"TestPairSum\" input_stream: \"raw\" "
      "output_stream: \"sums\" }\n"
      "node { calculator: \"TestJoin2\" input_stream: \"A:raw\" "
      "input_stream: \"B:sums\" output_stream: \"j\" max_queue_size: 1 }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:j\" "
      "options { sink_id: \"relax\" } }\n",
      registry);
  GraphRun run(graph, registry);
  run.Start();
  RunResult result = run.WaitUntilDone();
  CHECK(result.ok());
  auto events = run.TraceSnapshot();
  CHECK(CountEvents(events, TraceEventType::kDeadlockRelaxation) >= 1);
  // All four timestamps still came through, in order.
  CHECK(Timestamps(RecordingBoard::Instance().Take("relax")) ==
        std::vector<int64_t>{0, 1, 2, 3});
  auto check = CheckTraceInvariants(events);
  for (const auto& p : check.problems) MESSAGE(p);
  CHECK(check.ok);
}

TEST_CASE("blocked graph-input feeder participates in deadlock relaxation") {
  auto registry = MakeEngineTestRegistry();
  // The app feeds x (limit 1) while the join also needs y, fed later by
  // the same thread: without relaxation this livelocks.
  ValidatedGraph graph = BuildGraph(
      "trace_enabled: true\n"
      "input_stream: \"x\"\n"
      "input_stream: \"y\"\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:x\" "
      "input_stream: \"B:y\" max_queue_size: 1 "
      "options { sink_id: \"feeder\" } }\n",
      registry);
  GraphRun run(graph, registry);
  run.Start();
  for (int64_t ts = 0; ts < 3; ++ts) {
    run.AddToGraphInput("x", MakePacket<int64_t>(ts, TS(ts)));
  }
  for (int64_t ts = 0; ts < 3; ++ts) {
    run.AddToGraphInput("y", MakePacket<int64_t>(ts * 10, TS(ts)));
  }
  run.CloseAllGraphInputs();
  REQUIRE(run.WaitUntilDone().ok());
  auto sets = RecordingBoard::Instance().Take("feeder");
  CHECK(sets.size() == 3);
  CHECK(CountEvents(run.TraceSnapshot(),
                    TraceEventType::kDeadlockRelaxation) >= 1);
}

TEST_CASE("tracing does not change outputs") {
  auto registry = MakeEngineTestRegistry();
  const char* config_fmt =
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 12 } }\n"
      "node { calculator: \"TestPass\" input_stream: \"s\" "
      "output_stream: \"t\" }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:t\" "
      "options { sink_id: \"trace_onoff\" } }\n";
  ValidatedGraph graph = BuildGraph(config_fmt, registry);
  std::vector<std::vector<int64_t>> outputs;
  for (bool traced : {false, true}) {
    RunOptions options;
    options.trace_enabled = traced;
    REQUIRE(RunGraph(graph, registry, options).ok());
    outputs.push_back(
        Timestamps(RecordingBoard::Instance().Take("trace_onoff")));
  }
  CHECK(outputs[0] == outputs[1]);
}

TEST_CASE("poller on a closed empty stream sees only the closed event") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"TestSource\" output_stream: \"s\" "
      "options { count: 0 } }\n",
      registry);
  GraphRun run(graph, registry);
  OutputPoller poller = run.AddOutputPoller("s");
  run.Start();
  CHECK(run.WaitUntilDone().ok());
  auto event = poller.Next();
  REQUIRE(event.has_value());
  CHECK(event->kind == OutputEvent::Kind::kClosed);
  CHECK_FALSE(poller.Next().has_value());
}

TEST_CASE("closing one of two inputs keeps the graph running on the other") {
  auto registry = MakeEngineTestRegistry();
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"x\"\n"
      "input_stream: \"y\"\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:x\" "
      "input_stream: \"B:y\" options { sink_id: \"half\" } }\n",
      registry);
  GraphRun run(graph, registry);
  run.Start();
  run.CloseGraphInput("x");
  // y keeps flowing; the closed x settles everything for the join.
  for (int64_t ts : {1, 2}) {
    run.AddToGraphInput("y", MakePacket<int64_t>(ts, TS(ts)));
  }
  run.CloseGraphInput("y");
  REQUIRE(run.WaitUntilDone().ok());
  auto sets = RecordingBoard::Instance().Take("half");
  CHECK(sets.size() == 2);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>
#include <filesystem>
#include <fstream>
#include <random>

#include "flowgraph/detections.hpp"
#include "flowgraph/stdcalcs.hpp"
#include "flowgraph/synthetic.hpp"
#include "test_support.hpp"
#include "trace_checks.hpp"

using namespace flowgraph;
using namespace flowgraph::testing;

namespace {

CalculatorRegistry& StdRegistry() {
  static CalculatorRegistry* reg = [] {
    auto* r = new CalculatorRegistry();
    RegisterStandardCalculators(*r);
    // Extra recorder for set-level assertions.
    r->Register(
        "TestRecorder",
        [](const NodeOptions&) {
          return CalculatorContract()
              .AddInput("A", TypeSpec::Any(), true)
              .AddInput("B", TypeSpec::Any(), true);
        },
        [] { return std::make_unique<TestRecorder>(); });
    return r;
  }();
  return *reg;
}

Timestamp TS(int64_t v) { return Timestamp(v); }

/// Minimal context for driving a calculator directly.
class FakeContext : public CalculatorContext {
 public:
  NodeOptions options;
  std::map<std::string, Packet> side_packets;
  std::map<std::string, Packet> inputs;
  std::map<std::string, Timestamp> input_bounds;
  Timestamp current = Timestamp::Unset();
  std::vector<std::pair<std::string, Packet>> emitted;
  std::vector<std::string> dropped;

  const NodeOptions& Options() const override { return options; }
  std::string_view NodeName() const override { return "fake"; }
  uint64_t NodeSeed() const override { return 0; }
  const Packet* InputSidePacket(std::string_view tag) const override {
    auto it = side_packets.find(std::string(tag));
    return it == side_packets.end() ? nullptr : &it->second;
  }
  void SetOutputSidePacket(std::string_view, Packet) override {}
  Timestamp InputTimestamp() const override { return current; }
  const Packet* Input(std::string_view tag) const override {
    auto it = inputs.find(std::string(tag));
    return it == inputs.end() ? nullptr : &it->second;
  }
  Timestamp InputBound(std::string_view tag) const override {
    auto it = input_bounds.find(std::string(tag));
    return it == input_bounds.end() ? Timestamp::Min() : it->second;
  }
  void MarkInputDropped(std::string_view tag) override {
    dropped.push_back(std::string(tag));
  }
  void Emit(std::string_view tag, Packet p) override {
    emitted.push_back({std::string(tag), std::move(p)});
  }
  void SetOutputBound(std::string_view, Timestamp) override {}
  void CloseOutput(std::string_view) override {}
  void CloseAllOutputs() override { closed_all = true; }

  bool closed_all = false;

  void Step(Calculator& calc, Timestamp ts,
            std::map<std::string, Packet> set) {
    current = ts;
    inputs = std::move(set);
    calc.Process(*this);
    inputs.clear();
  }
};

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// PassThrough
// ---------------------------------------------------------------------------

TEST_CASE("PassThrough forwards packets unchanged") {
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"ScriptedSource\" output_stream: \"s\" "
      "options { count: 100 seed: 3 } }\n"
      "node { calculator: \"PassThrough\" input_stream: \"s\" "
      "output_stream: \"t\" }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  std::vector<std::pair<int64_t, int64_t>> in, out;
  std::mutex mu;
  run.ObserveOutput("s", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(mu);
    in.push_back({p.timestamp().value(), p.Get<int64_t>()});
  });
  run.ObserveOutput("t", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(mu);
    out.push_back({p.timestamp().value(), p.Get<int64_t>()});
  });
  run.Start();
  REQUIRE(run.WaitUntilDone().ok());
  CHECK(in.size() == 100);
  CHECK(in == out);
}

TEST_CASE("PassThrough with no input ever closes cleanly") {
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"in\"\n"
      "node { calculator: \"PassThrough\" input_stream: \"in\" "
      "output_stream: \"out\" }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  int outputs = 0;
  run.ObserveOutput("out", [&](const Packet&) { ++outputs; });
  run.Start();
  run.CloseAllGraphInputs();
  CHECK(run.WaitUntilDone().ok());
  CHECK(outputs == 0);
}

// ---------------------------------------------------------------------------
// RoundRobinDemux / Mux
// ---------------------------------------------------------------------------

TEST_CASE("demux contract declares one output per requested branch") {
  for (int64_t n = 1; n <= 8; ++n) {
    NodeOptions options;
    options.Set("outputs", n);
    CalculatorContract contract =
        StdRegistry().FillContract("RoundRobinDemux", options);
    CHECK(contract.outputs().size() == static_cast<size_t>(n));
  }
  NodeOptions bad;
  bad.Set("outputs", int64_t{0});
  CHECK_THROWS_AS(StdRegistry().FillContract("RoundRobinDemux", bad),
                  FlowError);
}

TEST_CASE("demux n=2 interleaves by arrival order") {
  // Direct simulation oracle: k-th packet to OUT(k mod 2).
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"in\"\n"
      "node { calculator: \"RoundRobinDemux\" input_stream: \"in\" "
      "output_stream: \"OUT0:a\" output_stream: \"OUT1:b\" "
      "options { outputs: 2 } }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  std::vector<int64_t> a, b;
  std::mutex mu;
  run.ObserveOutput("a", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(mu);
    a.push_back(p.timestamp().value());
  });
  run.ObserveOutput("b", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(mu);
    b.push_back(p.timestamp().value());
  });
  run.Start();
  for (int64_t ts = 1; ts <= 6; ++ts) {
    run.AddToGraphInput("in", MakePacket<int64_t>(ts, TS(ts)));
  }
  run.CloseAllGraphInputs();
  REQUIRE(run.WaitUntilDone().ok());
  CHECK(a == std::vector<int64_t>{1, 3, 5});
  CHECK(b == std::vector<int64_t>{2, 4, 6});
}

TEST_CASE("demux keeps silent branches settling via bounds") {
  // n=3 with 2 packets: OUT2 gets nothing but its bound still reaches 3,
  // observable through a default-policy join that needs OUT2 settled.
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"in\"\n"
      "node { calculator: \"RoundRobinDemux\" input_stream: \"in\" "
      "output_stream: \"OUT0:a\" output_stream: \"OUT1:b\" "
      "output_stream: \"OUT2:c\" options { outputs: 3 } }\n"
      "node { calculator: \"TestRecorder\" input_stream: \"A:a\" "
      "input_stream: \"B:c\" options { sink_id: \"demux3\" } }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  run.Start();
  run.AddToGraphInput("in", MakePacket<int64_t>(1, TS(1)));
  run.AddToGraphInput("in", MakePacket<int64_t>(2, TS(2)));
  run.CloseAllGraphInputs();
  REQUIRE(run.WaitUntilDone().ok());
  // The join fired for timestamp 1 with only A present; that is only
  // possible if OUT2's bound passed 1 without a packet.
  auto sets = RecordingBoard::Instance().Take("demux3");
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].timestamp == TS(1));
  CHECK(sets[0].present.count("A") == 1);
  CHECK(sets[0].present.count("B") == 0);
}

TEST_CASE("property: demux then mux is the identity for n in 1..8") {
  std::mt19937 rng(424242);
  for (int n = 1; n <= 8; ++n) {
    std::string config = "input_stream: \"in\"\n";
    config += "node { calculator: \"RoundRobinDemux\" input_stream: \"in\" ";
    for (int i = 0; i < n; ++i) {
      config += "output_stream: \"OUT" + std::to_string(i) + ":s" +
                std::to_string(i) + "\" ";
    }
    config += "options { outputs: " + std::to_string(n) + " } }\n";
    config += "node { calculator: \"Mux\" ";
    for (int i = 0; i < n; ++i) {
      config += "input_stream: \"IN" + std::to_string(i) + ":s" +
                std::to_string(i) + "\" ";
    }
    config += "output_stream: \"joined\" options { inputs: " +
              std::to_string(n) + " } }\n";
    ValidatedGraph graph = BuildGraph(config, StdRegistry());
    GraphRun run(graph, StdRegistry());
    std::vector<std::pair<int64_t, int64_t>> out;
    std::mutex mu;
    run.ObserveOutput("joined", [&](const Packet& p) {
      std::lock_guard<std::mutex> lock(mu);
      out.push_back({p.timestamp().value(), p.Get<int64_t>()});
    });
    run.Start();
    std::vector<std::pair<int64_t, int64_t>> fed;
    int64_t ts = 0;
    const int packets = 5 + static_cast<int>(rng() % 20);
    for (int k = 0; k < packets; ++k) {
      ts += 1 + static_cast<int64_t>(rng() % 4);
      int64_t value = static_cast<int64_t>(rng() % 1000);
      fed.push_back({ts, value});
      run.AddToGraphInput("in", MakePacket<int64_t>(value, TS(ts)));
    }
    run.CloseAllGraphInputs();
    REQUIRE(run.WaitUntilDone().ok());
    CHECK(out == fed);
  }
}

TEST_CASE("mux rejects colliding inputs") {
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"x\"\n"
      "input_stream: \"y\"\n"
      "node { calculator: \"Mux\" input_stream: \"IN0:x\" "
      "input_stream: \"IN1:y\" output_stream: \"out\" "
      "options { inputs: 2 } }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  run.Start();
  run.AddToGraphInput("x", MakePacket<int64_t>(1, TS(4)));
  run.AddToGraphInput("y", MakePacket<int64_t>(2, TS(4)));
  run.CloseAllGraphInputs();
  RunResult result = run.WaitUntilDone();
  CHECK_FALSE(result.ok());
  CHECK(result.message.find("CollidingInputs") != std::string::npos);
}

// ---------------------------------------------------------------------------
// FrameSelector
// ---------------------------------------------------------------------------

TEST_CASE("frame selector emits per the limiting-frequency rule") {
  // Simulated rule: emit iff ts >= last_emitted + min_period.
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"in\"\n"
      "node { calculator: \"FrameSelector\" input_stream: \"in\" "
      "output_stream: \"sel\" options { min_period: 3 } }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  std::vector<int64_t> selected;
  std::mutex mu;
  run.ObserveOutput("sel", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(mu);
    selected.push_back(p.timestamp().value());
  });
  run.Start();
  for (int64_t ts : {0, 1, 2, 3, 4, 6}) {
    run.AddToGraphInput("in", MakePacket<int64_t>(ts, TS(ts)));
  }
  run.CloseAllGraphInputs();
  REQUIRE(run.WaitUntilDone().ok());
  CHECK(selected == std::vector<int64_t>{0, 3, 6});
}

TEST_CASE("frame selector with period 1 is the identity") {
  FakeContext ctx;
  ctx.options.Set("min_period", int64_t{1});
  auto calc = StdRegistry().Create("FrameSelector");
  for (int64_t ts : {0, 1, 2, 5}) {
    ctx.Step(*calc, TS(ts), {{"IN", MakePacket<int64_t>(ts, TS(ts))}});
  }
  CHECK(ctx.emitted.size() == 4);
  CHECK(ctx.dropped.empty());
}

// ---------------------------------------------------------------------------
// MockDetector / MockTracker / DetectionMerger
// ---------------------------------------------------------------------------

TEST_CASE("mock detector maps ground truth to centered detections") {
  FakeContext ctx;
  ctx.side_packets["MODEL"] = Packet::Of<std::string>("obj");
  auto calc = StdRegistry().Create("MockDetector");
  calc->Open(ctx);

  SyntheticFrame frame;
  frame.index = 0;
  frame.positions = {{0.5, 0.5}};
  ctx.Step(*calc, TS(0), {{"FRAME", Packet::Of(frame).At(TS(0))}});
  REQUIRE(ctx.emitted.size() == 1);
  const Detections& dets = ctx.emitted[0].second.Get<Detections>();
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].box[0] + dets[0].box[2] / 2 == doctest::Approx(0.5));
  CHECK(dets[0].box[1] + dets[0].box[3] / 2 == doctest::Approx(0.5));
  CHECK(dets[0].label == "obj");
  CHECK(dets[0].score == doctest::Approx(0.875));

  // Empty frame: empty detections packet, not nothing.
  SyntheticFrame empty;
  ctx.emitted.clear();
  ctx.Step(*calc, TS(1), {{"FRAME", Packet::Of(empty).At(TS(1))}});
  REQUIRE(ctx.emitted.size() == 1);
  CHECK(ctx.emitted[0].second.Get<Detections>().empty());
}

TEST_CASE("mock detector requires its model side packet at startup") {
  ValidatedGraph graph = BuildGraph(
      "input_side_packet: \"model\"\n"
      "node { calculator: \"ScriptedSource\" output_stream: \"f\" "
      "options { payload: \"frame\" count: 2 } }\n"
      "node { calculator: \"MockDetector\" input_stream: \"FRAME:f\" "
      "input_side_packet: \"MODEL:model\" "
      "output_stream: \"DETECTIONS:d\" }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  CHECK_THROWS_AS(run.Start(), FlowError);
}

TEST_CASE("mock tracker: no state means empty results at each frame") {
  FakeContext ctx;
  ctx.input_bounds["STATE"] = Timestamp::Min();
  auto calc = StdRegistry().Create("MockTracker");
  SyntheticWorld world(5, 1);
  for (int64_t ts : {0, 1, 2}) {
    ctx.Step(*calc, TS(ts),
             {{"FRAME", Packet::Of(world.FrameAt(ts, ts)).At(TS(ts))}});
  }
  REQUIRE(ctx.emitted.size() == 3);
  for (const auto& [tag, packet] : ctx.emitted) {
    CHECK(packet.Get<Detections>().empty());
  }
}

TEST_CASE("mock tracker advances boxes by the known drift (closed form)") {
  FakeContext ctx;
  auto calc = StdRegistry().Create("MockTracker");

  Detections init;
  init.push_back({{0.1, 0.2, 0.1, 0.1}, "obj", 0.875});
  ctx.Step(*calc, TS(0), {{"STATE", Packet::Of(init).At(TS(0))}});
  CHECK(ctx.emitted.empty());  // state alone emits nothing

  SyntheticFrame frame;
  frame.drift_x = 0.01;
  frame.drift_y = 0.0;
  frame.positions = {{0.15, 0.25}};
  ctx.Step(*calc, TS(5), {{"FRAME", Packet::Of(frame).At(TS(5))}});
  REQUIRE(ctx.emitted.size() == 1);
  const Detections& tracked = ctx.emitted[0].second.Get<Detections>();
  REQUIRE(tracked.size() == 1);
  CHECK(tracked[0].box[0] == doctest::Approx(0.15).epsilon(1e-9));
  CHECK(tracked[0].box[1] == doctest::Approx(0.2).epsilon(1e-9));

  // Re-initialization replaces stale targets.
  Detections fresh;
  fresh.push_back({{0.8, 0.8, 0.05, 0.05}, "other", 0.5});
  ctx.emitted.clear();
  ctx.Step(*calc, TS(6), {{"STATE", Packet::Of(fresh).At(TS(6))}});
  ctx.Step(*calc, TS(7), {{"FRAME", Packet::Of(frame).At(TS(7))}});
  REQUIRE(ctx.emitted.size() == 1);
  const Detections& tracked2 = ctx.emitted[0].second.Get<Detections>();
  REQUIRE(tracked2.size() == 1);
  CHECK(tracked2[0].label == "other");
  CHECK(tracked2[0].box[0] == doctest::Approx(0.81).epsilon(1e-9));
}

TEST_CASE("detection merger dedups by IoU and keeps the higher score") {
  FakeContext ctx;
  auto calc = StdRegistry().Create("DetectionMerger");

  SUBCASE("identical boxes merge to one") {
    Detections a, b;
    a.push_back({{0.1, 0.1, 0.2, 0.2}, "x", 0.9});
    b.push_back({{0.1, 0.1, 0.2, 0.2}, "x", 0.8});
    ctx.Step(*calc, TS(0),
             {{"NEW", Packet::Of(a).At(TS(0))},
              {"TRACKED", Packet::Of(b).At(TS(0))}});
    REQUIRE(ctx.emitted.size() == 1);
    const Detections& merged = ctx.emitted[0].second.Get<Detections>();
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].score == doctest::Approx(0.9));
  }

  SUBCASE("disjoint boxes both survive") {
    Detections a, b;
    a.push_back({{0.0, 0.0, 0.2, 0.2}, "x", 0.9});
    b.push_back({{0.5, 0.5, 0.2, 0.2}, "x", 0.8});
    ctx.Step(*calc, TS(0),
             {{"NEW", Packet::Of(a).At(TS(0))},
              {"TRACKED", Packet::Of(b).At(TS(0))}});
    CHECK(ctx.emitted[0].second.Get<Detections>().size() == 2);
  }

  SUBCASE("hand-computed IoU 0.6 pair keeps score 0.9") {
    // Boxes [0,0,1,1] and [0,0.25,1,1]: intersection 0.75, union 1.25,
    // IoU = 0.6 > 0.5.
    Detections a, b;
    a.push_back({{0.0, 0.0, 1.0, 1.0}, "x", 0.9});
    b.push_back({{0.0, 0.25, 1.0, 1.0}, "x", 0.4});
    CHECK(IoU(a[0].box, b[0].box) == doctest::Approx(0.6));
    ctx.Step(*calc, TS(0),
             {{"NEW", Packet::Of(a).At(TS(0))},
              {"TRACKED", Packet::Of(b).At(TS(0))}});
    const Detections& merged = ctx.emitted[0].second.Get<Detections>();
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].score == doctest::Approx(0.9));
  }

  SUBCASE("different labels never merge") {
    Detections a, b;
    a.push_back({{0.1, 0.1, 0.2, 0.2}, "cat", 0.9});
    b.push_back({{0.1, 0.1, 0.2, 0.2}, "dog", 0.8});
    ctx.Step(*calc, TS(0),
             {{"NEW", Packet::Of(a).At(TS(0))},
              {"TRACKED", Packet::Of(b).At(TS(0))}});
    CHECK(ctx.emitted[0].second.Get<Detections>().size() == 2);
  }
}

TEST_CASE("property: merger is idempotent against an empty tracked input") {
  std::mt19937 rng(7);
  auto calc = StdRegistry().Create("DetectionMerger");
  for (int round = 0; round < 20; ++round) {
    Detections input;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      double x = static_cast<double>(rng() % 60) / 100.0;
      double y = static_cast<double>(rng() % 60) / 100.0;
      input.push_back({{x, y, 0.2, 0.2},
                       rng() % 2 ? "a" : "b",
                       static_cast<double>(rng() % 100) / 100.0});
    }
    FakeContext ctx;
    ctx.Step(*calc, TS(0),
             {{"NEW", Packet::Of(input).At(TS(0))},
              {"TRACKED", Packet::Of(Detections{}).At(TS(0))}});
    Detections once = ctx.emitted[0].second.Get<Detections>();
    FakeContext ctx2;
    ctx2.Step(*calc, TS(0),
              {{"NEW", Packet::Of(once).At(TS(0))},
               {"TRACKED", Packet::Of(Detections{}).At(TS(0))}});
    CHECK(ctx2.emitted[0].second.Get<Detections>() == once);
  }
}

// ---------------------------------------------------------------------------
// Interpolator
// ---------------------------------------------------------------------------

TEST_CASE("interpolator emits the linear blend at clock timestamps") {
  ValidatedGraph graph = BuildGraph(
      "input_stream: \"sparse\"\n"
      "input_stream: \"clock\"\n"
      "node { calculator: \"Interpolator\" input_stream: \"SPARSE:sparse\" "
      "input_stream: \"CLOCK:clock\" output_stream: \"DENSE:dense\" }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  std::vector<std::pair<int64_t, double>> out;
  std::mutex mu;
  run.ObserveOutput("dense", [&](const Packet& p) {
    std::lock_guard<std::mutex> lock(mu);
    out.push_back({p.timestamp().value(), p.Get<std::vector<double>>()[0]});
  });
  run.Start();
  run.AddToGraphInput("sparse",
                      MakePacket<std::vector<double>>({0.0}, TS(0)));
  run.AddToGraphInput("clock", MakePacket<int64_t>(0, TS(5)));
  run.AddToGraphInput("sparse",
                      MakePacket<std::vector<double>>({10.0}, TS(10)));
  run.AddToGraphInput("clock", MakePacket<int64_t>(0, TS(10)));
  run.AddToGraphInput("clock", MakePacket<int64_t>(0, TS(12)));
  run.CloseAllGraphInputs();
  REQUIRE(run.WaitUntilDone().ok());
  REQUIRE(out.size() == 3);
  CHECK(out[0] == std::pair<int64_t, double>{5, 5.0});   // linear blend
  CHECK(out[1] == std::pair<int64_t, double>{10, 10.0});  // exact sample
  CHECK(out[2] == std::pair<int64_t, double>{12, 10.0});  // edge hold
}

TEST_CASE("property: interpolation stays within its bracketing samples") {
  std::mt19937 rng(99);
  for (int round = 0; round < 15; ++round) {
    ValidatedGraph graph = BuildGraph(
        "input_stream: \"sparse\"\n"
        "input_stream: \"clock\"\n"
        "node { calculator: \"Interpolator\" input_stream: \"SPARSE:sparse\" "
        "input_stream: \"CLOCK:clock\" output_stream: \"DENSE:dense\" }\n",
        StdRegistry());
    GraphRun run(graph, StdRegistry());
    std::vector<std::pair<int64_t, double>> out;
    std::mutex mu;
    run.ObserveOutput("dense", [&](const Packet& p) {
      std::lock_guard<std::mutex> lock(mu);
      out.push_back({p.timestamp().value(), p.Get<std::vector<double>>()[0]});
    });
    run.Start();
    std::map<int64_t, double> samples;
    int64_t ts = 0;
    for (int i = 0; i < 6; ++i) {
      ts += 1 + static_cast<int64_t>(rng() % 10);
      double v = static_cast<double>(rng() % 1000) / 10.0;
      samples[ts] = v;
      run.AddToGraphInput("sparse",
                          MakePacket<std::vector<double>>({v}, TS(ts)));
    }
    for (int64_t t = 1; t <= ts + 3; t += 2) {
      run.AddToGraphInput("clock", MakePacket<int64_t>(0, TS(t)));
    }
    run.CloseAllGraphInputs();
    REQUIRE(run.WaitUntilDone().ok());
    for (const auto& [t, v] : out) {
      auto hi = samples.lower_bound(t);
      double lo_v, hi_v;
      if (hi == samples.end()) {
        lo_v = hi_v = samples.rbegin()->second;  // right edge hold
      } else if (hi == samples.begin()) {
        lo_v = hi_v = hi->second;  // left edge hold
      } else {
        hi_v = hi->second;
        lo_v = std::prev(hi)->second;
        if (hi->first == t) lo_v = hi_v;  // exact sample
      }
      CHECK(v >= std::min(lo_v, hi_v) - 1e-12);
      CHECK(v <= std::max(lo_v, hi_v) + 1e-12);
      if (samples.count(t)) {
        CHECK(v == doctest::Approx(samples[t]).epsilon(1e-12));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// FlowLimiter
// ---------------------------------------------------------------------------

TEST_CASE("flow limiter hand-stepped admission sequence") {
  // limit 1, IN ts[1,2,3]; FINISHED for 1 arrives after 2:
  // admit 1, drop 2, admit 3.
  FakeContext ctx;
  ctx.options.Set("max_in_flight", int64_t{1});
  auto calc = StdRegistry().Create("FlowLimiter");

  ctx.Step(*calc, TS(1), {{"IN", MakePacket<int64_t>(1, TS(1))}});
  ctx.Step(*calc, TS(2), {{"IN", MakePacket<int64_t>(2, TS(2))}});
  ctx.Step(*calc, TS(1), {{"FINISHED", MakePacket<int64_t>(1, TS(1))}});
  ctx.Step(*calc, TS(3), {{"IN", MakePacket<int64_t>(3, TS(3))}});

  REQUIRE(ctx.emitted.size() == 2);
  CHECK(ctx.emitted[0].second.timestamp() == TS(1));
  CHECK(ctx.emitted[1].second.timestamp() == TS(3));
  CHECK(ctx.dropped == std::vector<std::string>{"IN"});
}

TEST_CASE("flow limiter never drops when the limit covers the input") {
  FakeContext ctx;
  ctx.options.Set("max_in_flight", int64_t{100});
  auto calc = StdRegistry().Create("FlowLimiter");
  for (int64_t ts = 0; ts < 20; ++ts) {
    ctx.Step(*calc, TS(ts), {{"IN", MakePacket<int64_t>(ts, TS(ts))}});
  }
  CHECK(ctx.emitted.size() == 20);
  CHECK(ctx.dropped.empty());
}

TEST_CASE("flow limiter ignores finished packets with nothing outstanding") {
  FakeContext ctx;
  ctx.options.Set("max_in_flight", int64_t{1});
  auto calc = StdRegistry().Create("FlowLimiter");
  ctx.Step(*calc, TS(0), {{"FINISHED", MakePacket<int64_t>(0, TS(0))}});
  ctx.Step(*calc, TS(1), {{"IN", MakePacket<int64_t>(1, TS(1))}});
  ctx.Step(*calc, TS(2), {{"IN", MakePacket<int64_t>(2, TS(2))}});
  // First admission consumed the only slot despite the earlier FINISHED.
  CHECK(ctx.emitted.size() == 1);
  CHECK(ctx.dropped.size() == 1);
}

TEST_CASE("property: in_flight never exceeds the limit; all input accounted") {
  std::mt19937 rng(1234);
  for (int round = 0; round < 30; ++round) {
    const int64_t limit = 1 + static_cast<int64_t>(rng() % 4);
    FakeContext ctx;
    ctx.options.Set("max_in_flight", limit);
    auto calc = StdRegistry().Create("FlowLimiter");

    // Reference state machine stepped alongside the calculator.
    int64_t in_flight = 0, admitted = 0, dropped = 0, received = 0;
    std::deque<int64_t> outstanding;
    int64_t ts = 0;
    for (int step = 0; step < 60; ++step) {
      if (!outstanding.empty() && rng() % 2 == 0) {
        int64_t done = outstanding.front();
        outstanding.pop_front();
        ctx.Step(*calc, TS(done),
                 {{"FINISHED", MakePacket<int64_t>(done, TS(done))}});
        if (in_flight > 0) --in_flight;
      } else {
        ++ts;
        ++received;
        size_t emitted_before = ctx.emitted.size();
        ctx.Step(*calc, TS(ts), {{"IN", MakePacket<int64_t>(ts, TS(ts))}});
        if (in_flight < limit) {
          ++in_flight;
          ++admitted;
          outstanding.push_back(ts);
          CHECK(ctx.emitted.size() == emitted_before + 1);
        } else {
          ++dropped;
          CHECK(ctx.emitted.size() == emitted_before);
        }
        CHECK(in_flight <= limit);
      }
    }
    CHECK(static_cast<int64_t>(ctx.emitted.size()) == admitted);
    CHECK(static_cast<int64_t>(ctx.dropped.size()) == dropped);
    CHECK(admitted + dropped == received);
  }
}

// ---------------------------------------------------------------------------
// ScriptedSource / RecordingSink / MockLandmarker / VectorJoin
// ---------------------------------------------------------------------------

TEST_CASE("scripted source emits count packets at period spacing") {
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"ScriptedSource\" output_stream: \"s\" "
      "options { count: 3 period: 10 } }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  std::vector<int64_t> ts;
  std::mutex mu;
  bool closed = false;
  OutputPoller poller = run.AddOutputPoller("s");
  run.Start();
  REQUIRE(run.WaitUntilDone().ok());
  while (auto event = poller.Next()) {
    if (event->kind == OutputEvent::Kind::kPacket) {
      ts.push_back(event->packet.timestamp().value());
    }
    if (event->kind == OutputEvent::Kind::kClosed) closed = true;
  }
  CHECK(ts == std::vector<int64_t>{0, 10, 20});
  CHECK(closed);
  (void)mu;
}

TEST_CASE("scripted source with count 0 closes immediately") {
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"ScriptedSource\" output_stream: \"s\" "
      "options { count: 0 } }\n",
      StdRegistry());
  GraphRun run(graph, StdRegistry());
  int packets = 0;
  run.ObserveOutput("s", [&](const Packet&) { ++packets; });
  run.Start();
  CHECK(run.WaitUntilDone().ok());
  CHECK(packets == 0);
}

TEST_CASE("scripted source payloads are a pure function of the seed") {
  for (const char* payload : {"vector", "frame", "f64", "string"}) {
    std::vector<std::string> literals;
    for (int repeat = 0; repeat < 2; ++repeat) {
      ValidatedGraph graph = BuildGraph(
          std::string("node { calculator: \"ScriptedSource\" "
                      "output_stream: \"s\" options { count: 5 seed: 77 "
                      "payload: \"") +
              payload + "\" } }\n",
          StdRegistry());
      GraphRun run(graph, StdRegistry());
      std::string text;
      std::mutex mu;
      run.ObserveOutput("s", [&](const Packet& p) {
        std::lock_guard<std::mutex> lock(mu);
        text += p.ToLiteral() + "\n";
      });
      run.Start();
      REQUIRE(run.WaitUntilDone().ok());
      literals.push_back(text);
    }
    CHECK(literals[0] == literals[1]);
    CHECK_FALSE(literals[0].empty());
  }
}

TEST_CASE("recording sink writes one line per packet and flushes on close") {
  const std::string path = TempPath("flowgraph_sink_test.txt");
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"ScriptedSource\" output_stream: \"s\" "
      "options { count: 3 } }\n"
      "node { calculator: \"RecordingSink\" input_stream: \"s\" "
      "options { path: \"" + path + "\" } }\n",
      StdRegistry());
  REQUIRE(RunGraph(graph, StdRegistry()).ok());
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "ts=0 0");
  CHECK(lines[1] == "ts=1 1");
  CHECK(lines[2] == "ts=2 2");
  std::filesystem::remove(path);
}

TEST_CASE("recording sink creates an empty file for an empty stream") {
  const std::string path = TempPath("flowgraph_sink_empty.txt");
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"ScriptedSource\" output_stream: \"s\" "
      "options { count: 0 } }\n"
      "node { calculator: \"RecordingSink\" input_stream: \"s\" "
      "options { path: \"" + path + "\" } }\n",
      StdRegistry());
  REQUIRE(RunGraph(graph, StdRegistry()).ok());
  CHECK(std::filesystem::exists(path));
  CHECK(std::filesystem::file_size(path) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("recording sink detections literal matches the golden file") {
  ValidatedGraph graph = BuildGraph(
      "input_side_packet: \"model\"\n"
      "node { calculator: \"ScriptedSource\" output_stream: \"f\" "
      "options { payload: \"frame\" count: 4 period: 2 seed: 11 } }\n"
      "node { calculator: \"MockDetector\" input_stream: \"FRAME:f\" "
      "input_side_packet: \"MODEL:model\" "
      "output_stream: \"DETECTIONS:d\" }\n"
      "node { calculator: \"RecordingSink\" input_stream: \"d\" "
      "options { memory_key: \"golden\" } }\n",
      StdRegistry());
  std::map<std::string, Packet> sides;
  sides["model"] = Packet::Of<std::string>("obj");
  REQUIRE(RunGraph(graph, StdRegistry(), {}, sides).ok());
  std::string recorded = TakeRecordedText("golden");

  std::ifstream golden(std::string(FLOWGRAPH_SOURCE_DIR) +
                       "/tests/golden/detections_sink.txt");
  REQUIRE(golden.good());
  std::string expected((std::istreambuf_iterator<char>(golden)),
                       std::istreambuf_iterator<char>());
  CHECK(recorded == expected);
}

TEST_CASE("recording sink surfaces unwritable paths as errors") {
  ValidatedGraph graph = BuildGraph(
      "node { calculator: \"ScriptedSource\" output_stream: \"s\" "
      "options { count: 1 } }\n"
      "node { calculator: \"RecordingSink\" input_stream: \"s\" "
      "options { path: \"/nonexistent_dir/x.txt\" } }\n",
      StdRegistry());
  RunResult result = RunGraph(graph, StdRegistry());
  CHECK_FALSE(result.ok());
  CHECK(result.message.find("IoError") != std::string::npos);
}

TEST_CASE("landmarker flattens ground-truth positions") {
  FakeContext ctx;
  auto calc = StdRegistry().Create("MockLandmarker");
  SyntheticFrame frame;
  frame.positions = {{0.25, 0.5}, {0.375, 0.125}};
  ctx.Step(*calc, TS(3), {{"FRAME", Packet::Of(frame).At(TS(3))}});
  REQUIRE(ctx.emitted.size() == 1);
  CHECK(ctx.emitted[0].second.Get<std::vector<double>>() ==
        std::vector<double>{0.25, 0.5, 0.375, 0.125});
}

TEST_CASE("vector join concatenates present inputs") {
  FakeContext ctx;
  ctx.options.Set("inputs", int64_t{2});
  auto calc = StdRegistry().Create("VectorJoin");
  ctx.Step(*calc, TS(1),
           {{"IN0", MakePacket<std::vector<double>>({1, 2}, TS(1))},
            {"IN1", MakePacket<std::vector<double>>({3}, TS(1))}});
  REQUIRE(ctx.emitted.size() == 1);
  CHECK(ctx.emitted[0].second.Get<std::vector<double>>() ==
        std::vector<double>{1, 2, 3});
}

// ---------------------------------------------------------------------------
// Tracker/detector agreement (the "perfectly aligned" property)
// ---------------------------------------------------------------------------

TEST_CASE("tracker output matches detector ground truth at detection times") {
  // Zero-jitter detections advanced by the exact drift must land exactly
  // on the detections the detector would produce at the later frame.
  SyntheticWorld world(21, 2);
  FakeContext det_ctx;
  det_ctx.side_packets["MODEL"] = Packet::Of<std::string>("obj");
  auto detector = StdRegistry().Create("MockDetector");
  detector->Open(det_ctx);
  auto tracker = StdRegistry().Create("MockTracker");
  FakeContext trk_ctx;

  // Detection at ts=4 initializes the tracker.
  det_ctx.Step(*detector, TS(4),
               {{"FRAME", Packet::Of(world.FrameAt(4, 4)).At(TS(4))}});
  Packet state = det_ctx.emitted[0].second;
  trk_ctx.Step(*tracker, TS(4), {{"STATE", state.At(TS(4))}});

  // Tracked at ts=9 vs fresh detection at ts=9: identical boxes.
  trk_ctx.Step(*tracker, TS(9),
               {{"FRAME", Packet::Of(world.FrameAt(9, 9)).At(TS(9))}});
  det_ctx.emitted.clear();
  det_ctx.Step(*detector, TS(9),
               {{"FRAME", Packet::Of(world.FrameAt(9, 9)).At(TS(9))}});

  const Detections& tracked = trk_ctx.emitted[0].second.Get<Detections>();
  const Detections& detected = det_ctx.emitted[0].second.Get<Detections>();
  REQUIRE(tracked.size() == detected.size());
  for (size_t i = 0; i < tracked.size(); ++i) {
    for (int k = 0; k < 4; ++k) {
      CHECK(tracked[i].box[k] == detected[i].box[k]);  // bit-exact
    }
  }
}

#include "flowgraph/stdcalcs.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include "flowgraph/calculator.hpp"
#include "flowgraph/detections.hpp"
#include "flowgraph/synthetic.hpp"

namespace flowgraph {

namespace {

void SleepOption(CalculatorContext& cc) {
  const int64_t ms = cc.Options().GetInt("sleep_ms", 0);
  if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

int64_t RequirePositive(const NodeOptions& options, const std::string& key,
                        int64_t fallback) {
  const int64_t v = options.GetInt(key, fallback);
  if (v < 1) {
    throw FlowError(ErrorCode::kInvalidOptions,
                    "option '" + key + "' must be >= 1, got " +
                        std::to_string(v));
  }
  return v;
}

// ---------------------------------------------------------------------------
// PassThrough
// ---------------------------------------------------------------------------

class PassThroughCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    SleepOption(cc);
    if (const Packet* p = cc.Input("IN")) cc.Emit("OUT", *p);
  }
};

CalculatorContract PassThroughContract(const NodeOptions&) {
  return CalculatorContract()
      .AddInput("IN")
      .AddOutput("OUT", TypeSpec::SameAsInput("IN"))
      .SetTimestampOffsetZero();
}

// ---------------------------------------------------------------------------
// RoundRobinDemux
// ---------------------------------------------------------------------------

class RoundRobinDemuxCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    const int64_t n = cc.Options().GetInt("outputs", 1);
    const Packet* p = cc.Input("IN");
    cc.Emit("OUT" + std::to_string(next_ % n), *p);
    ++next_;
  }

 private:
  int64_t next_ = 0;
};

CalculatorContract RoundRobinDemuxContract(const NodeOptions& options) {
  const int64_t n = RequirePositive(options, "outputs", 1);
  CalculatorContract contract;
  contract.AddInput("IN");
  for (int64_t i = 0; i < n; ++i) {
    contract.AddOutput("OUT" + std::to_string(i), TypeSpec::SameAsInput("IN"));
  }
  contract.SetTimestampOffsetZero();
  return contract;
}

// ---------------------------------------------------------------------------
// Mux
// ---------------------------------------------------------------------------

class MuxCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    const int64_t n = cc.Options().GetInt("inputs", 2);
    const Packet* present = nullptr;
    for (int64_t i = 0; i < n; ++i) {
      if (const Packet* p = cc.Input("IN" + std::to_string(i))) {
        if (present != nullptr) {
          throw FlowError(ErrorCode::kCollidingInputs,
                          "two inputs present at " +
                              cc.InputTimestamp().ToString());
        }
        present = p;
      }
    }
    if (present != nullptr) cc.Emit("OUT", *present);
  }
};

CalculatorContract MuxContract(const NodeOptions& options) {
  const int64_t n = RequirePositive(options, "inputs", 2);
  CalculatorContract contract;
  for (int64_t i = 0; i < n; ++i) {
    contract.AddInput("IN" + std::to_string(i));
  }
  contract.AddOutput("OUT");
  contract.SetTimestampOffsetZero();
  return contract;
}

// ---------------------------------------------------------------------------
// FrameSelector
// ---------------------------------------------------------------------------

class FrameSelectorCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    const int64_t period = cc.Options().GetInt("min_period", 1);
    const Packet* p = cc.Input("IN");
    const int64_t ts = cc.InputTimestamp().value();
    if (!last_emitted_ || ts >= *last_emitted_ + period) {
      cc.Emit("OUT", *p);
      last_emitted_ = ts;
    } else {
      cc.MarkInputDropped("IN");
    }
  }

 private:
  std::optional<int64_t> last_emitted_;
};

CalculatorContract FrameSelectorContract(const NodeOptions& options) {
  RequirePositive(options, "min_period", 1);
  return CalculatorContract()
      .AddInput("IN")
      .AddOutput("OUT", TypeSpec::SameAsInput("IN"))
      .SetTimestampOffsetZero();
}

// ---------------------------------------------------------------------------
// MockDetector
// ---------------------------------------------------------------------------

// Deterministic per-timestamp jitter in [-1, 1]; splitmix64-based.
double JitterHash(int64_t ts, int64_t channel) {
  uint64_t z = static_cast<uint64_t>(ts) * 0x9e3779b97f4a7c15ULL +
               static_cast<uint64_t>(channel) + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return static_cast<double>(z % 20001) / 10000.0 - 1.0;
}

class MockDetectorCalculator : public Calculator {
 public:
  void Open(CalculatorContext& cc) override {
    const Packet* model = cc.InputSidePacket("MODEL");
    if (model == nullptr) {
      throw FlowError(ErrorCode::kMissingSidePacket,
                      "MODEL side packet is required");
    }
    label_ = model->Get<std::string>();
  }

  void Process(CalculatorContext& cc) override {
    SleepOption(cc);
    const SyntheticFrame& frame = cc.Input("FRAME")->Get<SyntheticFrame>();
    const double size = cc.Options().GetDouble("box_size", 0.125);
    const double score = cc.Options().GetDouble("score", 0.875);
    const double jitter = cc.Options().GetDouble("jitter", 0.0);
    const int64_t ts = cc.InputTimestamp().value();
    Detections dets;
    for (size_t i = 0; i < frame.positions.size(); ++i) {
      const auto& [x, y] = frame.positions[i];
      Detection d;
      const double jx = jitter * JitterHash(ts, 2 * i);
      const double jy = jitter * JitterHash(ts, 2 * i + 1);
      d.box = {x - size / 2 + jx, y - size / 2 + jy, size, size};
      d.label = label_;
      d.score = score;
      dets.push_back(std::move(d));
    }
    cc.EmitValue<Detections>("DETECTIONS", std::move(dets));
  }

 private:
  std::string label_;
};

CalculatorContract MockDetectorContract(const NodeOptions&) {
  return CalculatorContract()
      .AddInput("FRAME", TypeSpec::Of<SyntheticFrame>())
      .AddInputSidePacket("MODEL", TypeSpec::Of<std::string>())
      .AddOutput("DETECTIONS", TypeSpec::Of<Detections>())
      .SetTimestampOffsetZero();
}

// ---------------------------------------------------------------------------
// MockTracker
// ---------------------------------------------------------------------------

// Advances the last-known detections to the current frame by the frames'
// known linear drift. The loopback input re-initializes the targets; with
// nothing to track yet, each frame produces an empty result immediately
// (the tracking branch must never wait on the slow branch).
class MockTrackerCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    if (const Packet* state = cc.Input("STATE")) {
      state_ = state->Get<Detections>();
      state_ts_ = state->timestamp().value();
    }
    if (const Packet* frame_packet = cc.Input("FRAME")) {
      const SyntheticFrame& frame = frame_packet->Get<SyntheticFrame>();
      const int64_t ts = frame_packet->timestamp().value();
      Detections tracked;
      if (state_.has_value()) {
        tracked = *state_;
        const double dt = static_cast<double>(ts - state_ts_);
        for (Detection& d : tracked) {
          d.box[0] += frame.drift_x * dt;
          d.box[1] += frame.drift_y * dt;
        }
      }
      cc.EmitValue<Detections>("TRACKED", std::move(tracked), Timestamp(ts));
    }
  }

 private:
  std::optional<Detections> state_;
  int64_t state_ts_ = 0;
};

CalculatorContract MockTrackerContract(const NodeOptions&) {
  return CalculatorContract()
      .AddInput("FRAME", TypeSpec::Of<SyntheticFrame>())
      .AddInput("STATE", TypeSpec::Of<Detections>(), /*optional=*/true)
      .AddOutput("TRACKED", TypeSpec::Of<Detections>())
      .SetInputPolicy(InputPolicySpec::Immediate());
}

// ---------------------------------------------------------------------------
// DetectionMerger
// ---------------------------------------------------------------------------

class DetectionMergerCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    const double threshold = cc.Options().GetDouble("iou_threshold", 0.5);
    Detections merged;
    if (const Packet* fresh = cc.Input("NEW")) {
      for (const Detection& d : fresh->Get<Detections>()) merged.push_back(d);
    }
    if (const Packet* tracked = cc.Input("TRACKED")) {
      for (const Detection& d : tracked->Get<Detections>()) {
        merged.push_back(d);
      }
    }
    cc.EmitValue<Detections>("MERGED", DedupDetections(merged, threshold));
  }
};

CalculatorContract DetectionMergerContract(const NodeOptions&) {
  return CalculatorContract()
      .AddInput("NEW", TypeSpec::Of<Detections>(), /*optional=*/true)
      .AddInput("TRACKED", TypeSpec::Of<Detections>())
      .AddOutput("MERGED", TypeSpec::Of<Detections>())
      .SetTimestampOffsetZero();
}

// ---------------------------------------------------------------------------
// Interpolator
// ---------------------------------------------------------------------------

// Re-times sparse samples onto the clock stream's timestamps via linear
// interpolation, holding the nearest sample at the sequence edges.
class InterpolatorCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    if (const Packet* s = cc.Input("SPARSE")) {
      samples_.push_back({s->timestamp().value(), s->Get<std::vector<double>>()});
    }
    if (const Packet* c = cc.Input("CLOCK")) {
      pending_.push_back(c->timestamp().value());
    }
    Drain(cc, cc.InputBound("SPARSE").IsDone());
  }

  void Close(CalculatorContext& cc) override { Drain(cc, true); }

 private:
  struct Sample {
    int64_t ts;
    std::vector<double> value;
  };

  void Drain(CalculatorContext& cc, bool sparse_closed) {
    while (!pending_.empty()) {
      const int64_t t = pending_.front();
      // Find the first sample at or after t.
      size_t after = 0;
      while (after < samples_.size() && samples_[after].ts < t) ++after;
      if (after < samples_.size()) {
        const Sample& hi = samples_[after];
        if (hi.ts == t || after == 0) {
          // Exact hit, or t precedes every sample: hold the nearest.
          cc.EmitValue<std::vector<double>>("DENSE", hi.value, Timestamp(t));
        } else {
          cc.EmitValue<std::vector<double>>(
              "DENSE", Lerp(samples_[after - 1], hi, t), Timestamp(t));
        }
      } else if (sparse_closed) {
        if (samples_.empty()) {
          pending_.pop_front();
          continue;  // no samples ever arrived: nothing to hold
        }
        cc.EmitValue<std::vector<double>>("DENSE", samples_.back().value,
                                          Timestamp(t));
      } else {
        break;  // undecidable until a bracketing sample arrives or closes
      }
      pending_.pop_front();
      // Samples older than every remaining clock can go, keeping the
      // left bracket. With no clock pending nothing is prunable: a future
      // clock may still fall before the current samples.
      while (samples_.size() > 1 && !pending_.empty() &&
             samples_[1].ts <= pending_.front()) {
        samples_.erase(samples_.begin());
      }
    }
  }

  static std::vector<double> Lerp(const Sample& lo, const Sample& hi,
                                  int64_t t) {
    if (lo.value.size() != hi.value.size()) {
      throw FlowError(ErrorCode::kTypeMismatch,
                      "interpolation samples have different lengths");
    }
    const double alpha = static_cast<double>(t - lo.ts) /
                         static_cast<double>(hi.ts - lo.ts);
    std::vector<double> out(lo.value.size());
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = lo.value[i] + (hi.value[i] - lo.value[i]) * alpha;
    }
    return out;
  }

  std::vector<Sample> samples_;
  std::deque<int64_t> pending_;
};

CalculatorContract InterpolatorContract(const NodeOptions&) {
  return CalculatorContract()
      .AddInput("SPARSE", TypeSpec::Of<std::vector<double>>())
      .AddInput("CLOCK")
      .AddOutput("DENSE", TypeSpec::Of<std::vector<double>>())
      .SetInputPolicy(InputPolicySpec::Grouped({{"SPARSE"}, {"CLOCK"}}));
}

// ---------------------------------------------------------------------------
// FlowLimiter
// ---------------------------------------------------------------------------

class FlowLimiterCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    const int64_t limit = cc.Options().GetInt("max_in_flight", 1);
    // A finished timestamp frees a slot before the same-call admission
    // decision.
    if (cc.Input("FINISHED") != nullptr) {
      if (in_flight_ > 0) --in_flight_;
    }
    if (const Packet* p = cc.Input("IN")) {
      if (in_flight_ < limit) {
        ++in_flight_;
        cc.Emit("OUT", *p);
      } else {
        cc.MarkInputDropped("IN");
      }
    }
  }

 private:
  int64_t in_flight_ = 0;
};

CalculatorContract FlowLimiterContract(const NodeOptions& options) {
  RequirePositive(options, "max_in_flight", 1);
  return CalculatorContract()
      .AddInput("IN")
      .AddInput("FINISHED", TypeSpec::Any(), /*optional=*/true)
      .AddOutput("OUT", TypeSpec::SameAsInput("IN"))
      .SetInputPolicy(InputPolicySpec::Immediate())
      .SetTimestampOffsetZero();
}

// ---------------------------------------------------------------------------
// ScriptedSource
// ---------------------------------------------------------------------------

class ScriptedSourceCalculator : public Calculator {
 public:
  void Open(CalculatorContext& cc) override {
    count_ = cc.Options().GetInt("count", 10);
    period_ = RequirePositive(cc.Options(), "period", 1);
    payload_ = cc.Options().GetString("payload", "i64");
    const uint64_t seed =
        static_cast<uint64_t>(cc.Options().GetInt("seed", 1));
    world_.emplace(seed, static_cast<int>(cc.Options().GetInt("objects", 1)));
    // Dyadic coefficients keep generated vectors linear and exact.
    vec_base_ = static_cast<double>(seed % 8) / 8.0;
    vec_slope_ = 1.0 / 64.0;
  }

  void Process(CalculatorContext& cc) override {
    if (next_ >= count_) {
      cc.CloseAllOutputs();
      return;
    }
    SleepOption(cc);
    const int64_t ts = next_ * period_;
    if (payload_ == "i64") {
      cc.EmitValue<int64_t>("OUT", next_, Timestamp(ts));
    } else if (payload_ == "f64") {
      cc.EmitValue<double>("OUT", static_cast<double>(ts) / 2.0,
                           Timestamp(ts));
    } else if (payload_ == "string") {
      cc.EmitValue<std::string>("OUT", "pkt" + std::to_string(next_),
                                Timestamp(ts));
    } else if (payload_ == "vector") {
      cc.EmitValue<std::vector<double>>(
          "OUT",
          {vec_base_ + vec_slope_ * static_cast<double>(ts),
           vec_base_ - vec_slope_ * static_cast<double>(ts)},
          Timestamp(ts));
    } else if (payload_ == "frame") {
      cc.EmitValue<SyntheticFrame>("OUT", world_->FrameAt(next_, ts),
                                   Timestamp(ts));
    } else {
      throw FlowError(ErrorCode::kInvalidOptions,
                      "unknown payload kind '" + payload_ + "'");
    }
    if (++next_ >= count_) cc.CloseAllOutputs();
  }

 private:
  int64_t count_ = 0;
  int64_t period_ = 1;
  int64_t next_ = 0;
  std::string payload_;
  std::optional<SyntheticWorld> world_;
  double vec_base_ = 0;
  double vec_slope_ = 0;
};

CalculatorContract ScriptedSourceContract(const NodeOptions& options) {
  RequirePositive(options, "period", 1);
  const int64_t count = options.GetInt("count", 10);
  if (count < 0) {
    throw FlowError(ErrorCode::kInvalidOptions, "count must be >= 0");
  }
  const std::string payload = options.GetString("payload", "i64");
  CalculatorContract contract;
  if (payload == "i64") {
    contract.AddOutput("OUT", TypeSpec::Of<int64_t>());
  } else if (payload == "f64") {
    contract.AddOutput("OUT", TypeSpec::Of<double>());
  } else if (payload == "string") {
    contract.AddOutput("OUT", TypeSpec::Of<std::string>());
  } else if (payload == "vector") {
    contract.AddOutput("OUT", TypeSpec::Of<std::vector<double>>());
  } else if (payload == "frame") {
    contract.AddOutput("OUT", TypeSpec::Of<SyntheticFrame>());
  } else {
    throw FlowError(ErrorCode::kInvalidOptions,
                    "unknown payload kind '" + payload + "'");
  }
  return contract;
}

// ---------------------------------------------------------------------------
// MockLandmarker
// ---------------------------------------------------------------------------

class MockLandmarkerCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    SleepOption(cc);
    const SyntheticFrame& frame = cc.Input("FRAME")->Get<SyntheticFrame>();
    std::vector<double> flat;
    for (const auto& [x, y] : frame.positions) {
      flat.push_back(x);
      flat.push_back(y);
    }
    cc.EmitValue<std::vector<double>>("LANDMARKS", std::move(flat));
  }
};

CalculatorContract MockLandmarkerContract(const NodeOptions&) {
  return CalculatorContract()
      .AddInput("FRAME", TypeSpec::Of<SyntheticFrame>())
      .AddOutput("LANDMARKS", TypeSpec::Of<std::vector<double>>())
      .SetTimestampOffsetZero();
}

// ---------------------------------------------------------------------------
// VectorJoin
// ---------------------------------------------------------------------------

class VectorJoinCalculator : public Calculator {
 public:
  void Process(CalculatorContext& cc) override {
    const int64_t n = cc.Options().GetInt("inputs", 2);
    std::vector<double> joined;
    for (int64_t i = 0; i < n; ++i) {
      if (const Packet* p = cc.Input("IN" + std::to_string(i))) {
        for (double v : p->Get<std::vector<double>>()) joined.push_back(v);
      }
    }
    cc.EmitValue<std::vector<double>>("OUT", std::move(joined));
  }
};

CalculatorContract VectorJoinContract(const NodeOptions& options) {
  const int64_t n = RequirePositive(options, "inputs", 2);
  CalculatorContract contract;
  for (int64_t i = 0; i < n; ++i) {
    contract.AddInput("IN" + std::to_string(i),
                      TypeSpec::Of<std::vector<double>>());
  }
  contract.AddOutput("OUT", TypeSpec::Of<std::vector<double>>());
  contract.SetTimestampOffsetZero();
  return contract;
}

// ---------------------------------------------------------------------------
// RecordingSink
// ---------------------------------------------------------------------------

struct MemorySinks {
  std::mutex mu;
  std::map<std::string, std::string> texts;

  static MemorySinks& Instance() {
    static MemorySinks* sinks = new MemorySinks();
    return *sinks;
  }
};

class RecordingSinkCalculator : public Calculator {
 public:
  void Open(CalculatorContext& cc) override {
    path_ = cc.Options().GetString("path", "");
    memory_key_ = cc.Options().GetString("memory_key", "");
    if (!path_.empty()) {
      file_.open(path_, std::ios::out | std::ios::trunc);
      if (!file_.good()) {
        throw FlowError(ErrorCode::kIoError, "cannot open '" + path_ + "'");
      }
    }
  }

  void Process(CalculatorContext& cc) override {
    SleepOption(cc);
    const Packet* p = cc.Input("IN");
    Append("ts=" + p->timestamp().ToString() + " " + p->ToLiteral() + "\n");
  }

  void Close(CalculatorContext&) override {
    if (file_.is_open()) file_.flush();
  }

 private:
  void Append(const std::string& line) {
    if (file_.is_open()) file_ << line;
    if (!memory_key_.empty()) {
      MemorySinks& sinks = MemorySinks::Instance();
      std::lock_guard<std::mutex> lock(sinks.mu);
      sinks.texts[memory_key_] += line;
    }
  }

  std::string path_;
  std::string memory_key_;
  std::ofstream file_;
};

CalculatorContract RecordingSinkContract(const NodeOptions&) {
  return CalculatorContract().AddInput("IN");
}

}  // namespace

std::string TakeRecordedText(const std::string& memory_key) {
  MemorySinks& sinks = MemorySinks::Instance();
  std::lock_guard<std::mutex> lock(sinks.mu);
  auto it = sinks.texts.find(memory_key);
  if (it == sinks.texts.end()) return "";
  std::string out = std::move(it->second);
  sinks.texts.erase(it);
  return out;
}

void RegisterStandardCalculators(CalculatorRegistry& registry) {
  RegisterBuiltinPayloadTypes();
  RegisterDetectionsPayloadType();
  RegisterSyntheticFramePayloadType();

  RegisterCalculator<PassThroughCalculator>(registry, "PassThrough",
                                            PassThroughContract);
  RegisterCalculator<RoundRobinDemuxCalculator>(registry, "RoundRobinDemux",
                                                RoundRobinDemuxContract);
  RegisterCalculator<MuxCalculator>(registry, "Mux", MuxContract);
  RegisterCalculator<FrameSelectorCalculator>(registry, "FrameSelector",
                                              FrameSelectorContract);
  RegisterCalculator<MockDetectorCalculator>(registry, "MockDetector",
                                             MockDetectorContract);
  RegisterCalculator<MockTrackerCalculator>(registry, "MockTracker",
                                            MockTrackerContract);
  RegisterCalculator<DetectionMergerCalculator>(registry, "DetectionMerger",
                                                DetectionMergerContract);
  RegisterCalculator<InterpolatorCalculator>(registry, "Interpolator",
                                             InterpolatorContract);
  RegisterCalculator<FlowLimiterCalculator>(registry, "FlowLimiter",
                                            FlowLimiterContract);
  RegisterCalculator<ScriptedSourceCalculator>(registry, "ScriptedSource",
                                               ScriptedSourceContract);
  RegisterCalculator<MockLandmarkerCalculator>(registry, "MockLandmarker",
                                               MockLandmarkerContract);
  RegisterCalculator<VectorJoinCalculator>(registry, "VectorJoin",
                                           VectorJoinContract);
  RegisterCalculator<RecordingSinkCalculator>(registry, "RecordingSink",
                                              RecordingSinkContract);
}

}  // namespace flowgraph

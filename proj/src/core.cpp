#include <atomic>
#include <charconv>
#include <map>
#include <mutex>
#include <sstream>
#include <vector>

#include "flowgraph/error.hpp"
#include "flowgraph/packet.hpp"
#include "flowgraph/payload.hpp"
#include "flowgraph/stream.hpp"

namespace flowgraph {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSentinelTimestamp: return "SentinelTimestamp";
    case ErrorCode::kNonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::kTypeMismatch: return "TypeMismatch";
    case ErrorCode::kBoundRegression: return "BoundRegression";
    case ErrorCode::kDuplicateName: return "DuplicateName";
    case ErrorCode::kNotRegistered: return "NotRegistered";
    case ErrorCode::kInvalidOptions: return "InvalidOptions";
    case ErrorCode::kSyntaxError: return "SyntaxError";
    case ErrorCode::kDuplicateKey: return "DuplicateKey";
    case ErrorCode::kMissingInterface: return "MissingInterface";
    case ErrorCode::kRecursiveSubgraph: return "RecursiveSubgraph";
    case ErrorCode::kMultipleProducers: return "MultipleProducers";
    case ErrorCode::kUnproducedInput: return "UnproducedInput";
    case ErrorCode::kContractViolation: return "ContractViolation";
    case ErrorCode::kUnknownCalculator: return "UnknownCalculator";
    case ErrorCode::kUnknownExecutor: return "UnknownExecutor";
    case ErrorCode::kCycleDetected: return "CycleDetected";
    case ErrorCode::kUnknownStream: return "UnknownStream";
    case ErrorCode::kGraphTerminated: return "GraphTerminated";
    case ErrorCode::kCollidingInputs: return "CollidingInputs";
    case ErrorCode::kMissingSidePacket: return "MissingSidePacket";
    case ErrorCode::kStartupError: return "StartupError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kMalformedTrace: return "MalformedTrace";
    case ErrorCode::kLineageBroken: return "LineageBroken";
    case ErrorCode::kStalled: return "Stalled";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

namespace detail {

uint64_t NextDataId() {
  static std::atomic<uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

namespace {

struct TypeRegistry {
  std::mutex mu;
  // type_index -> stable descriptor; descriptors never move once created.
  std::map<std::type_index, std::unique_ptr<PayloadTypeInfo>> by_type;
};

TypeRegistry& Registry() {
  static TypeRegistry* r = new TypeRegistry();
  return *r;
}

}  // namespace

PayloadTypeInfo* LookupOrCreateTypeInfo(std::type_index type,
                                        const char* fallback_name) {
  TypeRegistry& reg = Registry();
  std::lock_guard<std::mutex> lock(reg.mu);
  auto it = reg.by_type.find(type);
  if (it == reg.by_type.end()) {
    auto info = std::make_unique<PayloadTypeInfo>(
        PayloadTypeInfo{type, fallback_name, nullptr});
    it = reg.by_type.emplace(type, std::move(info)).first;
  }
  return it->second.get();
}

}  // namespace detail

PayloadTypeId FindPayloadTypeByName(std::string_view name) {
  auto& reg = detail::Registry();
  std::lock_guard<std::mutex> lock(reg.mu);
  for (const auto& [type, info] : reg.by_type) {
    if (info->name == name) return info.get();
  }
  return nullptr;
}

namespace {

std::string FormatDouble(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace

void RegisterBuiltinPayloadTypes() {
  static const bool done = [] {
    RegisterPayloadType<int64_t>(
        "i64", [](const int64_t& v) { return std::to_string(v); });
    RegisterPayloadType<double>(
        "f64", [](const double& v) { return FormatDouble(v); });
    RegisterPayloadType<std::string>(
        "string", [](const std::string& v) { return "\"" + v + "\""; });
    RegisterPayloadType<std::vector<double>>(
        "float_vector", [](const std::vector<double>& v) {
          std::string out = "[";
          for (size_t i = 0; i < v.size(); ++i) {
            if (i > 0) out += ",";
            out += FormatDouble(v[i]);
          }
          out += "]";
          return out;
        });
    return true;
  }();
  (void)done;
}

std::string Packet::ToLiteral() const {
  if (empty()) return "<empty>";
  if (type_->format) return type_->format(payload_.get());
  return "<" + type_->name + ">";
}

void InputQueue::Push(const Packet& p) {
  const Timestamp ts = p.timestamp();
  if (!ts.IsPacketLegal()) {
    throw FlowError(ErrorCode::kSentinelTimestamp,
                    "queued packet timestamp " + ts.ToString() +
                        " on stream " + stream_name_);
  }
  if (expected_type_ != nullptr && p.type() != expected_type_) {
    throw FlowError(ErrorCode::kTypeMismatch,
                    "stream " + stream_name_ + " expects " +
                        expected_type_->name + ", got " + p.type()->name);
  }
  if (ts < bound_) {
    throw FlowError(ErrorCode::kNonMonotonicTimestamp,
                    "packet at " + ts.ToString() + " below bound " +
                        bound_.ToString() + " on stream " + stream_name_);
  }
  if (!packets_.empty() && ts <= packets_.back().timestamp()) {
    throw FlowError(ErrorCode::kNonMonotonicTimestamp,
                    "packet at " + ts.ToString() + " does not ascend past " +
                        packets_.back().timestamp().ToString() +
                        " on stream " + stream_name_);
  }
  packets_.push_back(p);
}

void InputQueue::AdvanceBound(Timestamp b) {
  if (b < bound_) {
    throw FlowError(ErrorCode::kBoundRegression,
                    "bound " + b.ToString() + " below " + bound_.ToString() +
                        " on stream " + stream_name_);
  }
  bound_ = b;
}

void OutputPort::Emit(const Packet& p) {
  const Timestamp ts = p.timestamp();
  if (!ts.IsPacketLegal()) {
    throw FlowError(ErrorCode::kSentinelTimestamp,
                    "emit at " + ts.ToString() + " on stream " + stream_name_);
  }
  if (declared_type_ != nullptr && p.type() != declared_type_) {
    throw FlowError(ErrorCode::kTypeMismatch,
                    "stream " + stream_name_ + " carries " +
                        declared_type_->name + ", got " + p.type()->name);
  }
  if (closed()) {
    throw FlowError(ErrorCode::kNonMonotonicTimestamp,
                    "emit on closed stream " + stream_name_);
  }
  if (!last_emitted_.IsUnset() && ts <= last_emitted_) {
    throw FlowError(ErrorCode::kNonMonotonicTimestamp,
                    "emit at " + ts.ToString() +
                        " does not ascend past " + last_emitted_.ToString() +
                        " on stream " + stream_name_);
  }
  if (ts < bound_) {
    throw FlowError(ErrorCode::kNonMonotonicTimestamp,
                    "emit at " + ts.ToString() + " below bound " +
                        bound_.ToString() + " on stream " + stream_name_);
  }
  for (InputQueue* q : consumers_) {
    q->Push(p);
    q->AdvanceBound(ts.Successor());
  }
  last_emitted_ = ts;
  bound_ = ts.Successor();
}

void OutputPort::SetBound(Timestamp b) {
  if (b < bound_) {
    throw FlowError(ErrorCode::kBoundRegression,
                    "bound " + b.ToString() + " below " + bound_.ToString() +
                        " on stream " + stream_name_);
  }
  if (b == bound_) return;
  bound_ = b;
  for (InputQueue* q : consumers_) {
    q->AdvanceBound(b);
  }
}

}  // namespace flowgraph

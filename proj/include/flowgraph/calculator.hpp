#pragma once

#include <cstdint>
#include <string_view>

#include "flowgraph/contract.hpp"
#include "flowgraph/options.hpp"
#include "flowgraph/packet.hpp"

namespace flowgraph {

/// Per-run view a calculator gets during Open/Process/Close. The framework
/// serializes all lifecycle calls on one instance, so implementations may
/// keep mutable per-run state without locking.
///
/// During Close no inputs are available (Input() returns null) but side
/// packets remain accessible and outputs may still be written, at
/// timestamps above everything previously emitted.
class CalculatorContext {
 public:
  virtual ~CalculatorContext() = default;

  virtual const NodeOptions& Options() const = 0;
  virtual std::string_view NodeName() const = 0;
  /// Stable per-node value derived from the run seed.
  virtual uint64_t NodeSeed() const = 0;

  virtual const Packet* InputSidePacket(std::string_view tag) const = 0;
  /// Open only. Becomes visible to consumers when Open returns.
  virtual void SetOutputSidePacket(std::string_view tag, Packet p) = 0;

  /// Timestamp of the current input set; Unset for source Process calls
  /// and during Open/Close.
  virtual Timestamp InputTimestamp() const = 0;
  /// Packet for `tag` in the current input set, or null if the set has no
  /// packet for it (or outside Process).
  virtual const Packet* Input(std::string_view tag) const = 0;
  /// Current bound of an input stream. Done means closed.
  virtual Timestamp InputBound(std::string_view tag) const = 0;
  /// Declares that the current input packet on `tag` was discarded rather
  /// than processed; recorded as a drop in the trace.
  virtual void MarkInputDropped(std::string_view tag) = 0;

  virtual void Emit(std::string_view tag, Packet p) = 0;
  virtual void SetOutputBound(std::string_view tag, Timestamp bound) = 0;
  virtual void CloseOutput(std::string_view tag) = 0;
  /// Closes every output; for a source node this signals completion.
  virtual void CloseAllOutputs() = 0;

  // Convenience wrappers.
  template <typename T>
  void EmitValue(std::string_view tag, T value, Timestamp ts) {
    Emit(tag, MakePacket<T>(std::move(value), ts));
  }
  template <typename T>
  void EmitValue(std::string_view tag, T value) {
    EmitValue<T>(tag, std::move(value), InputTimestamp());
  }
};

/// A node implementation. The framework constructs one instance per node
/// per graph run and calls Open once, Process zero or more times, then
/// Close exactly once if Open succeeded. Any exception escaping a
/// lifecycle method terminates the run with an error.
class Calculator {
 public:
  virtual ~Calculator() = default;

  virtual void Open(CalculatorContext& cc) { (void)cc; }
  virtual void Process(CalculatorContext& cc) = 0;
  virtual void Close(CalculatorContext& cc) { (void)cc; }
};

}  // namespace flowgraph

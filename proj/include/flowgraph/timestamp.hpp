#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <string>

namespace flowgraph {

/// Logical time attached to packets and stream bounds. Plain signed ticks
/// with a total order; the bundled calculators treat one tick as one
/// microsecond but nothing in the framework depends on that.
///
/// Packet-legal values lie in [Min(), Max()]. Two sentinels live outside
/// that range: Unset() (below Min) for packets that have not been stamped
/// yet, and Done() (above Max) for closed-stream bounds. The legal range
/// leaves headroom so that the bound arithmetic `t + 1` never overflows.
class Timestamp {
 public:
  constexpr Timestamp() : value_(kUnsetValue) {}
  constexpr explicit Timestamp(int64_t value) : value_(value) {}

  static constexpr Timestamp Min() { return Timestamp(kMinValue); }
  static constexpr Timestamp Max() { return Timestamp(kMaxValue); }
  static constexpr Timestamp Unset() { return Timestamp(kUnsetValue); }
  static constexpr Timestamp Done() { return Timestamp(kDoneValue); }

  constexpr int64_t value() const { return value_; }

  constexpr bool IsUnset() const { return value_ == kUnsetValue; }
  constexpr bool IsDone() const { return value_ == kDoneValue; }
  constexpr bool IsSentinel() const { return IsUnset() || IsDone(); }
  constexpr bool IsPacketLegal() const {
    return value_ >= kMinValue && value_ <= kMaxValue;
  }

  /// value() + 1; the bound implied by a packet at this timestamp.
  /// Only meaningful for packet-legal values.
  constexpr Timestamp Successor() const { return Timestamp(value_ + 1); }

  friend constexpr auto operator<=>(Timestamp a, Timestamp b) = default;

  std::string ToString() const {
    if (IsUnset()) return "UNSET";
    if (IsDone()) return "DONE";
    return std::to_string(value_);
  }

 private:
  static constexpr int64_t kUnsetValue = std::numeric_limits<int64_t>::min();
  static constexpr int64_t kDoneValue = std::numeric_limits<int64_t>::max();
  static constexpr int64_t kMinValue = -(int64_t{1} << 62);
  static constexpr int64_t kMaxValue = int64_t{1} << 62;

  int64_t value_;
};

}  // namespace flowgraph

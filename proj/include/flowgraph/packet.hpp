#pragma once

#include <cstdint>
#include <memory>
#include <utility>

#include "flowgraph/error.hpp"
#include "flowgraph/payload.hpp"
#include "flowgraph/timestamp.hpp"

namespace flowgraph {

namespace detail {
uint64_t NextDataId();
}

/// The unit of data flowing on streams: a timestamp plus a shared,
/// immutable, type-erased payload. Packets are value objects and cheap to
/// copy; every copy shares the payload and its data id, while each copy
/// carries its own timestamp.
///
/// A default-constructed packet is empty. A packet built with Of() has an
/// unset timestamp (the side-packet form); At() produces a re-stamped
/// copy. Stream-level ordering is enforced by output ports, not here:
/// re-stamping a loose packet backwards is legal.
class Packet {
 public:
  Packet() = default;

  template <typename T>
  static Packet Of(T value) {
    Packet p;
    p.payload_ = std::make_shared<const T>(std::move(value));
    p.type_ = PayloadTypeOf<T>();
    p.data_id_ = detail::NextDataId();
    return p;
  }

  /// Copy of this packet at a new timestamp. Same payload, same data id.
  Packet At(Timestamp ts) const {
    if (ts.IsSentinel()) {
      throw FlowError(ErrorCode::kSentinelTimestamp,
                      "packet timestamp may not be " + ts.ToString());
    }
    Packet p = *this;
    p.timestamp_ = ts;
    return p;
  }

  template <typename T>
  bool Holds() const {
    return type_ == PayloadTypeOf<T>();
  }

  template <typename T>
  const T& Get() const {
    if (empty()) {
      throw FlowError(ErrorCode::kTypeMismatch, "Get() on empty packet");
    }
    if (!Holds<T>()) {
      throw FlowError(ErrorCode::kTypeMismatch,
                      "packet holds " + std::string(type_->name) +
                          ", requested " +
                          std::string(PayloadTypeOf<T>()->name));
    }
    return *static_cast<const T*>(payload_.get());
  }

  bool empty() const { return payload_ == nullptr; }
  Timestamp timestamp() const { return timestamp_; }
  uint64_t data_id() const { return data_id_; }
  PayloadTypeId type() const { return type_; }

  /// Payload rendered with the registered formatter, or a fallback tag.
  std::string ToLiteral() const;

 private:
  std::shared_ptr<const void> payload_;
  PayloadTypeId type_ = nullptr;
  Timestamp timestamp_ = Timestamp::Unset();
  uint64_t data_id_ = 0;
};

/// Packet carrying `value` at `ts`. Fresh data id; ts must be packet-legal.
template <typename T>
Packet MakePacket(T value, Timestamp ts) {
  return Packet::Of(std::move(value)).At(ts);
}

}  // namespace flowgraph

#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "flowgraph/packet.hpp"

namespace flowgraph {

/// Per-consumer FIFO of packets in strictly ascending timestamp order,
/// together with the stream's timestamp bound as seen by that consumer.
///
/// Queues are passive: the graph engine (or an output port in unit tests)
/// mutates them under its own synchronization. The queue-limit fields are
/// bookkeeping for the engine's throttling; Push itself never blocks.
class InputQueue {
 public:
  InputQueue(int stream_id, int consumer_node, std::string stream_name,
             PayloadTypeId expected_type = nullptr, int max_queue_size = 0)
      : stream_id_(stream_id),
        consumer_node_(consumer_node),
        stream_name_(std::move(stream_name)),
        expected_type_(expected_type),
        original_limit_(max_queue_size),
        effective_limit_(max_queue_size) {}

  /// Accepts a packet. Timestamps must strictly ascend and respect the
  /// current bound. The bound itself is advanced by the producing port
  /// (to at least ts + 1) as part of the same delivery, so a queued
  /// packet is at or above the bound only transiently inside a delivery.
  void Push(const Packet& p);

  /// Advances the bound; Timestamp::Done() closes the stream.
  void AdvanceBound(Timestamp b);

  /// Front packet timestamp if it is settled (strictly below the bound).
  std::optional<Timestamp> SettledFrontTimestamp() const {
    if (packets_.empty()) return std::nullopt;
    if (packets_.front().timestamp() < bound_) {
      return packets_.front().timestamp();
    }
    return std::nullopt;
  }

  Packet PopFront() {
    Packet p = packets_.front();
    packets_.pop_front();
    return p;
  }

  bool empty() const { return packets_.empty(); }
  size_t size() const { return packets_.size(); }
  const Packet& front() const { return packets_.front(); }
  Timestamp bound() const { return bound_; }
  bool closed() const { return bound_ == Timestamp::Done(); }
  bool done_and_empty() const { return closed() && packets_.empty(); }

  int stream_id() const { return stream_id_; }
  int consumer_node() const { return consumer_node_; }
  const std::string& stream_name() const { return stream_name_; }
  PayloadTypeId expected_type() const { return expected_type_; }

  // Throttling bookkeeping (0 = unbounded).
  int original_limit() const { return original_limit_; }
  int effective_limit() const { return effective_limit_; }
  void set_effective_limit(int limit) { effective_limit_ = limit; }
  bool AtOrOverLimit() const {
    return effective_limit_ > 0 &&
           static_cast<int>(packets_.size()) >= effective_limit_;
  }

 private:
  int stream_id_;
  int consumer_node_;
  std::string stream_name_;
  PayloadTypeId expected_type_;
  int original_limit_;
  int effective_limit_;
  std::deque<Packet> packets_;
  Timestamp bound_ = Timestamp::Min();
};

/// Producer side of a stream. Fan-out: every connected consumer queue
/// receives its own copy of each packet and every bound update, in the
/// same order. Emitted timestamps strictly increase per port.
class OutputPort {
 public:
  OutputPort(int stream_id, std::string stream_name,
             PayloadTypeId declared_type = nullptr)
      : stream_id_(stream_id),
        stream_name_(std::move(stream_name)),
        declared_type_(declared_type) {}

  void Connect(InputQueue* queue) { consumers_.push_back(queue); }

  /// Delivers a copy of `p` to every consumer queue and advances the bound
  /// to p.timestamp + 1. Requires a strictly larger timestamp than any
  /// previous emission and at least the current bound.
  void Emit(const Packet& p);

  /// Explicitly advances the bound (never backwards); Done closes the
  /// stream for all consumers.
  void SetBound(Timestamp b);

  /// SetBound that ignores non-advancing values instead of erroring.
  /// Used for automatic timestamp-offset propagation.
  bool SetBoundIfGreater(Timestamp b) {
    if (b <= bound_) return false;
    SetBound(b);
    return true;
  }

  int stream_id() const { return stream_id_; }
  const std::string& stream_name() const { return stream_name_; }
  PayloadTypeId declared_type() const { return declared_type_; }
  void set_declared_type(PayloadTypeId t) { declared_type_ = t; }
  Timestamp bound() const { return bound_; }
  Timestamp last_emitted() const { return last_emitted_; }
  bool closed() const { return bound_ == Timestamp::Done(); }
  const std::vector<InputQueue*>& consumers() const { return consumers_; }

 private:
  int stream_id_;
  std::string stream_name_;
  PayloadTypeId declared_type_;
  std::vector<InputQueue*> consumers_;
  Timestamp last_emitted_ = Timestamp::Unset();
  Timestamp bound_ = Timestamp::Min();
};

}  // namespace flowgraph

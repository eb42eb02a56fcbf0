#pragma once

#include <atomic>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "flowgraph/timestamp.hpp"

// Defining FLOWGRAPH_DISABLE_TRACING removes the recording path entirely:
// Record() compiles to nothing and buffers hold no storage.

namespace flowgraph {

enum class TraceEventType : uint8_t {
  kProcessStart,
  kProcessFinish,
  kOpenStart,
  kOpenFinish,
  kCloseStart,
  kCloseFinish,
  kPacketEmitted,
  kPacketQueued,
  kPacketConsumed,
  kPacketDropped,
  kBoundAdvanced,
  kNodeReady,
  kThrottled,
  kUnthrottled,
  kDeadlockRelaxation,
};

std::string_view TraceEventTypeName(TraceEventType type);

/// One timing record: enough to follow a packet's flow and every node's
/// execution across the graph.
struct TraceEvent {
  int64_t event_time_ns = 0;  // monotonic, relative to the buffer epoch
  TraceEventType type = TraceEventType::kProcessStart;
  int64_t packet_timestamp = Timestamp::Unset().value();
  uint64_t packet_data_id = 0;
  int32_t node_id = -1;
  int32_t stream_id = 0;  // 0 = none
};

/// Fixed-capacity circular buffer of TraceEvents, sharded so that each
/// worker records into its own ring: recording never blocks one worker on
/// another. When a shard is full its oldest events are overwritten and the
/// drop counter advances. Snapshot may run concurrently with recording; a
/// per-slot sequence lock keeps torn reads out of the merged view.
class TraceBuffer {
 public:
  static constexpr size_t kDefaultShardCapacity = 64 * 1024;

  /// `shards` concurrent recorders; shard 0 is conventionally the
  /// application/external shard. Disabled buffers record nothing.
  explicit TraceBuffer(int shards, size_t shard_capacity = kDefaultShardCapacity,
                       bool enabled = true)
      : epoch_(std::chrono::steady_clock::now()) {
#ifdef FLOWGRAPH_DISABLE_TRACING
    (void)shards;
    (void)shard_capacity;
    (void)enabled;
#else
    enabled_ = enabled;
    if (enabled_) {
      capacity_ = std::max<size_t>(1, shard_capacity);
      shards_.reserve(static_cast<size_t>(std::max(1, shards)));
      for (int i = 0; i < std::max(1, shards); ++i) {
        shards_.push_back(std::make_unique<Shard>(capacity_));
      }
    }
#endif
  }

  bool enabled() const {
#ifdef FLOWGRAPH_DISABLE_TRACING
    return false;
#else
    return enabled_;
#endif
  }

  int64_t NowNs() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - epoch_)
        .count();
  }

  /// Stores the event in the given shard, stamping event_time_ns if zero.
  /// Wait-free with respect to recorders on other shards.
  void Record(int shard, TraceEvent event) {
#ifdef FLOWGRAPH_DISABLE_TRACING
    (void)shard;
    (void)event;
#else
    if (!enabled_) return;
    if (event.event_time_ns == 0) event.event_time_ns = NowNs();
    Shard& s = *shards_[static_cast<size_t>(shard) % shards_.size()];
    const uint64_t index = s.head.load(std::memory_order_relaxed);
    Slot& slot = s.slots[index % capacity_];
    slot.seq.store(2 * index + 1, std::memory_order_release);  // odd: writing
    slot.event = event;
    slot.seq.store(2 * index + 2, std::memory_order_release);  // even: stable
    s.head.store(index + 1, std::memory_order_release);
#endif
  }

  /// Merged, time-ordered copy of everything currently readable. Safe to
  /// call while recording continues; each shard contributes a consistent
  /// prefix of its recent history.
  std::vector<TraceEvent> Snapshot() const {
    std::vector<TraceEvent> out;
#ifndef FLOWGRAPH_DISABLE_TRACING
    for (const auto& shard : shards_) {
      const uint64_t head = shard->head.load(std::memory_order_acquire);
      const uint64_t begin = head > capacity_ ? head - capacity_ : 0;
      for (uint64_t i = begin; i < head; ++i) {
        const Slot& slot = shard->slots[i % capacity_];
        const uint64_t seq_before = slot.seq.load(std::memory_order_acquire);
        if (seq_before != 2 * i + 2) continue;  // overwritten or in flight
        TraceEvent event = slot.event;
        std::atomic_thread_fence(std::memory_order_acquire);
        if (slot.seq.load(std::memory_order_relaxed) != seq_before) continue;
        out.push_back(event);
      }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const TraceEvent& a, const TraceEvent& b) {
                       return a.event_time_ns < b.event_time_ns;
                     });
#endif
    return out;
  }

  /// Number of events lost to ring overwrites, across all shards.
  uint64_t DroppedCount() const {
    uint64_t dropped = 0;
#ifndef FLOWGRAPH_DISABLE_TRACING
    for (const auto& shard : shards_) {
      const uint64_t head = shard->head.load(std::memory_order_acquire);
      if (head > capacity_) dropped += head - capacity_;
    }
#endif
    return dropped;
  }

  int shard_count() const {
#ifdef FLOWGRAPH_DISABLE_TRACING
    return 0;
#else
    return static_cast<int>(shards_.size());
#endif
  }

 private:
#ifndef FLOWGRAPH_DISABLE_TRACING
  struct Slot {
    std::atomic<uint64_t> seq{0};
    TraceEvent event;
  };
  struct Shard {
    explicit Shard(size_t capacity) : slots(capacity) {}
    std::atomic<uint64_t> head{0};
    std::vector<Slot> slots;
  };

  bool enabled_ = false;
  size_t capacity_ = 0;
  std::vector<std::unique_ptr<Shard>> shards_;
#endif
  std::chrono::steady_clock::time_point epoch_;
};

}  // namespace flowgraph

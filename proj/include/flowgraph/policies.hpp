#pragma once

#include <optional>
#include <vector>

#include "flowgraph/packet.hpp"
#include "flowgraph/stream.hpp"

namespace flowgraph {

/// The packets delivered jointly to a node for one timestamp. Entries are
/// indexed by the node's contract input slots; absent slots hold nullopt.
/// At least one entry is present in any set produced by a policy.
struct InputSet {
  Timestamp timestamp;
  std::vector<std::optional<Packet>> entries;
  int group = -1;  // grouped policy: index of the group that fired

  int PresentCount() const {
    int n = 0;
    for (const auto& e : entries) {
      if (e.has_value()) ++n;
    }
    return n;
  }
};

/// Queues a policy evaluates; null entries stand for unconnected optional
/// inputs and are ignored.
using QueueGroup = std::vector<InputQueue*>;

/// Default policy: ready at the smallest timestamp that is settled across
/// all input streams and has a packet on at least one. Pops and returns
/// that set, or nullopt. Successive sets strictly ascend in timestamp.
std::optional<InputSet> DefaultReady(const QueueGroup& queues);

/// Immediate policy: if any queue holds a packet, pops the packets at the
/// globally smallest front timestamp, ignoring bounds. No cross-stream
/// waiting; timestamps are not guaranteed to ascend across streams.
std::optional<InputSet> ImmediateReady(const QueueGroup& queues);

/// Grouped policy: DefaultReady applied independently per group (groups
/// are lists of slot indices into `queues`); among ready groups the one
/// with the lowest timestamp fires first.
std::optional<InputSet> GroupedReady(
    const QueueGroup& queues, const std::vector<std::vector<int>>& groups);

/// True when a set would be available without popping it.
bool DefaultHasReady(const QueueGroup& queues);
bool ImmediateHasReady(const QueueGroup& queues);
bool GroupedHasReady(const QueueGroup& queues,
                     const std::vector<std::vector<int>>& groups);

}  // namespace flowgraph

#include "flowgraph/policies.hpp"

#include <algorithm>

namespace flowgraph {

namespace {

/// Smallest settled-with-packet timestamp per the default policy over a
/// subset of slots, or nullopt.
std::optional<Timestamp> DefaultReadyTimestamp(const QueueGroup& queues,
                                               const std::vector<int>* slots) {
  Timestamp min_bound = Timestamp::Done();
  std::optional<Timestamp> min_front;
  auto visit = [&](const InputQueue* q) {
    if (q == nullptr) return;
    min_bound = std::min(min_bound, q->bound());
    if (!q->empty()) {
      Timestamp front = q->front().timestamp();
      if (!min_front || front < *min_front) min_front = front;
    }
  };
  if (slots == nullptr) {
    for (const InputQueue* q : queues) visit(q);
  } else {
    for (int slot : *slots) visit(queues[slot]);
  }
  if (min_front && *min_front < min_bound) return min_front;
  return std::nullopt;
}

InputSet PopAtTimestamp(const QueueGroup& queues,
                        const std::vector<int>* slots, Timestamp ts) {
  InputSet set;
  set.timestamp = ts;
  set.entries.resize(queues.size());
  auto pop = [&](size_t slot) {
    InputQueue* q = queues[slot];
    if (q != nullptr && !q->empty() && q->front().timestamp() == ts) {
      set.entries[slot] = q->PopFront();
    }
  };
  if (slots == nullptr) {
    for (size_t slot = 0; slot < queues.size(); ++slot) pop(slot);
  } else {
    for (int slot : *slots) pop(static_cast<size_t>(slot));
  }
  return set;
}

}  // namespace

std::optional<InputSet> DefaultReady(const QueueGroup& queues) {
  auto ts = DefaultReadyTimestamp(queues, nullptr);
  if (!ts) return std::nullopt;
  return PopAtTimestamp(queues, nullptr, *ts);
}

bool DefaultHasReady(const QueueGroup& queues) {
  return DefaultReadyTimestamp(queues, nullptr).has_value();
}

std::optional<InputSet> ImmediateReady(const QueueGroup& queues) {
  std::optional<Timestamp> min_front;
  for (const InputQueue* q : queues) {
    if (q == nullptr || q->empty()) continue;
    Timestamp front = q->front().timestamp();
    if (!min_front || front < *min_front) min_front = front;
  }
  if (!min_front) return std::nullopt;
  return PopAtTimestamp(queues, nullptr, *min_front);
}

bool ImmediateHasReady(const QueueGroup& queues) {
  for (const InputQueue* q : queues) {
    if (q != nullptr && !q->empty()) return true;
  }
  return false;
}

std::optional<InputSet> GroupedReady(
    const QueueGroup& queues, const std::vector<std::vector<int>>& groups) {
  int best_group = -1;
  std::optional<Timestamp> best_ts;
  for (size_t g = 0; g < groups.size(); ++g) {
    auto ts = DefaultReadyTimestamp(queues, &groups[g]);
    if (ts && (!best_ts || *ts < *best_ts)) {
      best_ts = ts;
      best_group = static_cast<int>(g);
    }
  }
  if (!best_ts) return std::nullopt;
  InputSet set = PopAtTimestamp(queues, &groups[best_group], *best_ts);
  set.group = best_group;
  return set;
}

bool GroupedHasReady(const QueueGroup& queues,
                     const std::vector<std::vector<int>>& groups) {
  for (const auto& group : groups) {
    if (DefaultReadyTimestamp(queues, &group).has_value()) return true;
  }
  return false;
}

}  // namespace flowgraph

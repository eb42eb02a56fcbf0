#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowgraph/config_ast.hpp"
#include "flowgraph/contract.hpp"
#include "flowgraph/error.hpp"
#include "flowgraph/registry.hpp"

namespace flowgraph {

/// A node's connection to a stream, in contract-slot order. stream_id is
/// -1 for an unconnected optional slot.
struct ResolvedSlot {
  std::string tag;
  int stream_id = -1;
  bool back_edge = false;
};

/// Side-packet binding: contract tag -> side packet table index (-1 when
/// an optional side input is unbound).
struct ResolvedSidePacket {
  std::string tag;
  int side_id = -1;
};

struct ValidatedNode {
  int id = 0;
  std::string name;  // unique display name for diagnostics and traces
  NodeConfig config;
  CalculatorContract contract;
  std::vector<ResolvedSlot> inputs;
  std::vector<ResolvedSlot> outputs;
  std::vector<ResolvedSidePacket> side_inputs;
  std::vector<ResolvedSidePacket> side_outputs;
  InputPolicySpec policy;
  bool timestamp_offset_zero = false;
  bool is_source = false;  // no input streams
  int priority = 0;
  int executor_id = 0;
  int max_queue_size = -1;  // override for this node's input queues
};

struct StreamConsumer {
  int node = 0;
  int slot = 0;
  bool back_edge = false;
};

struct ValidatedStream {
  int id = 0;
  std::string name;
  PayloadTypeId type = nullptr;  // nullptr = unresolved / any
  int producer_node = -1;        // -1 = graph input stream
  int producer_slot = -1;
  std::vector<StreamConsumer> consumers;
};

struct ValidatedSidePacket {
  int id = 0;
  std::string name;
  PayloadTypeId type = nullptr;
  int producer_node = -1;  // -1 = supplied by the application
  std::vector<int> consumer_nodes;
};

/// Flattened, validated topology ready to run: one producer per stream,
/// types resolved, contracts satisfied, priorities and executors assigned.
struct ValidatedGraph {
  std::vector<ValidatedNode> nodes;
  std::vector<ValidatedStream> streams;
  std::map<std::string, int> stream_ids;
  std::vector<ValidatedSidePacket> side_packets;
  std::map<std::string, int> side_packet_ids;
  std::vector<ExecutorConfig> executors;  // [0] is the default executor
  std::vector<int> graph_input_streams;   // stream ids with no node producer
  std::vector<int> graph_output_streams;
  int default_max_queue_size = 100;
  int num_threads = 0;
  bool trace_enabled = false;
  std::vector<std::string> warnings;

  const ValidatedStream* FindStream(const std::string& name) const {
    auto it = stream_ids.find(name);
    return it == stream_ids.end() ? nullptr : &streams[it->second];
  }
};

struct ValidationIssue {
  ErrorCode code;
  std::string message;
};

/// Carries every violation found, not just the first.
class ValidationError : public FlowError {
 public:
  explicit ValidationError(std::vector<ValidationIssue> issues)
      : FlowError(issues.empty() ? ErrorCode::kInternal : issues.front().code,
                  Join(issues)),
        issues_(std::move(issues)) {}

  const std::vector<ValidationIssue>& issues() const { return issues_; }

  bool HasCode(ErrorCode code) const {
    for (const auto& issue : issues_) {
      if (issue.code == code) return true;
    }
    return false;
  }

 private:
  static std::string Join(const std::vector<ValidationIssue>& issues);
  std::vector<ValidationIssue> issues_;
};

/// Validates a flat (subgraph-free) config against the registry. Checks
/// producer uniqueness, type compatibility and contract conformance;
/// computes priorities and executor assignments. Dangling outputs are
/// warnings, not errors.
ValidatedGraph Validate(const GraphConfigAst& ast,
                        const CalculatorRegistry& registry);

/// Longest-downstream-path priorities over the non-back-edge stream
/// topology: edges[u] lists successor node indices of u. Every edge u->v
/// satisfies priority[v] > priority[u]; source nodes (per `is_source`)
/// all share the minimum. Throws CycleDetected.
std::vector<int> AssignPriorities(int node_count,
                                  const std::vector<std::vector<int>>& edges,
                                  const std::vector<bool>& is_source);

}  // namespace flowgraph

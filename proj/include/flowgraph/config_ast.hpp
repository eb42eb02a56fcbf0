#pragma once

#include <string>
#include <vector>

#include "flowgraph/options.hpp"

namespace flowgraph {

/// One "TAG:name" or "name" entry from a stream list. An empty tag means
/// the entry was untagged; implicit tags (IN0.., OUT0..) are assigned
/// during validation/expansion, not by the parser.
struct StreamRef {
  std::string tag;
  std::string name;

  bool operator==(const StreamRef&) const = default;
};

struct ExecutorConfig {
  std::string name;
  int num_workers = 0;  // 0 = based on machine parallelism

  bool operator==(const ExecutorConfig&) const = default;
};

struct NodeConfig {
  std::string calculator;
  std::vector<StreamRef> input_streams;
  std::vector<StreamRef> output_streams;
  std::vector<StreamRef> input_side_packets;
  std::vector<StreamRef> output_side_packets;
  std::string executor;                 // "" = default executor
  std::vector<std::string> back_edges;  // input tags excluded from topo sort
  int max_queue_size = -1;              // -1 = inherit graph default
  NodeOptions options;

  bool operator==(const NodeConfig&) const = default;
};

/// Parsed graph-configuration file. `type` names this file as a reusable
/// subgraph; top-level graphs leave it empty.
struct GraphConfigAst {
  std::string type;
  std::vector<StreamRef> input_streams;
  std::vector<StreamRef> output_streams;
  std::vector<StreamRef> input_side_packets;
  std::vector<ExecutorConfig> executors;
  int num_threads = 0;      // 0 = machine parallelism
  int max_queue_size = 100; // default per-stream limit; 0 = unbounded
  bool trace_enabled = false;
  std::vector<NodeConfig> nodes;

  bool operator==(const GraphConfigAst&) const = default;
};

/// Canonical text form; Parse(Serialize(ast)) is structurally equal to ast.
std::string Serialize(const GraphConfigAst& ast);

/// Parses the graph-configuration language. Throws FlowError with
/// SyntaxError/DuplicateKey codes; messages carry line:column positions.
GraphConfigAst Parse(std::string_view text);

/// Structured position info for parse failures.
class ParseError : public FlowError {
 public:
  ParseError(int line, int col, const std::string& message)
      : FlowError(ErrorCode::kSyntaxError,
                  std::to_string(line) + ":" + std::to_string(col) + ": " +
                      message),
        line_(line),
        col_(col) {}

  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

}  // namespace flowgraph

#include "flowgraph/subgraph.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "flowgraph/error.hpp"

namespace flowgraph {

namespace {

std::string Lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Binds caller entries to interface declarations: tagged entries match
/// interface tags, untagged entries fill the remaining declarations
/// positionally. Returns inner-name -> outer-name.
void BindInterface(const std::string& subgraph,
                   const std::vector<StreamRef>& caller,
                   const std::vector<StreamRef>& interface,
                   const char* what,
                   std::map<std::string, std::string>& renames) {
  if (caller.size() != interface.size()) {
    throw FlowError(ErrorCode::kContractViolation,
                    "subgraph '" + subgraph + "' declares " +
                        std::to_string(interface.size()) + " " + what +
                        "(s), caller binds " + std::to_string(caller.size()));
  }
  std::vector<bool> bound(interface.size(), false);
  std::vector<const StreamRef*> untagged;
  for (const auto& ref : caller) {
    if (ref.tag.empty()) {
      untagged.push_back(&ref);
      continue;
    }
    bool found = false;
    for (size_t i = 0; i < interface.size(); ++i) {
      if (interface[i].tag == ref.tag) {
        if (bound[i]) {
          throw FlowError(ErrorCode::kContractViolation,
                          "subgraph '" + subgraph + "' " + what + " tag '" +
                              ref.tag + "' bound twice");
        }
        bound[i] = true;
        renames[interface[i].name] = ref.name;
        found = true;
        break;
      }
    }
    if (!found) {
      throw FlowError(ErrorCode::kContractViolation,
                      "subgraph '" + subgraph + "' has no " + what +
                          " tagged '" + ref.tag + "'");
    }
  }
  size_t next = 0;
  for (const StreamRef* ref : untagged) {
    while (next < interface.size() && bound[next]) ++next;
    if (next == interface.size()) break;  // arity already checked
    bound[next] = true;
    renames[interface[next].name] = ref->name;
  }
}

struct Expander {
  const SubgraphRegistry& subgraphs;

  void ExpandNodes(const std::vector<NodeConfig>& nodes,
                   const std::string& path_prefix,
                   const std::map<std::string, std::string>& renames,
                   std::set<std::string>& active,
                   std::vector<NodeConfig>& out) {
    std::map<std::string, int> instance_counts;
    for (const NodeConfig& node : nodes) {
      const GraphConfigAst* sub = subgraphs.Find(node.calculator);
      if (sub == nullptr) {
        out.push_back(Renamed(node, path_prefix, renames));
        continue;
      }
      if (active.count(node.calculator) > 0) {
        throw FlowError(ErrorCode::kRecursiveSubgraph,
                        "subgraph '" + node.calculator +
                            "' expands into itself");
      }
      const std::string instance =
          Lower(node.calculator) +
          std::to_string(++instance_counts[node.calculator]);
      const std::string inner_path =
          path_prefix.empty() ? instance : path_prefix + "__" + instance;

      // The subgraph node's own refs are outer names: resolve them through
      // the enclosing rename map first, then bind to the inner interface.
      NodeConfig caller = Renamed(node, path_prefix, renames);
      std::map<std::string, std::string> inner_renames;
      BindInterface(node.calculator, caller.input_streams, sub->input_streams,
                    "input stream", inner_renames);
      BindInterface(node.calculator, caller.output_streams,
                    sub->output_streams, "output stream", inner_renames);
      BindInterface(node.calculator, caller.input_side_packets,
                    sub->input_side_packets, "input side packet",
                    inner_renames);

      active.insert(node.calculator);
      std::vector<NodeConfig> inner_nodes;
      ExpandNodes(sub->nodes, inner_path, inner_renames, active, inner_nodes);
      active.erase(node.calculator);

      for (NodeConfig& inner : inner_nodes) {
        // The caller may pin the whole subgraph to an executor; inner
        // nodes without an explicit assignment inherit it.
        if (inner.executor.empty()) inner.executor = node.executor;
        out.push_back(std::move(inner));
      }
    }
  }

  NodeConfig Renamed(const NodeConfig& node, const std::string& path,
                     const std::map<std::string, std::string>& renames) {
    NodeConfig out = node;
    for (auto* refs : {&out.input_streams, &out.output_streams,
                       &out.input_side_packets, &out.output_side_packets}) {
      for (StreamRef& ref : *refs) {
        auto it = renames.find(ref.name);
        if (it != renames.end()) {
          ref.name = it->second;
        } else if (!path.empty()) {
          ref.name = path + "__" + ref.name;
        }
      }
    }
    return out;
  }
};

}  // namespace

void SubgraphRegistry::Register(const GraphConfigAst& ast,
                                const CalculatorRegistry& calculators) {
  if (ast.type.empty()) {
    throw FlowError(ErrorCode::kMissingInterface,
                    "subgraph file must declare a type name");
  }
  if (ast.output_streams.empty()) {
    throw FlowError(ErrorCode::kMissingInterface,
                    "subgraph '" + ast.type +
                        "' declares no output streams");
  }
  if (!ast.executors.empty() || ast.num_threads != 0 || ast.trace_enabled) {
    throw FlowError(ErrorCode::kInvalidOptions,
                    "subgraph '" + ast.type +
                        "' may not carry graph-level settings");
  }
  if (calculators.Contains(ast.type)) {
    throw FlowError(ErrorCode::kDuplicateName,
                    "subgraph '" + ast.type +
                        "' collides with a registered calculator");
  }
  if (!subgraphs_.emplace(ast.type, ast).second) {
    throw FlowError(ErrorCode::kDuplicateName,
                    "subgraph '" + ast.type + "' already registered");
  }
}

GraphConfigAst ExpandSubgraphs(const GraphConfigAst& ast,
                               const SubgraphRegistry& subgraphs) {
  GraphConfigAst flat = ast;
  flat.nodes.clear();
  std::set<std::string> active;
  Expander expander{subgraphs};
  expander.ExpandNodes(ast.nodes, "", {}, active, flat.nodes);
  return flat;
}

}  // namespace flowgraph

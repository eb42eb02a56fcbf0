#pragma once

#include <map>
#include <string>

#include "flowgraph/config_ast.hpp"
#include "flowgraph/registry.hpp"

namespace flowgraph {

/// Reusable graph fragments exposed as pseudo-calculators. A registered
/// subgraph's name can appear as a node's `calculator:`; loading replaces
/// the node with the subgraph's calculators, so semantics and performance
/// match the hand-inlined graph.
class SubgraphRegistry {
 public:
  /// Registers `ast` under its `type` name. The graph-level input/output
  /// stream declarations form the public interface; at least one output
  /// is required. Names may not collide with registered calculators.
  /// Subgraph files may not carry graph-level settings (executors,
  /// num_threads, trace_enabled).
  void Register(const GraphConfigAst& ast,
                const CalculatorRegistry& calculators);

  bool Contains(const std::string& name) const {
    return subgraphs_.count(name) > 0;
  }
  const GraphConfigAst* Find(const std::string& name) const {
    auto it = subgraphs_.find(name);
    return it == subgraphs_.end() ? nullptr : &it->second;
  }

 private:
  std::map<std::string, GraphConfigAst> subgraphs_;
};

/// Replaces every node referencing a registered subgraph with that
/// subgraph's calculators. Interface streams are spliced to the caller's
/// names; internal names are mangled "<instance_path>__<inner_name>".
/// Unknown calculator names are left for validation to flag. Throws
/// RecursiveSubgraph on self-reference cycles.
GraphConfigAst ExpandSubgraphs(const GraphConfigAst& ast,
                               const SubgraphRegistry& subgraphs);

}  // namespace flowgraph

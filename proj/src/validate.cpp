#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

#include "flowgraph/validated_graph.hpp"

namespace flowgraph {

std::string ValidationError::Join(const std::vector<ValidationIssue>& issues) {
  std::ostringstream os;
  for (size_t i = 0; i < issues.size(); ++i) {
    if (i > 0) os << "; ";
    os << ErrorCodeName(issues[i].code) << ": " << issues[i].message;
  }
  return os.str();
}

std::vector<int> AssignPriorities(int node_count,
                                  const std::vector<std::vector<int>>& edges,
                                  const std::vector<bool>& is_source) {
  // Kahn's algorithm for cycle detection, then a reverse-topological pass
  // for the longest path from each node to any terminal node.
  std::vector<int> indegree(node_count, 0);
  for (const auto& succ : edges) {
    for (int v : succ) ++indegree[v];
  }
  std::deque<int> ready;
  for (int u = 0; u < node_count; ++u) {
    if (indegree[u] == 0) ready.push_back(u);
  }
  std::vector<int> topo;
  while (!ready.empty()) {
    int u = ready.front();
    ready.pop_front();
    topo.push_back(u);
    for (int v : edges[u]) {
      if (--indegree[v] == 0) ready.push_back(v);
    }
  }
  if (static_cast<int>(topo.size()) != node_count) {
    throw FlowError(ErrorCode::kCycleDetected,
                    "stream topology contains a cycle not broken by "
                    "back_edge annotations");
  }

  std::vector<int> longest(node_count, 0);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    int u = *it;
    for (int v : edges[u]) {
      longest[u] = std::max(longest[u], longest[v] + 1);
    }
  }

  std::vector<int> priority(node_count, 0);
  int minimum = 0;
  for (int u = 0; u < node_count; ++u) {
    priority[u] = -longest[u];
    minimum = std::min(minimum, priority[u]);
  }
  // Sources all share the lowest priority in the graph.
  for (int u = 0; u < node_count; ++u) {
    if (u < static_cast<int>(is_source.size()) && is_source[u]) {
      priority[u] = minimum;
    }
  }
  return priority;
}

namespace {

/// Contract tag -> configured stream/side-packet name for one node.
struct SlotBindings {
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::map<std::string, std::string> side_inputs;
  std::map<std::string, std::string> side_outputs;
};

class Validator {
 public:
  Validator(const GraphConfigAst& ast, const CalculatorRegistry& registry)
      : ast_(ast), registry_(registry) {}

  ValidatedGraph Run() {
    NormalizeAndFillContracts();
    BuildStreamTable();
    BuildSidePacketTable();
    ResolveTypes();
    ResolveExecutors();
    ComputePriorities();
    if (!issues_.empty()) throw ValidationError(std::move(issues_));
    CollectWarnings();
    graph_.default_max_queue_size = ast_.max_queue_size;
    graph_.num_threads = ast_.num_threads;
    graph_.trace_enabled = ast_.trace_enabled;
    return std::move(graph_);
  }

 private:
  void Issue(ErrorCode code, const std::string& message) {
    issues_.push_back({code, message});
  }

  /// Assigns implicit tags (IN0../OUT0..) to untagged entries and flags
  /// duplicate bindings within a namespace.
  void NormalizeTags(std::vector<StreamRef>& refs, const char* prefix,
                     const std::string& node_name) {
    int counter = 0;
    std::set<std::string> seen;
    for (StreamRef& ref : refs) {
      if (ref.tag.empty()) {
        ref.tag = std::string(prefix) + std::to_string(counter++);
      }
      if (!seen.insert(ref.tag).second) {
        Issue(ErrorCode::kContractViolation,
              "node " + node_name + " binds tag '" + ref.tag + "' twice");
      }
    }
  }

  InputPolicySpec ParsePolicyOverride(const std::string& node_name,
                                      const std::string& text) {
    if (text == "default") return InputPolicySpec::Default();
    if (text == "immediate") return InputPolicySpec::Immediate();
    if (text.rfind("grouped:", 0) == 0) {
      std::vector<std::vector<std::string>> groups;
      std::istringstream gs(text.substr(8));
      std::string group;
      while (std::getline(gs, group, '|')) {
        std::vector<std::string> tags;
        std::istringstream ts(group);
        std::string tag;
        while (std::getline(ts, tag, ',')) {
          if (!tag.empty()) tags.push_back(tag);
        }
        if (!tags.empty()) groups.push_back(std::move(tags));
      }
      return InputPolicySpec::Grouped(std::move(groups));
    }
    Issue(ErrorCode::kInvalidOptions,
          "node " + node_name + ": unknown input_policy '" + text + "'");
    return InputPolicySpec::Default();
  }

  /// True if every ref's tag is `prefix` followed by digits only.
  static bool AllImplicit(const std::vector<StreamRef>& refs,
                          const char* prefix) {
    const size_t plen = std::string(prefix).size();
    for (const auto& ref : refs) {
      if (ref.tag.rfind(prefix, 0) != 0 || ref.tag.size() <= plen) {
        return false;
      }
      for (size_t i = plen; i < ref.tag.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(ref.tag[i]))) {
          return false;
        }
      }
    }
    return true;
  }

  /// Binds config entries to contract slots by tag, or positionally when
  /// every entry is untagged (implicit tags) and the arity matches.
  void BindSlots(const std::string& node_name,
                 const std::vector<StreamRef>& refs,
                 const std::vector<StreamSlot>& slots, const char* what,
                 const char* implicit_prefix,
                 std::map<std::string, std::string>& bindings) {
    if (AllImplicit(refs, implicit_prefix) && refs.size() == slots.size()) {
      for (size_t i = 0; i < refs.size(); ++i) {
        bindings[slots[i].tag] = refs[i].name;
      }
    } else {
      for (const auto& ref : refs) {
        bool found = false;
        for (const auto& slot : slots) {
          if (slot.tag == ref.tag) {
            found = true;
            break;
          }
        }
        if (!found) {
          Issue(ErrorCode::kContractViolation,
                "node " + node_name + ": contract has no " + what +
                    " tagged '" + ref.tag + "'");
          continue;
        }
        bindings[ref.tag] = ref.name;
      }
    }
    for (const auto& slot : slots) {
      if (!slot.optional && bindings.count(slot.tag) == 0) {
        Issue(ErrorCode::kContractViolation,
              "node " + node_name + ": required " + what + " '" + slot.tag +
                  "' is not connected");
      }
    }
  }

  void NormalizeAndFillContracts() {
    std::map<std::string, int> name_counts;
    for (const NodeConfig& config : ast_.nodes) {
      ++name_counts[config.calculator];
    }
    std::map<std::string, int> name_ordinal;

    for (size_t i = 0; i < ast_.nodes.size(); ++i) {
      ValidatedNode node;
      SlotBindings bindings;
      node.id = static_cast<int>(i);
      node.config = ast_.nodes[i];
      const std::string& calc = node.config.calculator;
      node.name = name_counts[calc] > 1
                      ? calc + "_" + std::to_string(++name_ordinal[calc])
                      : calc;

      NormalizeTags(node.config.input_streams, "IN", node.name);
      NormalizeTags(node.config.output_streams, "OUT", node.name);
      NormalizeTags(node.config.input_side_packets, "IN", node.name);
      NormalizeTags(node.config.output_side_packets, "OUT", node.name);
      node.max_queue_size = node.config.max_queue_size;

      bool have_contract = false;
      if (!registry_.Contains(calc)) {
        Issue(ErrorCode::kUnknownCalculator,
              "node " + node.name + ": unknown calculator '" + calc + "'");
      } else {
        try {
          node.contract = registry_.FillContract(calc, node.config.options);
          have_contract = true;
        } catch (const FlowError& e) {
          Issue(e.code() == ErrorCode::kNotRegistered
                    ? ErrorCode::kUnknownCalculator
                    : e.code(),
                "node " + node.name + ": " + e.what());
        }
      }

      if (have_contract) {
        node.policy = node.contract.input_policy();
        node.timestamp_offset_zero = node.contract.timestamp_offset_zero();
        node.is_source = node.contract.inputs().empty();
        if (node.config.options.Has("input_policy")) {
          node.policy = ParsePolicyOverride(
              node.name,
              node.config.options.GetString("input_policy", "default"));
        }
        ValidateGroupedPolicy(node);

        BindSlots(node.name, node.config.input_streams,
                  node.contract.inputs(), "input stream", "IN",
                  bindings.inputs);
        BindSlots(node.name, node.config.output_streams,
                  node.contract.outputs(), "output stream", "OUT",
                  bindings.outputs);
        BindSlots(node.name, node.config.input_side_packets,
                  node.contract.input_side_packets(), "input side packet",
                  "IN", bindings.side_inputs);
        BindSlots(node.name, node.config.output_side_packets,
                  node.contract.output_side_packets(), "output side packet",
                  "OUT", bindings.side_outputs);

        for (const auto& slot : node.contract.inputs()) {
          node.inputs.push_back({slot.tag, -1, false});
        }
        for (const auto& slot : node.contract.outputs()) {
          node.outputs.push_back({slot.tag, -1, false});
        }
        for (const auto& slot : node.contract.input_side_packets()) {
          node.side_inputs.push_back({slot.tag, -1});
        }
        for (const auto& slot : node.contract.output_side_packets()) {
          node.side_outputs.push_back({slot.tag, -1});
        }

        for (const auto& tag : node.config.back_edges) {
          bool known = false;
          for (const auto& ref : node.config.input_streams) {
            if (ref.tag == tag) known = true;
          }
          if (!known) {
            Issue(ErrorCode::kContractViolation,
                  "node " + node.name +
                      ": back_edge names unknown input tag '" + tag + "'");
          }
        }
      }

      graph_.nodes.push_back(std::move(node));
      bindings_.push_back(std::move(bindings));
    }
  }

  void ValidateGroupedPolicy(ValidatedNode& node) {
    if (node.policy.kind != InputPolicyKind::kGrouped) return;
    std::set<std::string> covered;
    bool ok = true;
    for (const auto& group : node.policy.groups) {
      for (const auto& tag : group) {
        if (node.contract.FindInput(tag) == nullptr ||
            !covered.insert(tag).second) {
          ok = false;
        }
      }
    }
    if (!ok || covered.size() != node.contract.inputs().size()) {
      Issue(ErrorCode::kContractViolation,
            "node " + node.name +
                ": grouped policy does not partition the input tags");
      node.policy = InputPolicySpec::Default();
    }
  }

  int InternStream(const std::string& name) {
    auto it = graph_.stream_ids.find(name);
    if (it != graph_.stream_ids.end()) return it->second;
    int id = static_cast<int>(graph_.streams.size());
    ValidatedStream stream;
    stream.id = id;
    stream.name = name;
    graph_.streams.push_back(std::move(stream));
    graph_.stream_ids[name] = id;
    return id;
  }

  bool IsGraphInput(int stream_id) const {
    return std::find(graph_.graph_input_streams.begin(),
                     graph_.graph_input_streams.end(),
                     stream_id) != graph_.graph_input_streams.end();
  }

  std::string ProducerName(const ValidatedStream& stream) const {
    if (stream.producer_node < 0) return "the application (graph input)";
    return graph_.nodes[stream.producer_node].name;
  }

  void BuildStreamTable() {
    for (const auto& ref : ast_.input_streams) {
      int id = InternStream(ref.name);
      graph_.graph_input_streams.push_back(id);
    }

    for (size_t n = 0; n < graph_.nodes.size(); ++n) {
      ValidatedNode& node = graph_.nodes[n];
      for (size_t slot = 0; slot < node.outputs.size(); ++slot) {
        auto it = bindings_[n].outputs.find(node.outputs[slot].tag);
        if (it == bindings_[n].outputs.end()) continue;
        int id = InternStream(it->second);
        ValidatedStream& stream = graph_.streams[id];
        if (stream.producer_node != -1 || IsGraphInput(id)) {
          Issue(ErrorCode::kMultipleProducers,
                "stream '" + stream.name + "' produced by both " +
                    ProducerName(stream) + " and " + node.name);
          continue;
        }
        stream.producer_node = node.id;
        stream.producer_slot = static_cast<int>(slot);
        node.outputs[slot].stream_id = id;
      }
    }

    for (size_t n = 0; n < graph_.nodes.size(); ++n) {
      ValidatedNode& node = graph_.nodes[n];
      for (size_t slot = 0; slot < node.inputs.size(); ++slot) {
        auto it = bindings_[n].inputs.find(node.inputs[slot].tag);
        if (it == bindings_[n].inputs.end()) continue;
        auto sid = graph_.stream_ids.find(it->second);
        if (sid == graph_.stream_ids.end()) {
          Issue(ErrorCode::kUnproducedInput,
                "stream '" + it->second + "' consumed by " + node.name +
                    " has no producer");
          continue;
        }
        ValidatedStream& stream = graph_.streams[sid->second];
        bool back_edge = false;
        for (const auto& tag : node.config.back_edges) {
          if (tag == node.inputs[slot].tag) back_edge = true;
        }
        node.inputs[slot].stream_id = stream.id;
        node.inputs[slot].back_edge = back_edge;
        stream.consumers.push_back(
            {node.id, static_cast<int>(slot), back_edge});
      }
    }

    for (const auto& ref : ast_.output_streams) {
      auto it = graph_.stream_ids.find(ref.name);
      if (it == graph_.stream_ids.end() ||
          (graph_.streams[it->second].producer_node < 0 &&
           !IsGraphInput(it->second))) {
        Issue(ErrorCode::kUnproducedInput,
              "graph output stream '" + ref.name + "' has no producer");
        continue;
      }
      graph_.graph_output_streams.push_back(it->second);
    }
  }

  int InternSidePacket(const std::string& name) {
    auto it = graph_.side_packet_ids.find(name);
    if (it != graph_.side_packet_ids.end()) return it->second;
    int id = static_cast<int>(graph_.side_packets.size());
    ValidatedSidePacket side;
    side.id = id;
    side.name = name;
    graph_.side_packets.push_back(std::move(side));
    graph_.side_packet_ids[name] = id;
    return id;
  }

  bool IsAppSidePacket(const std::string& name) const {
    for (const auto& ref : ast_.input_side_packets) {
      if (ref.name == name) return true;
    }
    return false;
  }

  void BuildSidePacketTable() {
    for (const auto& ref : ast_.input_side_packets) {
      InternSidePacket(ref.name);
    }
    for (size_t n = 0; n < graph_.nodes.size(); ++n) {
      ValidatedNode& node = graph_.nodes[n];
      for (size_t i = 0; i < node.side_outputs.size(); ++i) {
        auto it = bindings_[n].side_outputs.find(node.side_outputs[i].tag);
        if (it == bindings_[n].side_outputs.end()) continue;
        int id = InternSidePacket(it->second);
        ValidatedSidePacket& side = graph_.side_packets[id];
        if (side.producer_node != -1 || IsAppSidePacket(side.name)) {
          Issue(ErrorCode::kMultipleProducers,
                "side packet '" + side.name + "' has multiple producers");
          continue;
        }
        side.producer_node = node.id;
        node.side_outputs[i].side_id = id;
      }
    }
    for (size_t n = 0; n < graph_.nodes.size(); ++n) {
      ValidatedNode& node = graph_.nodes[n];
      for (size_t i = 0; i < node.side_inputs.size(); ++i) {
        auto it = bindings_[n].side_inputs.find(node.side_inputs[i].tag);
        if (it == bindings_[n].side_inputs.end()) continue;
        auto sid = graph_.side_packet_ids.find(it->second);
        if (sid == graph_.side_packet_ids.end()) {
          Issue(ErrorCode::kUnproducedInput,
                "side packet '" + it->second + "' consumed by " + node.name +
                    " is neither produced nor declared as a graph input");
          continue;
        }
        node.side_inputs[i].side_id = sid->second;
        graph_.side_packets[sid->second].consumer_nodes.push_back(node.id);
      }
    }
    // Side-packet dependencies alone must be acyclic so Opens can be
    // ordered.
    std::vector<std::vector<int>> edges(graph_.nodes.size());
    for (const auto& side : graph_.side_packets) {
      if (side.producer_node < 0) continue;
      for (int consumer : side.consumer_nodes) {
        edges[side.producer_node].push_back(consumer);
      }
    }
    try {
      std::vector<bool> dummy(graph_.nodes.size(), false);
      AssignPriorities(static_cast<int>(graph_.nodes.size()), edges, dummy);
    } catch (const FlowError&) {
      Issue(ErrorCode::kCycleDetected,
            "side-packet dependencies form a cycle");
    }
  }

  PayloadTypeId SlotType(const ValidatedNode& node, const TypeSpec& spec) {
    switch (spec.kind) {
      case TypeSpec::Kind::kAny:
        return nullptr;
      case TypeSpec::Kind::kExact:
        return spec.exact;
      case TypeSpec::Kind::kSameAsInput: {
        for (const auto& input : node.inputs) {
          if (input.tag == spec.same_as_tag && input.stream_id >= 0) {
            return graph_.streams[input.stream_id].type;
          }
        }
        return nullptr;
      }
    }
    return nullptr;
  }

  void ResolveTypes() {
    // Fixpoint: producer contracts propagate types downstream; consumers
    // with exact expectations narrow any-typed streams; disagreements are
    // type mismatches.
    std::set<std::string> reported;
    bool changed = true;
    while (changed) {
      changed = false;
      for (ValidatedNode& node : graph_.nodes) {
        for (size_t slot = 0; slot < node.outputs.size(); ++slot) {
          int id = node.outputs[slot].stream_id;
          if (id < 0) continue;
          ValidatedStream& stream = graph_.streams[id];
          PayloadTypeId t = SlotType(node, node.contract.outputs()[slot].type);
          if (t != nullptr && stream.type == nullptr) {
            stream.type = t;
            changed = true;
          } else if (t != nullptr && stream.type != nullptr &&
                     t != stream.type &&
                     reported.insert(stream.name).second) {
            Issue(ErrorCode::kTypeMismatch,
                  "stream '" + stream.name + "': producer " + node.name +
                      " emits " + t->name + " but the stream carries " +
                      stream.type->name);
          }
        }
        for (size_t slot = 0; slot < node.inputs.size(); ++slot) {
          int id = node.inputs[slot].stream_id;
          if (id < 0) continue;
          ValidatedStream& stream = graph_.streams[id];
          const TypeSpec& spec = node.contract.inputs()[slot].type;
          if (spec.kind != TypeSpec::Kind::kExact) continue;
          if (stream.type == nullptr) {
            stream.type = spec.exact;
            changed = true;
          } else if (stream.type != spec.exact &&
                     reported.insert(stream.name).second) {
            Issue(ErrorCode::kTypeMismatch,
                  "stream '" + stream.name + "' carries " +
                      stream.type->name + " but " + node.name + " input '" +
                      node.inputs[slot].tag + "' expects " +
                      spec.exact->name);
          }
        }
      }
    }
    for (ValidatedNode& node : graph_.nodes) {
      for (size_t i = 0; i < node.side_outputs.size(); ++i) {
        int id = node.side_outputs[i].side_id;
        if (id < 0) continue;
        const TypeSpec& spec = node.contract.output_side_packets()[i].type;
        if (spec.kind == TypeSpec::Kind::kExact &&
            graph_.side_packets[id].type == nullptr) {
          graph_.side_packets[id].type = spec.exact;
        }
      }
    }
    for (ValidatedNode& node : graph_.nodes) {
      for (size_t i = 0; i < node.side_inputs.size(); ++i) {
        int id = node.side_inputs[i].side_id;
        if (id < 0) continue;
        ValidatedSidePacket& side = graph_.side_packets[id];
        const TypeSpec& spec = node.contract.input_side_packets()[i].type;
        if (spec.kind != TypeSpec::Kind::kExact) continue;
        if (side.type == nullptr) {
          side.type = spec.exact;
        } else if (side.type != spec.exact) {
          Issue(ErrorCode::kTypeMismatch,
                "side packet '" + side.name + "' carries " +
                    side.type->name + " but " + node.name + " expects " +
                    spec.exact->name);
        }
      }
    }
  }

  void ResolveExecutors() {
    graph_.executors.push_back({"", ast_.num_threads});
    std::set<std::string> names;
    for (const auto& exec : ast_.executors) {
      if (!names.insert(exec.name).second) {
        Issue(ErrorCode::kDuplicateName,
              "executor '" + exec.name + "' defined twice");
        continue;
      }
      graph_.executors.push_back(exec);
    }
    for (ValidatedNode& node : graph_.nodes) {
      if (node.config.executor.empty()) continue;
      bool found = false;
      for (size_t i = 0; i < graph_.executors.size(); ++i) {
        if (graph_.executors[i].name == node.config.executor) {
          node.executor_id = static_cast<int>(i);
          found = true;
          break;
        }
      }
      if (!found) {
        Issue(ErrorCode::kUnknownExecutor,
              "node " + node.name + " references unknown executor '" +
                  node.config.executor + "'");
      }
    }
  }

  void ComputePriorities() {
    std::vector<std::vector<int>> edges(graph_.nodes.size());
    for (const ValidatedStream& stream : graph_.streams) {
      if (stream.producer_node < 0) continue;
      for (const StreamConsumer& consumer : stream.consumers) {
        if (consumer.back_edge) continue;
        edges[stream.producer_node].push_back(consumer.node);
      }
    }
    std::vector<bool> is_source(graph_.nodes.size());
    for (size_t i = 0; i < graph_.nodes.size(); ++i) {
      is_source[i] = graph_.nodes[i].is_source;
    }
    try {
      std::vector<int> priorities = AssignPriorities(
          static_cast<int>(graph_.nodes.size()), edges, is_source);
      for (size_t i = 0; i < graph_.nodes.size(); ++i) {
        graph_.nodes[i].priority = priorities[i];
      }
    } catch (const FlowError& e) {
      Issue(ErrorCode::kCycleDetected, e.what());
    }
  }

  void CollectWarnings() {
    for (const ValidatedStream& stream : graph_.streams) {
      bool is_graph_output =
          std::find(graph_.graph_output_streams.begin(),
                    graph_.graph_output_streams.end(),
                    stream.id) != graph_.graph_output_streams.end();
      if (stream.consumers.empty() && !is_graph_output) {
        graph_.warnings.push_back("stream '" + stream.name +
                                  "' has no consumers");
      }
    }
  }

  const GraphConfigAst& ast_;
  const CalculatorRegistry& registry_;
  ValidatedGraph graph_;
  std::vector<SlotBindings> bindings_;
  std::vector<ValidationIssue> issues_;
};

}  // namespace

ValidatedGraph Validate(const GraphConfigAst& ast,
                        const CalculatorRegistry& registry) {
  return Validator(ast, registry).Run();
}

}  // namespace flowgraph

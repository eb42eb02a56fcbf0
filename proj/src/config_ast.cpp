#include "flowgraph/config_ast.hpp"

#include <charconv>
#include <sstream>

namespace flowgraph {

namespace {

std::string Quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  out += "\"";
  return out;
}

std::string RefText(const StreamRef& ref) {
  if (ref.tag.empty()) return Quote(ref.name);
  return Quote(ref.tag + ":" + ref.name);
}

void EmitRefs(std::ostream& os, const char* key,
              const std::vector<StreamRef>& refs, const char* indent) {
  for (const auto& r : refs) {
    os << indent << key << ": " << RefText(r) << "\n";
  }
}

std::string ValueText(const OptionValue& v) {
  if (const auto* i = std::get_if<int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), *d);
    (void)ec;
    std::string text(buf, end);
    // Keep the float/int distinction through a round trip.
    if (text.find('.') == std::string::npos &&
        text.find('e') == std::string::npos &&
        text.find("inf") == std::string::npos &&
        text.find("nan") == std::string::npos) {
      text += ".0";
    }
    return text;
  }
  if (const auto* s = std::get_if<std::string>(&v)) return Quote(*s);
  return std::get<bool>(v) ? "true" : "false";
}

}  // namespace

std::string Serialize(const GraphConfigAst& ast) {
  std::ostringstream os;
  if (!ast.type.empty()) os << "type: " << Quote(ast.type) << "\n";
  EmitRefs(os, "input_stream", ast.input_streams, "");
  EmitRefs(os, "output_stream", ast.output_streams, "");
  EmitRefs(os, "input_side_packet", ast.input_side_packets, "");
  if (ast.num_threads != 0) os << "num_threads: " << ast.num_threads << "\n";
  if (ast.max_queue_size != 100) {
    os << "max_queue_size: " << ast.max_queue_size << "\n";
  }
  if (ast.trace_enabled) os << "trace_enabled: true\n";
  for (const auto& exec : ast.executors) {
    os << "executor {\n  name: " << Quote(exec.name) << "\n";
    if (exec.num_workers != 0) {
      os << "  num_workers: " << exec.num_workers << "\n";
    }
    os << "}\n";
  }
  for (const auto& node : ast.nodes) {
    os << "node {\n";
    os << "  calculator: " << Quote(node.calculator) << "\n";
    EmitRefs(os, "input_stream", node.input_streams, "  ");
    EmitRefs(os, "output_stream", node.output_streams, "  ");
    EmitRefs(os, "input_side_packet", node.input_side_packets, "  ");
    EmitRefs(os, "output_side_packet", node.output_side_packets, "  ");
    for (const auto& tag : node.back_edges) {
      os << "  back_edge: " << Quote(tag) << "\n";
    }
    if (!node.executor.empty()) {
      os << "  executor: " << Quote(node.executor) << "\n";
    }
    if (node.max_queue_size >= 0) {
      os << "  max_queue_size: " << node.max_queue_size << "\n";
    }
    if (!node.options.values().empty()) {
      os << "  options {\n";
      for (const auto& [key, value] : node.options.values()) {
        os << "    " << key << ": " << ValueText(value) << "\n";
      }
      os << "  }\n";
    }
    os << "}\n";
  }
  return os.str();
}

}  // namespace flowgraph

// Command-line runner for flowgraph graphs: validate configs, run them
// with file-backed inputs/outputs, and report traces.
//
// Exit codes: 0 success, 1 graph run error, 2 usage/config error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowgraph/detections.hpp"
#include "flowgraph/graph_run.hpp"
#include "flowgraph/stdcalcs.hpp"
#include "flowgraph/subgraph.hpp"
#include "flowgraph/synthetic.hpp"
#include "flowgraph/trace_export.hpp"

namespace fg = flowgraph;
using nlohmann::json;

namespace {

constexpr int kExitDone = 0;
constexpr int kExitRunError = 1;
constexpr int kExitConfigError = 2;

struct KeyValue {
  std::string key;
  std::string value;
};

KeyValue SplitKeyValue(const std::string& text, const std::string& what) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw fg::FlowError(fg::ErrorCode::kInvalidOptions,
                        what + " must look like KEY=VALUE, got '" + text +
                            "'");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) {
    throw fg::FlowError(fg::ErrorCode::kIoError, "cannot read '" + path + "'");
  }
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// -- payload <-> JSON --------------------------------------------------------

json PacketToJson(const fg::Packet& p) {
  if (p.Holds<int64_t>()) return p.Get<int64_t>();
  if (p.Holds<double>()) return p.Get<double>();
  if (p.Holds<std::string>()) return p.Get<std::string>();
  if (p.Holds<std::vector<double>>()) return p.Get<std::vector<double>>();
  if (p.Holds<fg::Detections>()) {
    json array = json::array();
    for (const auto& d : p.Get<fg::Detections>()) {
      array.push_back(
          {{"box", d.box}, {"label", d.label}, {"score", d.score}});
    }
    return array;
  }
  if (p.Holds<fg::SyntheticFrame>()) {
    const auto& f = p.Get<fg::SyntheticFrame>();
    json positions = json::array();
    for (const auto& [x, y] : f.positions) positions.push_back({x, y});
    return {{"index", f.index},
            {"positions", positions},
            {"drift", {f.drift_x, f.drift_y}}};
  }
  return p.ToLiteral();
}

fg::Packet JsonToPacket(const json& value, fg::PayloadTypeId hint) {
  if (hint == fg::PayloadTypeOf<int64_t>() ||
      (hint == nullptr && value.is_number_integer())) {
    return fg::Packet::Of<int64_t>(value.get<int64_t>());
  }
  if (hint == fg::PayloadTypeOf<double>() ||
      (hint == nullptr && value.is_number())) {
    return fg::Packet::Of<double>(value.get<double>());
  }
  if (hint == fg::PayloadTypeOf<std::string>() ||
      (hint == nullptr && value.is_string())) {
    return fg::Packet::Of<std::string>(value.get<std::string>());
  }
  if (hint == fg::PayloadTypeOf<std::vector<double>>() ||
      (hint == nullptr && value.is_array() &&
       (value.empty() || value[0].is_number()))) {
    return fg::Packet::Of<std::vector<double>>(
        value.get<std::vector<double>>());
  }
  if (hint == fg::PayloadTypeOf<fg::Detections>() ||
      (hint == nullptr && value.is_array() && !value.empty() &&
       value[0].is_object() && value[0].contains("box"))) {
    fg::Detections dets;
    for (const auto& obj : value) {
      fg::Detection d;
      d.box = obj.at("box").get<std::array<double, 4>>();
      d.label = obj.value("label", std::string());
      d.score = obj.value("score", 0.0);
      dets.push_back(std::move(d));
    }
    return fg::Packet::Of<fg::Detections>(std::move(dets));
  }
  if (hint == fg::PayloadTypeOf<fg::SyntheticFrame>() ||
      (hint == nullptr && value.is_object() && value.contains("positions"))) {
    fg::SyntheticFrame f;
    f.index = value.value("index", int64_t{0});
    for (const auto& pos : value.at("positions")) {
      f.positions.push_back(
          {pos.at(0).get<double>(), pos.at(1).get<double>()});
    }
    if (value.contains("drift")) {
      f.drift_x = value.at("drift").at(0).get<double>();
      f.drift_y = value.at("drift").at(1).get<double>();
    }
    return fg::Packet::Of<fg::SyntheticFrame>(std::move(f));
  }
  throw fg::FlowError(fg::ErrorCode::kTypeMismatch,
                      "cannot convert JSON value " + value.dump() +
                          " to payload type '" +
                          (hint ? hint->name : "?") + "'");
}

fg::Packet SideLiteralToPacket(const std::string& literal) {
  // Typed literal: integer, then float, else string.
  try {
    size_t used = 0;
    int64_t v = std::stoll(literal, &used);
    if (used == literal.size()) return fg::Packet::Of<int64_t>(v);
  } catch (...) {
  }
  try {
    size_t used = 0;
    double v = std::stod(literal, &used);
    if (used == literal.size()) return fg::Packet::Of<double>(v);
  } catch (...) {
  }
  return fg::Packet::Of<std::string>(literal);
}

// -- config loading ----------------------------------------------------------

fg::ValidatedGraph LoadGraph(const std::string& graph_path,
                             const std::vector<std::string>& subgraph_dirs,
                             bool print_warnings) {
  fg::SubgraphRegistry subgraphs;
  for (const auto& dir : subgraph_dirs) {
    if (!std::filesystem::is_directory(dir)) {
      throw fg::FlowError(fg::ErrorCode::kIoError,
                          "--subgraph-path '" + dir + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() == ".gcfg") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      fg::GraphConfigAst ast;
      try {
        ast = fg::Parse(ReadFile(file.string()));
      } catch (const fg::FlowError& e) {
        throw fg::FlowError(fg::ErrorCode::kSyntaxError,
                            file.string() + ":" + e.what());
      }
      if (!ast.type.empty()) {
        subgraphs.Register(ast, fg::CalculatorRegistry::Default());
      }
    }
  }

  fg::GraphConfigAst ast;
  try {
    ast = fg::Parse(ReadFile(graph_path));
  } catch (const fg::ParseError& e) {
    throw fg::FlowError(fg::ErrorCode::kSyntaxError,
                        graph_path + ":" + std::to_string(e.line()) + ":" +
                            std::to_string(e.col()) + ": " + e.what());
  }
  fg::GraphConfigAst flat = fg::ExpandSubgraphs(ast, subgraphs);
  fg::ValidatedGraph graph =
      fg::Validate(flat, fg::CalculatorRegistry::Default());
  if (print_warnings) {
    for (const auto& warning : graph.warnings) {
      std::cerr << "warning: " << warning << "\n";
    }
  }
  return graph;
}

// -- subcommands --------------------------------------------------------------

struct RunArgs {
  std::string graph_path;
  std::vector<std::string> inputs;     // STREAM=PATH
  std::vector<std::string> outputs;    // STREAM=PATH
  std::vector<std::string> sides;      // NAME=VALUE
  std::vector<std::string> executors;  // NAME=N
  std::vector<std::string> subgraph_dirs;
  std::string trace_path;
  int workers = 0;
  int max_queue_size = -1;
  bool deterministic = false;
  uint64_t seed = 0;
};

struct InputRecord {
  int64_t ts = 0;
  json value;
  std::string stream;
  int file_order = 0;
};

int CmdRun(const RunArgs& args) {
  fg::ValidatedGraph graph =
      LoadGraph(args.graph_path, args.subgraph_dirs, true);

  auto stream_declared = [&](const std::string& name,
                             const std::vector<int>& ids) {
    for (int id : ids) {
      if (graph.streams[id].name == name) return true;
    }
    return false;
  };

  fg::RunOptions options;
  options.deterministic = args.deterministic;
  options.seed = args.seed;
  options.max_queue_size_override = args.max_queue_size;
  if (args.workers > 0) options.executor_workers[""] = args.workers;
  for (const auto& spec : args.executors) {
    KeyValue kv = SplitKeyValue(spec, "--executor");
    options.executor_workers[kv.key] = std::stoi(kv.value);
  }
  if (!args.trace_path.empty()) options.trace_enabled = true;

  fg::GraphRun run(graph, fg::CalculatorRegistry::Default(), options);

  for (const auto& side : args.sides) {
    KeyValue kv = SplitKeyValue(side, "--side");
    run.SupplySidePacket(kv.key, SideLiteralToPacket(kv.value));
  }

  // Output files, written from observer callbacks in stream order.
  std::vector<std::unique_ptr<std::ofstream>> output_files;
  for (const auto& spec : args.outputs) {
    KeyValue kv = SplitKeyValue(spec, "--output");
    if (!stream_declared(kv.key, graph.graph_output_streams)) {
      throw fg::FlowError(fg::ErrorCode::kUnknownStream,
                          "--output stream '" + kv.key +
                              "' is not a declared graph output");
    }
    auto file = std::make_unique<std::ofstream>(kv.value);
    if (!file->good()) {
      throw fg::FlowError(fg::ErrorCode::kIoError,
                          "cannot write '" + kv.value + "'");
    }
    std::ofstream* out = file.get();
    run.ObserveOutput(kv.key, [out](const fg::Packet& p) {
      json record{{"ts", p.timestamp().value()}, {"value", PacketToJson(p)}};
      *out << record.dump() << "\n";
    });
    output_files.push_back(std::move(file));
  }

  // Input records, merged across files by (timestamp, file order) so
  // multi-stream feeds cannot livelock each other on back-pressure.
  std::vector<InputRecord> records;
  int file_order = 0;
  for (const auto& spec : args.inputs) {
    KeyValue kv = SplitKeyValue(spec, "--input");
    if (!stream_declared(kv.key, graph.graph_input_streams)) {
      throw fg::FlowError(fg::ErrorCode::kUnknownStream,
                          "--input stream '" + kv.key +
                              "' is not a declared graph input");
    }
    std::ifstream in(kv.value);
    if (!in.good()) {
      throw fg::FlowError(fg::ErrorCode::kIoError,
                          "cannot read '" + kv.value + "'");
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json record;
      try {
        record = json::parse(line);
      } catch (const json::exception& e) {
        throw fg::FlowError(fg::ErrorCode::kSyntaxError,
                            kv.value + ":" + std::to_string(line_no) + ": " +
                                e.what());
      }
      records.push_back({record.at("ts").get<int64_t>(), record.at("value"),
                         kv.key, file_order});
    }
    ++file_order;
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const InputRecord& a, const InputRecord& b) {
                     if (a.ts != b.ts) return a.ts < b.ts;
                     return a.file_order < b.file_order;
                   });

  run.Start();
  for (const auto& record : records) {
    const fg::ValidatedStream* stream = graph.FindStream(record.stream);
    run.AddToGraphInput(record.stream,
                        JsonToPacket(record.value, stream->type)
                            .At(fg::Timestamp(record.ts)));
  }
  run.CloseAllGraphInputs();
  fg::RunResult result = run.WaitUntilDone();

  for (auto& file : output_files) file->flush();

  if (!args.trace_path.empty()) {
    fg::TraceNames names = run.MakeTraceNames();
    auto events = run.TraceSnapshot();
    std::ofstream trace(args.trace_path);
    if (!trace.good()) {
      throw fg::FlowError(fg::ErrorCode::kIoError,
                          "cannot write '" + args.trace_path + "'");
    }
    trace << fg::ExportChromeTrace(events, names);
    fg::TraceSummary summary = fg::Summarize(events);
    std::cout << summary.ToTable(names) << "\n"
              << summary.ToMachineLines(names);
  }

  if (!result.ok()) {
    std::cerr << "graph run failed: " << result.message << "\n";
    return kExitRunError;
  }
  return kExitDone;
}

int CmdValidate(const std::string& graph_path,
                const std::vector<std::string>& subgraph_dirs) {
  fg::ValidatedGraph graph = LoadGraph(graph_path, subgraph_dirs, true);
  std::cout << "graph OK: " << graph.nodes.size() << " nodes, "
            << graph.streams.size() << " streams\n\n";
  std::cout << "node                          priority  executor\n";
  for (const auto& node : graph.nodes) {
    char line[120];
    std::snprintf(line, sizeof(line), "%-28s %9d  %s\n", node.name.c_str(),
                  node.priority,
                  graph.executors[node.executor_id].name.empty()
                      ? "(default)"
                      : graph.executors[node.executor_id].name.c_str());
    std::cout << line;
  }
  return kExitDone;
}

int CmdTraceReport(const std::string& trace_path,
                   const std::vector<std::string>& streams) {
  fg::ImportedTrace trace = fg::ImportChromeTrace(ReadFile(trace_path));
  fg::TraceSummary summary = fg::Summarize(trace.events);
  std::cout << summary.ToTable(trace.names) << "\n"
            << summary.ToMachineLines(trace.names);

  // Critical paths for packets on terminal streams (whose consumers never
  // emit anything), or for the explicitly requested streams.
  std::set<int> target_streams;
  if (!streams.empty()) {
    for (const auto& name : streams) {
      for (const auto& [id, stream_name] : trace.names.streams) {
        if (stream_name == name) target_streams.insert(id);
      }
    }
  } else {
    std::set<int> emitting_nodes;
    std::map<int, std::set<int>> stream_consumers;
    std::set<int> emitted_streams;
    for (const auto& e : trace.events) {
      if (e.type == fg::TraceEventType::kPacketEmitted) {
        emitting_nodes.insert(e.node_id);
        emitted_streams.insert(e.stream_id);
      }
      if (e.type == fg::TraceEventType::kPacketConsumed) {
        stream_consumers[e.stream_id].insert(e.node_id);
      }
    }
    for (int stream : emitted_streams) {
      bool terminal = true;
      for (int consumer : stream_consumers[stream]) {
        if (emitting_nodes.count(consumer) > 0) terminal = false;
      }
      if (terminal) target_streams.insert(stream);
    }
  }

  for (int stream : target_streams) {
    std::cout << "\ncritical paths for stream "
              << trace.names.StreamName(stream) << ":\n";
    for (const auto& e : trace.events) {
      if (e.type != fg::TraceEventType::kPacketEmitted ||
          e.stream_id != stream) {
        continue;
      }
      std::cout << "  packet ts=" << e.packet_timestamp << ":";
      try {
        auto path =
            fg::CriticalPath(trace.events, e.packet_data_id, stream);
        for (const auto& step : path) {
          std::cout << " " << trace.names.NodeName(step.node_id) << "("
                    << step.ElapsedNs() / 1000 << "us)";
        }
      } catch (const fg::FlowError& err) {
        std::cout << " <" << err.what() << ">";
      }
      std::cout << "\n";
    }
  }
  return kExitDone;
}

}  // namespace

int main(int argc, char** argv) {
  fg::RegisterStandardCalculators(fg::CalculatorRegistry::Default());

  CLI::App app{"flowgraph: streaming dataflow graph runner"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run a graph config");
  run->add_option("--graph", run_args.graph_path, "graph config file")
      ->required();
  run->add_option("--input", run_args.inputs,
                  "STREAM=PATH JSON-lines input feed");
  run->add_option("--output", run_args.outputs,
                  "STREAM=PATH JSON-lines output capture");
  run->add_option("--side", run_args.sides, "NAME=VALUE side packet");
  run->add_option("--trace", run_args.trace_path, "trace output file");
  run->add_option("--workers", run_args.workers,
                  "default executor worker count");
  run->add_option("--executor", run_args.executors,
                  "NAME=N worker count for a named executor");
  run->add_option("--max-queue-size", run_args.max_queue_size,
                  "override the default per-stream queue limit");
  run->add_flag("--deterministic", run_args.deterministic,
                "single-worker executors for reproducible runs");
  run->add_option("--seed", run_args.seed, "run seed");
  run->add_option("--subgraph-path", run_args.subgraph_dirs,
                  "directory of .gcfg subgraph definitions");

  std::string validate_path;
  std::vector<std::string> validate_subgraph_dirs;
  CLI::App* validate =
      app.add_subcommand("validate", "parse, expand and validate a config");
  validate->add_option("graph", validate_path, "graph config file")
      ->required();
  validate->add_option("--subgraph-path", validate_subgraph_dirs,
                       "directory of .gcfg subgraph definitions");

  std::string trace_path;
  std::vector<std::string> report_streams;
  CLI::App* report = app.add_subcommand(
      "trace-report", "summarize a trace file and show critical paths");
  report->add_option("trace", trace_path, "trace file from `run --trace`")
      ->required();
  report->add_option("--stream", report_streams,
                     "restrict critical paths to these streams");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitDone : kExitConfigError;
  }

  try {
    if (run->parsed()) return CmdRun(run_args);
    if (validate->parsed()) {
      return CmdValidate(validate_path, validate_subgraph_dirs);
    }
    if (report->parsed()) return CmdTraceReport(trace_path, report_streams);
  } catch (const fg::ValidationError& e) {
    for (const auto& issue : e.issues()) {
      std::cerr << "error: " << fg::ErrorCodeName(issue.code) << ": "
                << issue.message << "\n";
    }
    return kExitConfigError;
  } catch (const fg::FlowError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitConfigError;
}

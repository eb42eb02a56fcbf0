#include "flowgraph/trace_export.hpp"

#include <cmath>

#include <json.hpp>

#include "flowgraph/error.hpp"

namespace flowgraph {

namespace {

using nlohmann::json;

bool IsIntervalStart(TraceEventType t) {
  return t == TraceEventType::kProcessStart ||
         t == TraceEventType::kOpenStart || t == TraceEventType::kCloseStart;
}

bool IsIntervalFinish(TraceEventType t) {
  return t == TraceEventType::kProcessFinish ||
         t == TraceEventType::kOpenFinish || t == TraceEventType::kCloseFinish;
}

const char* PhaseName(TraceEventType t) {
  switch (t) {
    case TraceEventType::kProcessStart:
    case TraceEventType::kProcessFinish: return "Process";
    case TraceEventType::kOpenStart:
    case TraceEventType::kOpenFinish: return "Open";
    case TraceEventType::kCloseStart:
    case TraceEventType::kCloseFinish: return "Close";
    default: return "";
  }
}

TraceEventType TypeFromName(const std::string& name) {
  for (int i = 0; i <= static_cast<int>(TraceEventType::kDeadlockRelaxation);
       ++i) {
    auto t = static_cast<TraceEventType>(i);
    if (TraceEventTypeName(t) == name) return t;
  }
  throw FlowError(ErrorCode::kMalformedTrace,
                  "unknown trace event type '" + name + "'");
}

}  // namespace

std::string ExportChromeTrace(const std::vector<TraceEvent>& events,
                              const TraceNames& names) {
  json array = json::array();
  for (const auto& [id, name] : names.nodes) {
    array.push_back({{"name", "thread_name"},
                     {"ph", "M"},
                     {"pid", 1},
                     {"tid", id},
                     {"ts", 0.0},
                     {"args", {{"name", name}}}});
  }
  for (const auto& e : events) {
    json obj;
    obj["pid"] = 1;
    obj["tid"] = e.node_id;
    obj["ts"] = static_cast<double>(e.event_time_ns) / 1000.0;
    json args;
    args["type"] = std::string(TraceEventTypeName(e.type));
    if (e.packet_timestamp != Timestamp::Unset().value()) {
      args["packet_timestamp"] = e.packet_timestamp;
    }
    if (e.packet_data_id != 0) args["data_id"] = e.packet_data_id;
    if (e.stream_id != 0) {
      args["stream"] = names.StreamName(e.stream_id);
      args["stream_id"] = e.stream_id;
    }
    if (IsIntervalStart(e.type)) {
      obj["ph"] = "B";
      obj["name"] = names.NodeName(e.node_id) + ":" + PhaseName(e.type);
    } else if (IsIntervalFinish(e.type)) {
      obj["ph"] = "E";
      obj["name"] = names.NodeName(e.node_id) + ":" + PhaseName(e.type);
    } else {
      obj["ph"] = "i";
      obj["s"] = "t";
      obj["name"] = std::string(TraceEventTypeName(e.type));
    }
    obj["args"] = std::move(args);
    array.push_back(std::move(obj));
  }
  return array.dump(1);
}

ImportedTrace ImportChromeTrace(const std::string& json_text) {
  json array;
  try {
    array = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FlowError(ErrorCode::kMalformedTrace, e.what());
  }
  if (!array.is_array()) {
    throw FlowError(ErrorCode::kMalformedTrace,
                    "trace file is not a JSON array");
  }
  ImportedTrace out;
  try {
    for (const auto& obj : array) {
      const std::string ph = obj.at("ph").get<std::string>();
      if (ph == "M") {
        if (obj.at("name") == "thread_name") {
          out.names.nodes[obj.at("tid").get<int>()] =
              obj.at("args").at("name").get<std::string>();
        }
        continue;
      }
      TraceEvent e;
      e.node_id = obj.at("tid").get<int>();
      e.event_time_ns = std::llround(obj.at("ts").get<double>() * 1000.0);
      const json& args = obj.at("args");
      e.type = TypeFromName(args.at("type").get<std::string>());
      if (args.contains("packet_timestamp")) {
        e.packet_timestamp = args.at("packet_timestamp").get<int64_t>();
      }
      if (args.contains("data_id")) {
        e.packet_data_id = args.at("data_id").get<uint64_t>();
      }
      if (args.contains("stream_id")) {
        e.stream_id = args.at("stream_id").get<int>();
        out.names.streams[e.stream_id] = args.at("stream").get<std::string>();
      }
      out.events.push_back(e);
    }
  } catch (const json::exception& e) {
    throw FlowError(ErrorCode::kMalformedTrace, e.what());
  }
  return out;
}

}  // namespace flowgraph

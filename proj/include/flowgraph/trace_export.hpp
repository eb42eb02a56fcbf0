#pragma once

#include <string>
#include <vector>

#include "flowgraph/trace_analysis.hpp"
#include "flowgraph/tracer.hpp"

namespace flowgraph {

/// Renders events as a JSON trace-event array loadable by standard
/// timeline viewers: lifecycle intervals become "B"/"E" pairs keyed by
/// node id (tid), everything else becomes instant events. Node names ride
/// along as thread_name metadata so a re-import keeps them.
std::string ExportChromeTrace(const std::vector<TraceEvent>& events,
                              const TraceNames& names);

struct ImportedTrace {
  std::vector<TraceEvent> events;
  TraceNames names;
};

/// Parses a trace previously written by ExportChromeTrace. Throws
/// MalformedTrace on anything it cannot interpret.
ImportedTrace ImportChromeTrace(const std::string& json_text);

}  // namespace flowgraph

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dbgi {

struct InkPoint {
    double x = 0.0;
    double y = 0.0;
};

using InkTrace = std::vector<InkPoint>;

struct InkDocument {
    std::vector<InkTrace> traces;        // document order
    std::optional<std::string> label;    // first annotation of type "truth"
    std::string source_id;
    std::vector<std::string> warnings;   // skipped empty traces etc.
};

// Parses the trace/annotation subset of InkML. Coordinate lists are
// comma-separated points; channels beyond x and y (time, pressure) are
// ignored. Malformed markup raises IoError with "<source>:<line>: ..." info.
InkDocument parse_inkml(const std::string& text, const std::string& source_id = "inkml");

}  // namespace dbgi

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace esvi {

struct TraceRecord {
  long long updates = 0;  // cumulative coordinate updates
  double seconds = 0.0;   // monotonic time since run start
  double elbo = 0.0;
  std::optional<double> perplexity;
};

struct RunTrace {
  std::string metadata;  // single "key=value ..." line
  std::vector<TraceRecord> records;
};

// CSV with a '#' metadata comment line, header
// "updates,seconds,elbo,perplexity", and floats at 17 significant digits
// so a reread reproduces them exactly. A missing perplexity serializes as
// an empty field.
void write_trace(const RunTrace& trace, const std::string& path);
std::string format_trace(const RunTrace& trace);
RunTrace read_trace(const std::string& path);
RunTrace parse_trace(const std::string& text);

}  // namespace esvi

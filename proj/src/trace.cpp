#include "esvi/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace esvi {

namespace {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace

std::string format_trace(const RunTrace& trace) {
  std::string out;
  if (!trace.metadata.empty()) {
    out += "# " + trace.metadata + "\n";
  }
  out += "updates,seconds,elbo,perplexity\n";
  for (const TraceRecord& r : trace.records) {
    out += std::to_string(r.updates);
    out += ',';
    out += format_double(r.seconds);
    out += ',';
    out += format_double(r.elbo);
    out += ',';
    if (r.perplexity.has_value()) out += format_double(*r.perplexity);
    out += '\n';
  }
  return out;
}

void write_trace(const RunTrace& trace, const std::string& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write trace to " + path);
  file << format_trace(trace);
  if (!file) throw std::runtime_error("trace write failed: " + path);
}

RunTrace parse_trace(const std::string& text) {
  RunTrace trace;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      trace.metadata = line.size() > 2 ? line.substr(2) : "";
      continue;
    }
    if (!saw_header) {
      if (line != "updates,seconds,elbo,perplexity") {
        throw std::runtime_error("trace: unexpected header at line " +
                                 std::to_string(line_no));
      }
      saw_header = true;
      continue;
    }
    TraceRecord r;
    std::size_t pos = 0;
    auto next_field = [&]() {
      const std::size_t comma = line.find(',', pos);
      std::string field = comma == std::string::npos
                              ? line.substr(pos)
                              : line.substr(pos, comma - pos);
      pos = comma == std::string::npos ? line.size() : comma + 1;
      return field;
    };
    r.updates = std::stoll(next_field());
    r.seconds = std::stod(next_field());
    r.elbo = std::stod(next_field());
    const std::string p = next_field();
    if (!p.empty()) r.perplexity = std::stod(p);
    trace.records.push_back(r);
  }
  if (!saw_header) throw std::runtime_error("trace: missing header");
  return trace;
}

RunTrace read_trace(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot read trace from " + path);
  std::ostringstream ss;
  ss << file.rdbuf();
  return parse_trace(ss.str());
}

}  // namespace esvi

#include "ontoprompt/errors.hpp"

#include <algorithm>

namespace ontoprompt {

std::string to_string(Severity s) { return s == Severity::kError ? "error" : "warning"; }

std::string describe(const std::vector<Diagnostic>& diagnostics) {
  std::string out;
  for (const auto& d : diagnostics) {
    if (!out.empty()) out += "; ";
    out += to_string(d.severity) + " at " + d.path + ": " + d.message;
  }
  return out.empty() ? "no diagnostics" : out;
}

std::size_t count_errors(const std::vector<Diagnostic>& diagnostics) {
  return static_cast<std::size_t>(std::count_if(
      diagnostics.begin(), diagnostics.end(),
      [](const Diagnostic& d) { return d.severity == Severity::kError; }));
}

}  // namespace ontoprompt

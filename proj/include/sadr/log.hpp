#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <string_view>

namespace sadr {

using DiagnosticSink = std::function<void(std::string_view)>;

/// Receives non-fatal diagnostics (warnings, rejected draws). Defaults to stderr.
inline DiagnosticSink& diagnostic_sink() {
  static DiagnosticSink sink = [](std::string_view msg) { std::cerr << "sadr: " << msg << '\n'; };
  return sink;
}

inline void warn(std::string_view msg) {
  if (diagnostic_sink()) diagnostic_sink()(msg);
}

/// Swaps the sink for the lifetime of the guard.
class ScopedDiagnosticSink {
 public:
  explicit ScopedDiagnosticSink(DiagnosticSink sink) : saved_(std::move(diagnostic_sink())) {
    diagnostic_sink() = std::move(sink);
  }
  ~ScopedDiagnosticSink() { diagnostic_sink() = std::move(saved_); }
  ScopedDiagnosticSink(const ScopedDiagnosticSink&) = delete;
  ScopedDiagnosticSink& operator=(const ScopedDiagnosticSink&) = delete;

 private:
  DiagnosticSink saved_;
};

}  // namespace sadr

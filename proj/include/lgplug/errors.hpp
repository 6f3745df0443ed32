#pragma once

#include <stdexcept>
#include <string>

namespace lgplug {

// Error taxonomy shared by the library and the CLI. The CLI maps each class
// to a distinct process exit code (see tools/lgplug_cli.cpp).

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad record, bad line). Message carries the line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally inconsistent data: edge endpoints missing, tampered artifact,
// split referencing unknown nodes.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// LLM backend failed after exhausting its retry policy.
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A pipeline stage was asked to run without its upstream artifact.
struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss, undefined metric, and similar numeric dead ends.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lgplug

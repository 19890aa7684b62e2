#pragma once

#include <stdexcept>
#include <string>

namespace repeatlab {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kSchemaVersion = "1";

// Exit codes used by the CLI.
enum ExitCode : int {
  kExitOk = 0,          // all assertions passed
  kExitAssertion = 1,   // an experiment/verifier assertion failed
  kExitConfig = 2,      // bad config or arguments
  kExitRuntime = 3,     // I/O or numeric failure
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid dataset-intervention request (wrong task kind, impossible balance, ...).
struct InterventionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace repeatlab

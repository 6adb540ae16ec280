#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace verif {

enum class ErrorCode {
  CycleDetected,
  ShapeMismatch,
  UnsupportedKind,
  InvalidGraph,
  MalformedModel,
  UnsupportedOperation,
  UnsupportedOpset,
  ShapeUnknown,
  IoError,
  SyntaxError,
  UnknownImport,
  UnboundName,
  NonTerminalExpression,
  MissingParameter,
  MissingNetwork,
  TypeError,
  NonlinearAtom,
  MixedAtom,
  EmptyPolytope,
  DnfTooLarge,
  NotAViolation,
  UnsupportedInput,
  UnboundedInput,
  NotSequential,
  NonFlatTensors,
  UnknownBackend,
  PluginError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace verif

#include "verif/error.hpp"

namespace verif {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnsupportedKind: return "UnsupportedKind";
    case ErrorCode::InvalidGraph: return "InvalidGraph";
    case ErrorCode::MalformedModel: return "MalformedModel";
    case ErrorCode::UnsupportedOperation: return "UnsupportedOperation";
    case ErrorCode::UnsupportedOpset: return "UnsupportedOpset";
    case ErrorCode::ShapeUnknown: return "ShapeUnknown";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownImport: return "UnknownImport";
    case ErrorCode::UnboundName: return "UnboundName";
    case ErrorCode::NonTerminalExpression: return "NonTerminalExpression";
    case ErrorCode::MissingParameter: return "MissingParameter";
    case ErrorCode::MissingNetwork: return "MissingNetwork";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::NonlinearAtom: return "NonlinearAtom";
    case ErrorCode::MixedAtom: return "MixedAtom";
    case ErrorCode::EmptyPolytope: return "EmptyPolytope";
    case ErrorCode::DnfTooLarge: return "DnfTooLarge";
    case ErrorCode::NotAViolation: return "NotAViolation";
    case ErrorCode::UnsupportedInput: return "UnsupportedInput";
    case ErrorCode::UnboundedInput: return "UnboundedInput";
    case ErrorCode::NotSequential: return "NotSequential";
    case ErrorCode::NonFlatTensors: return "NonFlatTensors";
    case ErrorCode::UnknownBackend: return "UnknownBackend";
    case ErrorCode::PluginError: return "PluginError";
  }
  return "Unknown";
}

}  // namespace verif

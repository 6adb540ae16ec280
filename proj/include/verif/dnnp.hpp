#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "verif/property.hpp"

namespace verif {

enum class ParamType { Int, Float };

struct ParameterDecl {
  std::string name;
  ParamType type = ParamType::Float;
  std::optional<double> default_value;
  std::optional<double> value;  // filled by resolve_parameters
};

struct NetworkRef {
  std::string name;
  NetworkPtr graph;  // null until bound
  Shape input_shape;
  Shape output_shape;
};

struct ParsedProperty {
  ExprPtr expr;  // always a Forall
  std::vector<ParameterDecl> parameters;
  std::vector<NetworkRef> networks;
  std::filesystem::path base_dir;  // relative data.load paths resolve against this
};

/// Parses DNNP source: imports from the whitelist {data, math, properties},
/// assignments, then exactly one final property expression.
ParsedProperty parse_dnnp(std::string_view text, const std::filesystem::path& base_dir = {});
ParsedProperty parse_dnnp_file(const std::filesystem::path& path);

using ParameterValues = std::map<std::string, std::string>;
using NetworkMap = std::map<std::string, NetworkPtr>;

/// Parses each supplied value as its declared type, falling back to defaults.
/// Throws MissingParameter, or TypeError for a value that does not parse.
std::vector<ParameterDecl> resolve_parameters(const ParsedProperty& parsed, const ParameterValues& values);

/// Evaluation context for running the unbound AST through the interpreter.
EvalContext make_context(const ParsedProperty& parsed, const ParameterValues& values, const NetworkMap& networks);

/// Substitutes parameters and networks and folds every subexpression that does
/// not depend on the quantified variable.
ExprPtr bind(const ParsedProperty& parsed, const ParameterValues& values, const NetworkMap& networks);

/// Rewrites a bound property so every leaf is a linear Atom over input or
/// output components, or a truth constant. The returned Forall carries the
/// network and the shape of the quantified variable.
ExprPtr canonicalize(const ExprPtr& bound);

}  // namespace verif

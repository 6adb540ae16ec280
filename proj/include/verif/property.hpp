#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "verif/graph.hpp"
#include "verif/linear.hpp"
#include "verif/tensor.hpp"

namespace verif {

using NetworkPtr = std::shared_ptr<const OperationGraph>;

enum class ExprKind {
  Forall,
  And,
  Or,
  Implies,
  Not,
  Compare,
  Arith,
  ArgCmp,
  Network,       // reference to a named network, the callee of NetworkApply
  NetworkApply,  // children: {Network, argument}
  Index,         // children: {target}; subscripts held in `items`
  Symbol,
  Parameter,
  Constant,      // a tensor, or a truth value when `truth` is set
  String,
  Call,          // whitelisted module function, e.g. data.load
  List,          // list literal, stacked along a new leading axis
  Atom,          // canonical linear inequality
};

enum class CompareOp { Le, Lt, Ge, Gt, Eq, Ne };
enum class ArithOp { Add, Sub, Mul, Div, Neg };
enum class ArgOp { Argmax, Argmin };

std::string_view to_string(ExprKind kind);
std::string_view to_string(CompareOp op);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct IndexItem {
  enum class Kind { Index, Slice, NewAxis, Ellipsis };
  Kind kind = Kind::Index;
  ExprPtr index;
  ExprPtr start, stop, step;  // null when omitted
};

struct Expr {
  ExprKind kind = ExprKind::Constant;
  std::vector<ExprPtr> children;
  CompareOp compare = CompareOp::Le;
  ArithOp arith = ArithOp::Add;
  ArgOp arg = ArgOp::Argmax;
  // Symbol/Forall: variable name. Parameter, Network, NetworkApply: declared name.
  // Call: qualified function name. String: the literal.
  std::string name;
  Tensor value;
  std::optional<bool> truth;
  std::vector<IndexItem> items;
  LinearAtom atom;
  NetworkPtr network;  // set once bound
  Shape shape;         // Symbol and Forall: shape of the bound variable once bound
};

ExprPtr make_constant(Tensor value);
ExprPtr make_bool(bool value);
ExprPtr make_string(std::string text);
ExprPtr make_symbol(std::string name, Shape shape = {});
ExprPtr make_parameter(std::string name);
ExprPtr make_network(std::string name, NetworkPtr network = nullptr);
ExprPtr make_apply(ExprPtr network, ExprPtr argument);
ExprPtr make_logic(ExprKind kind, std::vector<ExprPtr> children);
ExprPtr make_not(ExprPtr child);
ExprPtr make_implies(ExprPtr antecedent, ExprPtr consequent);
ExprPtr make_forall(std::string symbol, ExprPtr body, Shape shape = {}, NetworkPtr network = nullptr);
ExprPtr make_compare(CompareOp op, ExprPtr lhs, ExprPtr rhs);
ExprPtr make_arith(ArithOp op, ExprPtr lhs, ExprPtr rhs = nullptr);
ExprPtr make_argcmp(ArgOp op, ExprPtr child);
ExprPtr make_index(ExprPtr target, std::vector<IndexItem> items);
ExprPtr make_call(std::string function, std::vector<ExprPtr> args);
ExprPtr make_list(std::vector<ExprPtr> items);
ExprPtr make_atom(LinearAtom atom);

bool is_bool_constant(const Expr& e);
bool contains_symbol(const Expr& e);
std::string to_string(const Expr& e);

/// Result of applying numpy basic indexing to a shape: the result shape and, per
/// result element, the flat index it reads from the source.
struct IndexMap {
  Shape shape;
  std::vector<int64_t> source;
};

struct ResolvedIndex {
  IndexItem::Kind kind = IndexItem::Kind::Index;
  int64_t index = 0;
  std::optional<int64_t> start, stop, step;
};

IndexMap index_map(const Shape& shape, const std::vector<ResolvedIndex>& items);

using Value = std::variant<bool, Tensor, std::string, NetworkPtr>;

struct EvalContext {
  std::map<std::string, double> parameters;
  std::map<std::string, NetworkPtr> networks;
  std::filesystem::path base_dir;
  // Value of the quantified variable and, for canonical atoms, the network output at it.
  std::optional<Tensor> input;
  std::optional<Tensor> output;
};

/// Reference interpreter. Works on unbound, bound and canonical expressions alike.
Value evaluate(const ExprPtr& e, const EvalContext& ctx);

/// Truth of the quantifier-free body of `property` at x. For canonical properties
/// the network output needed by output atoms is computed from the Forall's network.
bool holds_at(const ExprPtr& property, const Tensor& x, const EvalContext& ctx = {});

/// Index of the first maximal (or minimal) element, or -1 when the extremum is
/// attained more than once. Ties count as failures of strict argmax comparisons.
int64_t arg_extremum(const Tensor& t, ArgOp op);

/// Whether `qualified` (e.g. "math.sqrt") names a supported elementwise function.
bool is_math_function(const std::string& qualified);

/// Reads an NPY or CSV file, chosen by extension.
Tensor load_data_file(const std::filesystem::path& path);

}  // namespace verif

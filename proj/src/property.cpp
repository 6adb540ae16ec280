#include "verif/property.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "verif/error.hpp"
#include "verif/infer.hpp"
#include "verif/npy.hpp"

namespace verif {

std::string_view to_string(ExprKind kind) {
  switch (kind) {
    case ExprKind::Forall: return "Forall";
    case ExprKind::And: return "And";
    case ExprKind::Or: return "Or";
    case ExprKind::Implies: return "Implies";
    case ExprKind::Not: return "Not";
    case ExprKind::Compare: return "Compare";
    case ExprKind::Arith: return "Arith";
    case ExprKind::ArgCmp: return "ArgCmp";
    case ExprKind::Network: return "Network";
    case ExprKind::NetworkApply: return "NetworkApply";
    case ExprKind::Index: return "Index";
    case ExprKind::Symbol: return "Symbol";
    case ExprKind::Parameter: return "Parameter";
    case ExprKind::Constant: return "Constant";
    case ExprKind::String: return "String";
    case ExprKind::Call: return "Call";
    case ExprKind::List: return "List";
    case ExprKind::Atom: return "Atom";
  }
  return "?";
}

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::Le: return "<=";
    case CompareOp::Lt: return "<";
    case CompareOp::Ge: return ">=";
    case CompareOp::Gt: return ">";
    case CompareOp::Eq: return "==";
    case CompareOp::Ne: return "!=";
  }
  return "?";
}

namespace {

std::shared_ptr<Expr> node(ExprKind kind, std::vector<ExprPtr> children = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = kind;
  e->children = std::move(children);
  return e;
}

}  // namespace

ExprPtr make_constant(Tensor value) {
  auto e = node(ExprKind::Constant);
  e->value = std::move(value);
  return e;
}

ExprPtr make_bool(bool value) {
  auto e = node(ExprKind::Constant);
  e->truth = value;
  return e;
}

ExprPtr make_string(std::string text) {
  auto e = node(ExprKind::String);
  e->name = std::move(text);
  return e;
}

ExprPtr make_symbol(std::string name, Shape shape) {
  auto e = node(ExprKind::Symbol);
  e->name = std::move(name);
  e->shape = std::move(shape);
  return e;
}

ExprPtr make_parameter(std::string name) {
  auto e = node(ExprKind::Parameter);
  e->name = std::move(name);
  return e;
}

ExprPtr make_network(std::string name, NetworkPtr network) {
  auto e = node(ExprKind::Network);
  e->name = std::move(name);
  e->network = std::move(network);
  return e;
}

ExprPtr make_apply(ExprPtr network, ExprPtr argument) {
  auto e = node(ExprKind::NetworkApply);
  e->name = network->name;
  e->network = network->network;
  e->children = {std::move(network), std::move(argument)};
  return e;
}

ExprPtr make_logic(ExprKind kind, std::vector<ExprPtr> children) { return node(kind, std::move(children)); }
ExprPtr make_not(ExprPtr child) { return node(ExprKind::Not, {std::move(child)}); }

ExprPtr make_implies(ExprPtr antecedent, ExprPtr consequent) {
  return node(ExprKind::Implies, {std::move(antecedent), std::move(consequent)});
}

ExprPtr make_forall(std::string symbol, ExprPtr body, Shape shape, NetworkPtr network) {
  auto e = node(ExprKind::Forall, {std::move(body)});
  e->name = std::move(symbol);
  e->shape = std::move(shape);
  e->network = std::move(network);
  return e;
}

ExprPtr make_compare(CompareOp op, ExprPtr lhs, ExprPtr rhs) {
  auto e = node(ExprKind::Compare, {std::move(lhs), std::move(rhs)});
  e->compare = op;
  return e;
}

ExprPtr make_arith(ArithOp op, ExprPtr lhs, ExprPtr rhs) {
  auto e = node(ExprKind::Arith, {std::move(lhs)});
  if (rhs) e->children.push_back(std::move(rhs));
  e->arith = op;
  return e;
}

ExprPtr make_argcmp(ArgOp op, ExprPtr child) {
  auto e = node(ExprKind::ArgCmp, {std::move(child)});
  e->arg = op;
  return e;
}

ExprPtr make_index(ExprPtr target, std::vector<IndexItem> items) {
  auto e = node(ExprKind::Index, {std::move(target)});
  e->items = std::move(items);
  return e;
}

ExprPtr make_call(std::string function, std::vector<ExprPtr> args) {
  auto e = node(ExprKind::Call, std::move(args));
  e->name = std::move(function);
  return e;
}

ExprPtr make_list(std::vector<ExprPtr> items) { return node(ExprKind::List, std::move(items)); }

ExprPtr make_atom(LinearAtom atom) {
  auto e = node(ExprKind::Atom);
  e->atom = std::move(atom);
  return e;
}

bool is_bool_constant(const Expr& e) { return e.kind == ExprKind::Constant && e.truth.has_value(); }

bool contains_symbol(const Expr& e) {
  if (e.kind == ExprKind::Symbol) return true;
  for (const auto& c : e.children) {
    if (contains_symbol(*c)) return true;
  }
  for (const auto& item : e.items) {
    for (const auto* p : {&item.index, &item.start, &item.stop, &item.step}) {
      if (*p && contains_symbol(**p)) return true;
    }
  }
  return false;
}

namespace {

void print_tensor(std::ostream& out, const Tensor& t) {
  if (t.rank() == 0) {
    out << t[0];
    return;
  }
  out << "tensor" << shape_to_string(t.shape());
}

void print(std::ostream& out, const Expr& e) {
  auto list = [&](std::string_view head) {
    out << head << '(';
    for (size_t i = 0; i < e.children.size(); ++i) {
      if (i) out << ", ";
      print(out, *e.children[i]);
    }
    out << ')';
  };
  switch (e.kind) {
    case ExprKind::Forall:
      out << "Forall(" << e.name << ", ";
      print(out, *e.children[0]);
      out << ')';
      return;
    case ExprKind::And:
    case ExprKind::Or:
    case ExprKind::Implies:
    case ExprKind::Not: list(to_string(e.kind)); return;
    case ExprKind::Compare:
      out << '(';
      print(out, *e.children[0]);
      out << ' ' << to_string(e.compare) << ' ';
      print(out, *e.children[1]);
      out << ')';
      return;
    case ExprKind::Arith: {
      if (e.arith == ArithOp::Neg) {
        out << "-";
        print(out, *e.children[0]);
        return;
      }
      static constexpr const char* ops[] = {" + ", " - ", " * ", " / "};
      out << '(';
      print(out, *e.children[0]);
      out << ops[static_cast<int>(e.arith)];
      print(out, *e.children[1]);
      out << ')';
      return;
    }
    case ExprKind::ArgCmp: list(e.arg == ArgOp::Argmax ? "argmax" : "argmin"); return;
    case ExprKind::Network: out << e.name; return;
    case ExprKind::NetworkApply:
      out << e.name << '(';
      print(out, *e.children[1]);
      out << ')';
      return;
    case ExprKind::Index:
      print(out, *e.children[0]);
      out << "[...]";
      return;
    case ExprKind::Symbol: out << e.name; return;
    case ExprKind::Parameter: out << "Parameter(\"" << e.name << "\")"; return;
    case ExprKind::Constant:
      if (e.truth) {
        out << (*e.truth ? "True" : "False");
      } else {
        print_tensor(out, e.value);
      }
      return;
    case ExprKind::String: out << '"' << e.name << '"'; return;
    case ExprKind::Call: list(e.name); return;
    case ExprKind::List: list("list"); return;
    case ExprKind::Atom: out << '[' << e.atom.to_string() << ']'; return;
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::ostringstream out;
  out.precision(17);
  print(out, e);
  return out.str();
}

IndexMap index_map(const Shape& shape, const std::vector<ResolvedIndex>& items) {
  using Kind = IndexItem::Kind;
  const auto rank = static_cast<int64_t>(shape.size());
  int64_t consuming = 0;
  int64_t ellipses = 0;
  for (const auto& item : items) {
    if (item.kind == Kind::Index || item.kind == Kind::Slice) ++consuming;
    if (item.kind == Kind::Ellipsis) ++ellipses;
  }
  if (ellipses > 1) throw Error(ErrorCode::TypeError, "an index can only have a single ellipsis");
  if (consuming > rank) {
    throw Error(ErrorCode::ShapeMismatch, "too many indices for tensor of shape " + shape_to_string(shape));
  }

  // Per source axis, the list of selected positions (empty selection allowed);
  // `keep` says whether the axis survives into the result.
  struct Axis {
    std::vector<int64_t> positions;
    bool keep = true;
    bool source = true;  // false for inserted new axes
  };
  std::vector<Axis> axes;
  int64_t dim = 0;
  auto full = [&](int64_t d) {
    Axis a;
    for (int64_t i = 0; i < shape[static_cast<size_t>(d)]; ++i) a.positions.push_back(i);
    return a;
  };
  for (const auto& item : items) {
    switch (item.kind) {
      case Kind::NewAxis: axes.push_back(Axis{{0}, true, false}); break;
      case Kind::Ellipsis:
        for (int64_t k = 0; k < rank - consuming; ++k) axes.push_back(full(dim++));
        break;
      case Kind::Index: {
        const int64_t n = shape[static_cast<size_t>(dim)];
        int64_t i = item.index;
        if (i < -n || i >= n) {
          throw Error(ErrorCode::ShapeMismatch,
                      "index " + std::to_string(item.index) + " is out of bounds for axis of size " + std::to_string(n));
        }
        if (i < 0) i += n;
        axes.push_back(Axis{{i}, false, true});
        ++dim;
        break;
      }
      case Kind::Slice: {
        const int64_t n = shape[static_cast<size_t>(dim)];
        const int64_t step = item.step.value_or(1);
        if (step == 0) throw Error(ErrorCode::TypeError, "slice step cannot be zero");
        auto clamp = [&](int64_t v) {
          if (v < 0) {
            v += n;
            if (v < 0) v = step < 0 ? -1 : 0;
          } else if (v >= n) {
            v = step < 0 ? n - 1 : n;
          }
          return v;
        };
        const int64_t start = item.start ? clamp(*item.start) : (step < 0 ? n - 1 : 0);
        const int64_t stop = item.stop ? clamp(*item.stop) : (step < 0 ? -1 : n);
        Axis a;
        for (int64_t i = start; step > 0 ? i < stop : i > stop; i += step) a.positions.push_back(i);
        axes.push_back(std::move(a));
        ++dim;
        break;
      }
    }
  }
  while (dim < rank) axes.push_back(full(dim++));

  IndexMap out;
  for (const auto& a : axes) {
    if (a.keep) out.shape.push_back(static_cast<int64_t>(a.positions.size()));
  }
  const auto strides = strides_of(shape);
  const int64_t count = element_count(out.shape);
  out.source.reserve(static_cast<size_t>(count));
  std::function<void(size_t, int64_t)> walk = [&](size_t k, int64_t offset) {
    if (k == axes.size()) {
      out.source.push_back(offset);
      return;
    }
    int64_t source_axis = 0;
    for (size_t j = 0; j < k; ++j) source_axis += axes[j].source ? 1 : 0;
    for (int64_t p : axes[k].positions) {
      walk(k + 1, offset + (axes[k].source ? p * strides[static_cast<size_t>(source_axis)] : 0));
    }
  };
  if (count > 0) walk(0, 0);
  return out;
}

int64_t arg_extremum(const Tensor& t, ArgOp op) {
  if (t.size() == 0) throw Error(ErrorCode::TypeError, "argmax of an empty tensor");
  int64_t best = 0;
  bool tied = false;
  for (int64_t i = 1; i < t.size(); ++i) {
    const bool better = op == ArgOp::Argmax ? t[i] > t[best] : t[i] < t[best];
    if (better) {
      best = i;
      tied = false;
    } else if (t[i] == t[best]) {
      tied = true;
    }
  }
  return tied ? -1 : best;
}

Tensor load_data_file(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".npy") return load_npy(path);
  if (ext == ".csv" || ext == ".txt") return load_csv(path);
  throw Error(ErrorCode::IoError, "data.load supports .npy and .csv files, got " + path.string());
}

namespace {

const Tensor& as_tensor(const Value& v, std::string_view what) {
  if (const auto* t = std::get_if<Tensor>(&v)) return *t;
  throw Error(ErrorCode::TypeError, std::string(what) + " expects a tensor");
}

bool as_bool(const Value& v, std::string_view what) {
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  throw Error(ErrorCode::TypeError, std::string(what) + " expects a formula");
}

int64_t as_integer(const Value& v, std::string_view what) {
  const Tensor& t = as_tensor(v, what);
  if (t.size() != 1 || t[0] != std::floor(t[0]) || !std::isfinite(t[0])) {
    throw Error(ErrorCode::TypeError, std::string(what) + " expects an integer");
  }
  return static_cast<int64_t>(t[0]);
}

template <typename F>
Tensor broadcast(const Tensor& a, const Tensor& b, F f) {
  Shape shape = broadcast_shapes(a.shape(), b.shape());
  BroadcastIndexer ia(a.shape(), shape);
  BroadcastIndexer ib(b.shape(), shape);
  Tensor out(shape);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = f(a[ia(i)], b[ib(i)]);
  return out;
}

bool compare_values(CompareOp op, double a, double b) {
  switch (op) {
    case CompareOp::Le: return a <= b;
    case CompareOp::Lt: return a < b;
    case CompareOp::Ge: return a >= b;
    case CompareOp::Gt: return a > b;
    case CompareOp::Eq: return a == b;
    case CompareOp::Ne: return a != b;
  }
  return false;
}

const std::map<std::string, double (*)(double)>& math_table() {
  static const std::map<std::string, double (*)(double)> table = {
      {"math.sqrt", [](double v) { return std::sqrt(v); }}, {"math.exp", [](double v) { return std::exp(v); }},
      {"math.log", [](double v) { return std::log(v); }},   {"math.fabs", [](double v) { return std::fabs(v); }},
      {"math.floor", [](double v) { return std::floor(v); }}, {"math.ceil", [](double v) { return std::ceil(v); }},
      {"math.sin", [](double v) { return std::sin(v); }},   {"math.cos", [](double v) { return std::cos(v); }},
      {"math.tan", [](double v) { return std::tan(v); }},   {"math.tanh", [](double v) { return std::tanh(v); }},
  };
  return table;
}

Tensor apply_math(const std::string& fn, const Tensor& t) {
  const auto& table = math_table();
  auto it = table.find(fn);
  if (it == table.end()) throw Error(ErrorCode::UnboundName, fn);
  Tensor out = t;
  for (auto& v : out.data()) v = it->second(v);
  return out;
}

}  // namespace

bool is_math_function(const std::string& qualified) { return math_table().count(qualified) > 0; }

Value evaluate(const ExprPtr& e, const EvalContext& ctx) {
  auto eval = [&](const ExprPtr& c) { return evaluate(c, ctx); };
  switch (e->kind) {
    case ExprKind::Constant:
      if (e->truth) return *e->truth;
      return e->value;
    case ExprKind::String: return e->name;
    case ExprKind::Symbol:
      if (!ctx.input) throw Error(ErrorCode::TypeError, "no value for " + e->name);
      return *ctx.input;
    case ExprKind::Parameter: {
      auto it = ctx.parameters.find(e->name);
      if (it == ctx.parameters.end()) throw Error(ErrorCode::MissingParameter, e->name);
      return Tensor::scalar(it->second);
    }
    case ExprKind::Network: {
      if (e->network) return e->network;
      auto it = ctx.networks.find(e->name);
      if (it == ctx.networks.end() || !it->second) throw Error(ErrorCode::MissingNetwork, e->name);
      return it->second;
    }
    case ExprKind::NetworkApply: {
      const auto network = std::get<NetworkPtr>(eval(e->children[0]));
      const Tensor arg = as_tensor(eval(e->children[1]), e->name);
      if (network->inputs().size() != 1) {
        throw Error(ErrorCode::TypeError, "network " + e->name + " must have exactly one input");
      }
      const Shape& expected = network->op(network->inputs()[0]).shape;
      if (arg.shape() != expected) {
        throw Error(ErrorCode::ShapeMismatch, "network " + e->name + " expects input of shape " +
                                                  shape_to_string(expected) + ", got " + shape_to_string(arg.shape()));
      }
      return infer(*network, std::span<const Tensor>(&arg, 1)).at(0);
    }
    case ExprKind::Forall: return as_bool(eval(e->children[0]), "Forall");
    case ExprKind::And:
      for (const auto& c : e->children) {
        if (!as_bool(eval(c), "And")) return false;
      }
      return true;
    case ExprKind::Or:
      for (const auto& c : e->children) {
        if (as_bool(eval(c), "Or")) return true;
      }
      return false;
    case ExprKind::Implies:
      return !as_bool(eval(e->children[0]), "Implies") || as_bool(eval(e->children[1]), "Implies");
    case ExprKind::Not: return !as_bool(eval(e->children[0]), "Not");
    case ExprKind::Compare: {
      const Tensor a = as_tensor(eval(e->children[0]), "comparison");
      const Tensor b = as_tensor(eval(e->children[1]), "comparison");
      const CompareOp op = e->compare;
      const Tensor r = broadcast(a, b, [op](double x, double y) { return compare_values(op, x, y) ? 1.0 : 0.0; });
      const auto values = r.data();
      // != holds when any element differs; every other comparison is elementwise-all.
      if (op == CompareOp::Ne) return std::any_of(values.begin(), values.end(), [](double v) { return v != 0.0; });
      return std::all_of(values.begin(), values.end(), [](double v) { return v != 0.0; });
    }
    case ExprKind::Arith: {
      const Tensor a = as_tensor(eval(e->children[0]), "arithmetic");
      if (e->arith == ArithOp::Neg) {
        Tensor out = a;
        for (auto& v : out.data()) v = -v;
        return out;
      }
      const Tensor b = as_tensor(eval(e->children[1]), "arithmetic");
      switch (e->arith) {
        case ArithOp::Add: return broadcast(a, b, [](double x, double y) { return x + y; });
        case ArithOp::Sub: return broadcast(a, b, [](double x, double y) { return x - y; });
        case ArithOp::Mul: return broadcast(a, b, [](double x, double y) { return x * y; });
        case ArithOp::Div: return broadcast(a, b, [](double x, double y) { return x / y; });
        case ArithOp::Neg: break;
      }
      return a;
    }
    case ExprKind::ArgCmp:
      return Tensor::scalar(static_cast<double>(arg_extremum(as_tensor(eval(e->children[0]), "argmax"), e->arg)));
    case ExprKind::Index: {
      const Tensor target = as_tensor(eval(e->children[0]), "indexing");
      std::vector<ResolvedIndex> items;
      auto opt = [&](const ExprPtr& p) -> std::optional<int64_t> {
        if (!p) return std::nullopt;
        return as_integer(eval(p), "slice");
      };
      for (const auto& item : e->items) {
        ResolvedIndex r;
        r.kind = item.kind;
        if (item.kind == IndexItem::Kind::Index) r.index = as_integer(eval(item.index), "index");
        if (item.kind == IndexItem::Kind::Slice) {
          r.start = opt(item.start);
          r.stop = opt(item.stop);
          r.step = opt(item.step);
        }
        items.push_back(r);
      }
      const IndexMap map = index_map(target.shape(), items);
      Tensor out(map.shape, target.dtype());
      for (size_t i = 0; i < map.source.size(); ++i) out[static_cast<int64_t>(i)] = target[map.source[i]];
      return out;
    }
    case ExprKind::Call: {
      if (e->name == "data.load") {
        if (e->children.size() != 1) throw Error(ErrorCode::TypeError, "data.load takes one path");
        const Value arg = eval(e->children[0]);
        const auto* path = std::get_if<std::string>(&arg);
        if (!path) throw Error(ErrorCode::TypeError, "data.load expects a string path");
        std::filesystem::path p(*path);
        if (p.is_relative() && !ctx.base_dir.empty()) p = ctx.base_dir / p;
        return load_data_file(p);
      }
      if (e->children.size() != 1) throw Error(ErrorCode::TypeError, e->name + " takes one argument");
      return apply_math(e->name, as_tensor(eval(e->children[0]), e->name));
    }
    case ExprKind::List: {
      std::vector<Tensor> items;
      for (const auto& c : e->children) items.push_back(as_tensor(eval(c), "list"));
      if (items.empty()) return Tensor({0});
      Shape shape = items[0].shape();
      std::vector<double> data;
      for (const auto& t : items) {
        if (t.shape() != shape) throw Error(ErrorCode::ShapeMismatch, "list elements must share a shape");
        data.insert(data.end(), t.data().begin(), t.data().end());
      }
      shape.insert(shape.begin(), static_cast<int64_t>(items.size()));
      return Tensor(std::move(shape), std::move(data));
    }
    case ExprKind::Atom: {
      const auto& values = e->atom.space == VarSpace::Input ? ctx.input : ctx.output;
      if (!values) throw Error(ErrorCode::TypeError, "no value for atom variables");
      return e->atom.holds(values->data());
    }
  }
  throw Error(ErrorCode::TypeError, "cannot evaluate expression");
}

bool holds_at(const ExprPtr& property, const Tensor& x, const EvalContext& ctx) {
  if (property->kind != ExprKind::Forall) throw Error(ErrorCode::TypeError, "property must be a Forall");
  EvalContext local = ctx;
  local.input = x;
  if (property->network) local.output = infer(*property->network, std::span<const Tensor>(&x, 1)).at(0);
  return as_bool(evaluate(property->children[0], local), "Forall");
}

}  // namespace verif

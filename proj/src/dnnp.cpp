#include "verif/dnnp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "verif/error.hpp"

namespace verif {
namespace {

// ---------------------------------------------------------------- lexer

enum class Tok { Name, Number, String, Op, Newline, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1;
  int col = 1;
  double number = 0;
};

[[noreturn]] void syntax_error(int line, int col, const std::string& message) {
  throw Error(ErrorCode::SyntaxError, "line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + message);
}

std::vector<Token> tokenize(std::string_view src) {
  static const std::vector<std::string> long_ops = {"...", "**", "//", "<=", ">=", "==", "!="};
  static const std::string single_ops = "+-*/()[],:.<>=&|~%^@{}";
  std::vector<Token> out;
  size_t i = 0;
  int line = 1;
  int col = 1;
  int depth = 0;
  auto push = [&](Tok kind, std::string text, int l, int c, double number = 0) {
    out.push_back(Token{kind, std::move(text), l, c, number});
  };
  auto advance = [&](size_t n) {
    i += n;
    col += static_cast<int>(n);
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      if (depth == 0 && !out.empty() && out.back().kind != Tok::Newline) push(Tok::Newline, "\n", line, col);
      ++i, ++line, col = 1;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
      advance(1);
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '\\') {
      size_t j = i + 1;
      if (j < src.size() && src[j] == '\r') ++j;
      if (j < src.size() && src[j] == '\n') {
        i = j + 1, ++line, col = 1;
        continue;
      }
      syntax_error(line, col, "unexpected character '\\'");
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      push(Tok::Name, std::string(src.substr(i, j - i)), line, col);
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '.' ||
                                ((src[j] == '+' || src[j] == '-') && (src[j - 1] == 'e' || src[j - 1] == 'E')))) {
        ++j;
      }
      const std::string text(src.substr(i, j - i));
      double value = 0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc() || ptr != text.data() + text.size()) syntax_error(line, col, "invalid number '" + text + "'");
      push(Tok::Number, text, line, col, value);
      advance(j - i);
      continue;
    }
    if (c == '"' || c == '\'') {
      const int start_col = col;
      std::string text;
      size_t j = i + 1;
      while (true) {
        if (j >= src.size() || src[j] == '\n') syntax_error(line, start_col, "unterminated string literal");
        if (src[j] == c) break;
        if (src[j] == '\\' && j + 1 < src.size()) {
          const char e = src[j + 1];
          text.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
          j += 2;
          continue;
        }
        text.push_back(src[j++]);
      }
      push(Tok::String, text, line, start_col);
      advance(j + 1 - i);
      continue;
    }
    bool matched = false;
    for (const auto& op : long_ops) {
      if (src.substr(i, op.size()) == op) {
        push(Tok::Op, op, line, col);
        advance(op.size());
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (single_ops.find(c) != std::string::npos) {
      if (c == '(' || c == '[' || c == '{') ++depth;
      if (c == ')' || c == ']' || c == '}') {
        if (--depth < 0) syntax_error(line, col, std::string("unmatched '") + c + "'");
      }
      push(Tok::Op, std::string(1, c), line, col);
      advance(1);
      continue;
    }
    syntax_error(line, col, std::string("unexpected character '") + c + "'");
  }
  if (depth > 0) syntax_error(line, col, "unexpected end of input inside brackets");
  if (!out.empty() && out.back().kind != Tok::Newline) push(Tok::Newline, "\n", line, col);
  push(Tok::End, "", line, col);
  return out;
}

// ---------------------------------------------------------------- parser

const std::set<std::string> kBuiltins = {"Forall", "And", "Or", "Implies", "Not", "Parameter", "Network", "argmax", "argmin"};
const std::set<std::string> kModules = {"data", "math", "properties"};

std::optional<double> math_constant(const std::string& name) {
  if (name == "pi") return std::numbers::pi;
  if (name == "e") return std::numbers::e;
  if (name == "tau") return 2 * std::numbers::pi;
  if (name == "inf") return INFINITY;
  return std::nullopt;
}

struct Arg {
  std::optional<std::string> keyword;
  ExprPtr value;
  Token token;
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, std::filesystem::path base_dir) : toks_(std::move(tokens)) {
    out_.base_dir = std::move(base_dir);
  }

  ParsedProperty run() {
    while (peek().kind != Tok::End) {
      if (peek().kind == Tok::Newline) {
        next();
        continue;
      }
      if (out_.expr) {
        throw Error(ErrorCode::NonTerminalExpression,
                    "line " + std::to_string(peek().line) + ": statements may not follow the property expression");
      }
      statement();
    }
    if (!out_.expr) syntax_error(peek().line, peek().col, "missing property expression");
    return std::move(out_);
  }

 private:
  const Token& peek(size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  Token next() {
    Token t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool at_op(std::string_view op, size_t k = 0) const { return peek(k).kind == Tok::Op && peek(k).text == op; }
  bool at_name(std::string_view name) const { return peek().kind == Tok::Name && peek().text == name; }
  bool accept_op(std::string_view op) {
    if (!at_op(op)) return false;
    next();
    return true;
  }
  [[noreturn]] void fail(const Token& t, const std::string& message) const { syntax_error(t.line, t.col, message); }
  void expect_op(std::string_view op) {
    if (!accept_op(op)) fail(peek(), "expected '" + std::string(op) + "'" + found());
  }
  std::string found() const {
    const Token& t = peek();
    if (t.kind == Tok::End) return ", found end of input";
    if (t.kind == Tok::Newline) return ", found end of line";
    return ", found '" + t.text + "'";
  }
  Token expect_name() {
    if (peek().kind != Tok::Name) fail(peek(), "expected a name" + found());
    return next();
  }
  void end_statement() {
    if (peek().kind != Tok::Newline && peek().kind != Tok::End) fail(peek(), "expected end of statement" + found());
  }

  void statement() {
    if (at_name("import")) return import_statement();
    if (at_name("from")) return from_statement();
    if (peek().kind == Tok::Name && at_op("=", 1)) {
      const Token name = next();
      next();
      if (name.text == "True" || name.text == "False" || name.text == "None") fail(name, "cannot assign to " + name.text);
      env_[name.text] = expression();
      end_statement();
      return;
    }
    const Token start = peek();
    ExprPtr e = expression();
    end_statement();
    if (e->kind != ExprKind::Forall) fail(start, "the property expression must be a Forall");
    out_.expr = std::move(e);
  }

  std::string dotted_name() {
    std::string name = expect_name().text;
    while (accept_op(".")) name += "." + expect_name().text;
    return name;
  }

  void import_statement() {
    next();
    do {
      const std::string module = dotted_name();
      if (!kModules.count(module)) throw Error(ErrorCode::UnknownImport, module);
      std::string alias = module;
      if (at_name("as")) {
        next();
        alias = expect_name().text;
      }
      modules_[alias] = module;
    } while (accept_op(","));
    end_statement();
  }

  void from_statement() {
    next();
    const std::string module = dotted_name();
    if (!kModules.count(module)) throw Error(ErrorCode::UnknownImport, module);
    if (!at_name("import")) fail(peek(), "expected 'import'" + found());
    next();
    if (accept_op("*")) {
      if (module == "data") functions_["load"] = "data.load";
      end_statement();
      return;
    }
    const bool parens = accept_op("(");
    do {
      if (parens && at_op(")")) break;
      const Token name = expect_name();
      std::string alias = name.text;
      if (at_name("as")) {
        next();
        alias = expect_name().text;
      }
      const std::string qualified = module + "." + name.text;
      if (module == "properties") {
        if (!kBuiltins.count(name.text)) throw Error(ErrorCode::UnboundName, qualified);
        if (alias != name.text) builtin_aliases_[alias] = name.text;
      } else if (module == "data") {
        if (name.text != "load") throw Error(ErrorCode::UnboundName, qualified);
        functions_[alias] = qualified;
      } else if (auto c = math_constant(name.text)) {
        env_[alias] = make_constant(Tensor::scalar(*c));
      } else if (is_math_function(qualified)) {
        functions_[alias] = qualified;
      } else {
        throw Error(ErrorCode::UnboundName, qualified);
      }
    } while (accept_op(","));
    if (parens) expect_op(")");
    end_statement();
  }

  // expression := comparison
  ExprPtr expression() { return comparison(); }

  ExprPtr comparison() {
    static const std::map<std::string, CompareOp> ops = {{"<=", CompareOp::Le}, {"<", CompareOp::Lt},
                                                         {">=", CompareOp::Ge}, {">", CompareOp::Gt},
                                                         {"==", CompareOp::Eq}, {"!=", CompareOp::Ne}};
    std::vector<ExprPtr> operands{bit_or()};
    std::vector<CompareOp> seen;
    while (peek().kind == Tok::Op && ops.count(peek().text)) {
      seen.push_back(ops.at(next().text));
      operands.push_back(bit_or());
    }
    if (seen.empty()) return operands[0];
    if (seen.size() == 1) return make_compare(seen[0], operands[0], operands[1]);
    std::vector<ExprPtr> parts;
    for (size_t i = 0; i < seen.size(); ++i) parts.push_back(make_compare(seen[i], operands[i], operands[i + 1]));
    return make_logic(ExprKind::And, std::move(parts));
  }

  ExprPtr bit_or() {
    ExprPtr lhs = bit_and();
    while (true) {
      if (at_op("^")) fail(peek(), "operator '^' is not supported");
      if (!accept_op("|")) return lhs;
      lhs = make_logic(ExprKind::Or, {lhs, bit_and()});
    }
  }

  ExprPtr bit_and() {
    ExprPtr lhs = additive();
    while (accept_op("&")) lhs = make_logic(ExprKind::And, {lhs, additive()});
    return lhs;
  }

  ExprPtr additive() {
    ExprPtr lhs = multiplicative();
    while (true) {
      if (accept_op("+")) {
        lhs = make_arith(ArithOp::Add, lhs, multiplicative());
      } else if (accept_op("-")) {
        lhs = make_arith(ArithOp::Sub, lhs, multiplicative());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr multiplicative() {
    ExprPtr lhs = unary();
    while (true) {
      if (at_op("//") || at_op("%") || at_op("@")) fail(peek(), "operator '" + peek().text + "' is not supported");
      if (accept_op("*")) {
        lhs = make_arith(ArithOp::Mul, lhs, unary());
      } else if (accept_op("/")) {
        lhs = make_arith(ArithOp::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr unary() {
    if (accept_op("-")) {
      ExprPtr operand = unary();
      if (operand->kind == ExprKind::Constant && !operand->truth) {
        Tensor v = operand->value;
        for (auto& x : v.data()) x = -x;
        return make_constant(std::move(v));
      }
      return make_arith(ArithOp::Neg, operand);
    }
    if (accept_op("+")) return unary();
    if (accept_op("~")) return make_not(unary());
    ExprPtr e = postfix();
    if (at_op("**")) fail(peek(), "operator '**' is not supported");
    return e;
  }

  ExprPtr postfix() {
    ExprPtr e = primary();
    while (true) {
      if (at_op("(")) {
        const Token open = next();
        if (e->kind != ExprKind::Network) fail(open, "expression is not callable");
        auto args = arguments();
        if (args.size() != 1 || args[0].keyword) fail(open, "a network takes exactly one input");
        e = make_apply(e, args[0].value);
      } else if (at_op("[")) {
        next();
        e = subscript(e);
      } else if (at_op(".")) {
        fail(peek(), "attribute access is only supported on imported modules");
      } else {
        return e;
      }
    }
  }

  ExprPtr subscript(ExprPtr target) {
    std::vector<IndexItem> items;
    auto at_item_end = [&] { return at_op(":") || at_op(",") || at_op("]"); };
    do {
      if (at_op("]")) break;
      IndexItem item;
      if (at_name("None")) {
        next();
        item.kind = IndexItem::Kind::NewAxis;
      } else if (accept_op("...")) {
        item.kind = IndexItem::Kind::Ellipsis;
      } else {
        ExprPtr first = at_item_end() ? nullptr : expression();
        if (accept_op(":")) {
          item.kind = IndexItem::Kind::Slice;
          item.start = first;
          if (!at_item_end()) item.stop = expression();
          if (accept_op(":") && !at_item_end()) item.step = expression();
        } else {
          if (!first) fail(peek(), "expected an index" + found());
          item.index = first;
        }
      }
      items.push_back(std::move(item));
    } while (accept_op(","));
    expect_op("]");
    if (items.empty()) fail(peek(), "empty subscript");
    return make_index(std::move(target), std::move(items));
  }

  std::vector<Arg> arguments() {
    std::vector<Arg> args;
    while (!at_op(")")) {
      Arg arg;
      arg.token = peek();
      if (peek().kind == Tok::Name && at_op("=", 1)) {
        arg.keyword = next().text;
        next();
        if (*arg.keyword == "type") {
          arg.value = make_string(expect_name().text);
        } else {
          arg.value = expression();
        }
      } else {
        arg.value = expression();
      }
      args.push_back(std::move(arg));
      if (!accept_op(",")) break;
    }
    expect_op(")");
    return args;
  }

  ExprPtr primary() {
    const Token t = peek();
    switch (t.kind) {
      case Tok::Number: next(); return make_constant(Tensor::scalar(t.number));
      case Tok::String: next(); return make_string(t.text);
      case Tok::Name: return name_expression();
      case Tok::Op:
        if (accept_op("(")) {
          ExprPtr e = expression();
          if (at_op(",")) fail(peek(), "tuples are not supported");
          expect_op(")");
          return e;
        }
        if (accept_op("[")) {
          std::vector<ExprPtr> items;
          while (!at_op("]")) {
            items.push_back(expression());
            if (!accept_op(",")) break;
          }
          expect_op("]");
          return make_list(std::move(items));
        }
        break;
      default: break;
    }
    fail(t, "unexpected " + (t.kind == Tok::End ? std::string("end of input") : t.kind == Tok::Newline ? std::string("end of line") : "'" + t.text + "'"));
  }

  ExprPtr name_expression() {
    const Token t = next();
    const std::string& name = t.text;
    if (name == "True") return make_bool(true);
    if (name == "False") return make_bool(false);
    if (name == "None") fail(t, "None is only valid inside a subscript");
    if (std::find(scope_.begin(), scope_.end(), name) != scope_.end()) return make_symbol(name);
    if (auto it = env_.find(name); it != env_.end()) return it->second;
    if (auto it = functions_.find(name); it != functions_.end()) return function_call(t, it->second);
    if (auto it = builtin_aliases_.find(name); it != builtin_aliases_.end()) return builtin(t, it->second);
    if (kBuiltins.count(name)) return builtin(t, name);
    if (auto it = modules_.find(name); it != modules_.end()) {
      expect_op(".");
      const Token member = expect_name();
      const std::string qualified = it->second + "." + member.text;
      if (it->second == "properties") {
        if (!kBuiltins.count(member.text)) throw Error(ErrorCode::UnboundName, qualified);
        return builtin(member, member.text);
      }
      if (it->second == "math") {
        if (auto c = math_constant(member.text)) return make_constant(Tensor::scalar(*c));
        if (!is_math_function(qualified)) throw Error(ErrorCode::UnboundName, qualified);
      } else if (member.text != "load") {
        throw Error(ErrorCode::UnboundName, qualified);
      }
      return function_call(member, qualified);
    }
    throw Error(ErrorCode::UnboundName, name + " (line " + std::to_string(t.line) + ", col " + std::to_string(t.col) + ")");
  }

  ExprPtr function_call(const Token& t, const std::string& qualified) {
    if (!at_op("(")) fail(t, qualified + " must be called");
    next();
    std::vector<ExprPtr> args;
    for (auto& a : arguments()) {
      if (a.keyword) fail(a.token, qualified + " takes no keyword arguments");
      args.push_back(a.value);
    }
    if (args.size() != 1) fail(t, qualified + " takes exactly one argument");
    return make_call(qualified, std::move(args));
  }

  ExprPtr builtin(const Token& t, const std::string& name) {
    expect_op("(");
    if (name == "Forall") {
      if (!scope_.empty()) fail(t, "nested Forall is not supported");
      const Token var = expect_name();
      expect_op(",");
      scope_.push_back(var.text);
      ExprPtr body = expression();
      scope_.pop_back();
      accept_op(",");
      expect_op(")");
      return make_forall(var.text, body);
    }
    const auto args = arguments();
    auto positional = [&](size_t min, size_t max) {
      for (const auto& a : args) {
        if (a.keyword) fail(a.token, name + " takes no keyword arguments");
      }
      if (args.size() < min || args.size() > max) fail(t, name + ": wrong number of arguments");
      std::vector<ExprPtr> values;
      for (const auto& a : args) values.push_back(a.value);
      return values;
    };
    if (name == "And") return make_logic(ExprKind::And, positional(1, SIZE_MAX));
    if (name == "Or") return make_logic(ExprKind::Or, positional(1, SIZE_MAX));
    if (name == "Implies") {
      auto v = positional(2, 2);
      return make_implies(v[0], v[1]);
    }
    if (name == "Not") return make_not(positional(1, 1)[0]);
    if (name == "argmax") return make_argcmp(ArgOp::Argmax, positional(1, 1)[0]);
    if (name == "argmin") return make_argcmp(ArgOp::Argmin, positional(1, 1)[0]);
    if (name == "Network") {
      auto v = positional(1, 1);
      if (v[0]->kind != ExprKind::String) fail(t, "Network expects a name string");
      const std::string& net = v[0]->name;
      auto existing = std::find_if(out_.networks.begin(), out_.networks.end(), [&](const NetworkRef& r) { return r.name == net; });
      if (existing == out_.networks.end()) out_.networks.push_back(NetworkRef{net, nullptr, {}, {}});
      return make_network(net);
    }
    return parameter(t, args);
  }

  ExprPtr parameter(const Token& t, const std::vector<Arg>& args) {
    ParameterDecl decl;
    bool have_name = false;
    bool have_type = false;
    size_t position = 0;
    for (const auto& a : args) {
      const std::string key = a.keyword.value_or(position == 0 ? "name" : position == 1 ? "type" : "default");
      if (!a.keyword) ++position;
      if (key == "name") {
        if (a.value->kind != ExprKind::String) fail(a.token, "Parameter name must be a string");
        decl.name = a.value->name;
        have_name = true;
      } else if (key == "type") {
        const std::string type = a.value->kind == ExprKind::String ? a.value->name : "";
        if (type == "int") {
          decl.type = ParamType::Int;
        } else if (type == "float") {
          decl.type = ParamType::Float;
        } else {
          fail(a.token, "Parameter type must be int or float");
        }
        have_type = true;
      } else if (key == "default") {
        const ExprPtr& v = a.value;
        if (v->kind != ExprKind::Constant || v->truth || v->value.size() != 1) {
          fail(a.token, "Parameter default must be a number");
        }
        decl.default_value = v->value[0];
      } else {
        fail(a.token, "unknown Parameter argument '" + key + "'");
      }
    }
    if (!have_name) fail(t, "Parameter requires a name");
    if (!have_type) decl.type = ParamType::Float;
    if (decl.type == ParamType::Int && decl.default_value && *decl.default_value != std::floor(*decl.default_value)) {
      fail(t, "default of int Parameter \"" + decl.name + "\" is not an integer");
    }
    auto existing = std::find_if(out_.parameters.begin(), out_.parameters.end(),
                                 [&](const ParameterDecl& p) { return p.name == decl.name; });
    if (existing == out_.parameters.end()) {
      out_.parameters.push_back(decl);
    } else if (existing->type != decl.type || existing->default_value != decl.default_value) {
      fail(t, "conflicting declarations of Parameter \"" + decl.name + "\"");
    }
    return make_parameter(decl.name);
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
  std::map<std::string, ExprPtr> env_;
  std::map<std::string, std::string> modules_;
  std::map<std::string, std::string> functions_;
  std::map<std::string, std::string> builtin_aliases_;
  std::vector<std::string> scope_;
  ParsedProperty out_;
};

}  // namespace

ParsedProperty parse_dnnp(std::string_view text, const std::filesystem::path& base_dir) {
  return Parser(tokenize(text), base_dir).run();
}

ParsedProperty parse_dnnp_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_dnnp(text.str(), path.parent_path());
}

// ---------------------------------------------------------------- binding

std::vector<ParameterDecl> resolve_parameters(const ParsedProperty& parsed, const ParameterValues& values) {
  std::vector<ParameterDecl> out = parsed.parameters;
  for (auto& p : out) {
    auto it = values.find(p.name);
    if (it == values.end()) {
      if (!p.default_value) throw Error(ErrorCode::MissingParameter, p.name);
      p.value = p.default_value;
      continue;
    }
    const std::string& text = it->second;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (p.type == ParamType::Int) {
      int64_t v = 0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) {
        throw Error(ErrorCode::TypeError, "parameter " + p.name + " expects an int, got '" + text + "'");
      }
      p.value = static_cast<double>(v);
    } else {
      double v = 0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || text.empty()) {
        throw Error(ErrorCode::TypeError, "parameter " + p.name + " expects a float, got '" + text + "'");
      }
      p.value = v;
    }
  }
  return out;
}

EvalContext make_context(const ParsedProperty& parsed, const ParameterValues& values, const NetworkMap& networks) {
  EvalContext ctx;
  ctx.base_dir = parsed.base_dir;
  for (const auto& p : resolve_parameters(parsed, values)) ctx.parameters[p.name] = *p.value;
  for (const auto& ref : parsed.networks) {
    auto it = networks.find(ref.name);
    if (it == networks.end() || !it->second) throw Error(ErrorCode::MissingNetwork, ref.name);
    ctx.networks[ref.name] = it->second;
  }
  return ctx;
}

namespace {

const Shape& network_input_shape(const NetworkPtr& net, const std::string& name) {
  if (net->inputs().size() != 1) throw Error(ErrorCode::TypeError, "network " + name + " must have exactly one input");
  return net->op(net->inputs()[0]).shape;
}

class Binder {
 public:
  explicit Binder(const EvalContext& ctx) : ctx_(ctx) {}

  ExprPtr run(const ExprPtr& root) {
    find_symbol_shape(*root);
    if (!shape_) shape_ = fallback_;
    return rebuild(root);
  }

 private:
  void find_symbol_shape(const Expr& e) {
    if (e.kind == ExprKind::NetworkApply && e.children[1]->kind == ExprKind::Symbol) {
      const Shape& shape = network_input_shape(ctx_.networks.at(e.name), e.name);
      if (shape_ && *shape_ != shape) {
        throw Error(ErrorCode::ShapeMismatch, "networks disagree on the shape of " + e.children[1]->name + ": " +
                                                  shape_to_string(*shape_) + " vs " + shape_to_string(shape));
      }
      shape_ = shape;
    } else if (e.kind == ExprKind::NetworkApply && contains_symbol(*e.children[1]) && !fallback_) {
      // A transformed symbol is rejected later; its shape is still needed to get there.
      fallback_ = network_input_shape(ctx_.networks.at(e.name), e.name);
    }
    for (const auto& c : e.children) find_symbol_shape(*c);
  }

  ExprPtr rebuild(const ExprPtr& e) {
    if (!e) return e;
    auto copy = std::make_shared<Expr>(*e);
    for (auto& c : copy->children) c = rebuild(c);
    for (auto& item : copy->items) {
      item.index = rebuild(item.index);
      item.start = rebuild(item.start);
      item.stop = rebuild(item.stop);
      item.step = rebuild(item.step);
    }
    switch (copy->kind) {
      case ExprKind::Parameter: return make_constant(Tensor::scalar(ctx_.parameters.at(copy->name)));
      case ExprKind::Network: copy->network = ctx_.networks.at(copy->name); return copy;
      case ExprKind::NetworkApply: copy->network = copy->children[0]->network; break;
      case ExprKind::Symbol:
      case ExprKind::Forall:
        if (!shape_) throw Error(ErrorCode::TypeError, "the shape of " + copy->name + " is unknown: it is never passed to a network");
        copy->shape = *shape_;
        return copy;
      case ExprKind::Constant:
      case ExprKind::String:
      case ExprKind::Atom: return copy;
      default: break;
    }
    if (contains_symbol(*copy)) return copy;
    const Value v = evaluate(copy, ctx_);
    if (const auto* b = std::get_if<bool>(&v)) return make_bool(*b);
    if (const auto* t = std::get_if<Tensor>(&v)) return make_constant(*t);
    return copy;
  }

  const EvalContext& ctx_;
  std::optional<Shape> shape_;
  std::optional<Shape> fallback_;
};

}  // namespace

ExprPtr bind(const ParsedProperty& parsed, const ParameterValues& values, const NetworkMap& networks) {
  const EvalContext ctx = make_context(parsed, values, networks);
  return Binder(ctx).run(parsed.expr);
}

// ---------------------------------------------------------------- canonical form

namespace {

// One element of a tensor that is affine in the input (x) and output (y)
// components. Empty coefficient vectors mean all-zero.
struct Affine {
  std::vector<double> x;
  std::vector<double> y;
  double c = 0.0;

  bool constant() const {
    auto zero = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double a) { return a == 0.0; }); };
    return zero(x) && zero(y);
  }
};

struct AffineTensor {
  Shape shape;
  std::vector<Affine> elems;
};

std::vector<double> combine(const std::vector<double>& a, const std::vector<double>& b, double sign) {
  if (a.empty() && b.empty()) return {};
  const size_t n = std::max(a.size(), b.size());
  std::vector<double> out(n, 0.0);
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i];
  for (size_t i = 0; i < b.size(); ++i) out[i] = sign > 0 ? out[i] + b[i] : out[i] - b[i];
  return out;
}

Comparator to_comparator(CompareOp op) {
  switch (op) {
    case CompareOp::Le: return Comparator::Le;
    case CompareOp::Lt: return Comparator::Lt;
    case CompareOp::Ge: return Comparator::Ge;
    case CompareOp::Gt: return Comparator::Gt;
    default: break;
  }
  throw Error(ErrorCode::TypeError, "not an inequality");
}

Comparator mirror(Comparator c) {
  switch (c) {
    case Comparator::Le: return Comparator::Ge;
    case Comparator::Lt: return Comparator::Gt;
    case Comparator::Ge: return Comparator::Le;
    case Comparator::Gt: return Comparator::Lt;
  }
  return c;
}

ExprPtr conjunction(std::vector<ExprPtr> parts, ExprKind kind) {
  if (parts.size() == 1) return parts[0];
  if (parts.empty()) return make_bool(kind == ExprKind::And);
  return make_logic(kind, std::move(parts));
}

class Canonicalizer {
 public:
  Canonicalizer(NetworkPtr network, int64_t inputs, int64_t outputs)
      : network_(std::move(network)), n_(inputs), m_(outputs) {}

  ExprPtr formula(const ExprPtr& e) {
    switch (e->kind) {
      case ExprKind::Constant:
        if (e->truth) return e;
        throw Error(ErrorCode::TypeError, "expected a formula, found a tensor");
      case ExprKind::And:
      case ExprKind::Or:
      case ExprKind::Implies:
      case ExprKind::Not: {
        std::vector<ExprPtr> children;
        for (const auto& c : e->children) children.push_back(formula(c));
        if (e->kind == ExprKind::Not) return make_not(children[0]);
        if (e->kind == ExprKind::Implies) return make_implies(children[0], children[1]);
        return conjunction(std::move(children), e->kind);
      }
      case ExprKind::Compare: return compare(*e);
      default: throw Error(ErrorCode::TypeError, std::string(to_string(e->kind)) + " is not a formula");
    }
  }

 private:
  AffineTensor affine(const ExprPtr& e) {
    switch (e->kind) {
      case ExprKind::Constant: {
        if (e->truth) throw Error(ErrorCode::TypeError, "a truth value is not a tensor");
        AffineTensor out{e->value.shape(), {}};
        for (double v : e->value.data()) out.elems.push_back(Affine{{}, {}, v});
        return out;
      }
      case ExprKind::Symbol: return unit(e->shape, true);
      case ExprKind::NetworkApply: {
        if (e->children[1]->kind != ExprKind::Symbol) {
          throw Error(ErrorCode::NonlinearAtom, "a network may only be applied to the quantified variable itself");
        }
        return unit(network_->op(network_->outputs()[0]).shape, false);
      }
      case ExprKind::Arith: return arith(*e);
      case ExprKind::Index: return index(*e);
      case ExprKind::List: {
        AffineTensor out;
        for (const auto& c : e->children) {
          AffineTensor item = affine(c);
          if (!out.elems.empty() && item.shape != out.shape) {
            throw Error(ErrorCode::ShapeMismatch, "list elements must share a shape");
          }
          out.shape = item.shape;
          out.elems.insert(out.elems.end(), item.elems.begin(), item.elems.end());
        }
        out.shape.insert(out.shape.begin(), static_cast<int64_t>(e->children.size()));
        return out;
      }
      case ExprKind::ArgCmp:
        throw Error(ErrorCode::NonlinearAtom, "argmax/argmin of a symbolic tensor must be compared with == or != to a constant");
      case ExprKind::Call: throw Error(ErrorCode::NonlinearAtom, e->name + " applied to a symbolic term");
      default: throw Error(ErrorCode::TypeError, std::string(to_string(e->kind)) + " is not a tensor expression");
    }
  }

  AffineTensor unit(const Shape& shape, bool input) {
    AffineTensor out{shape, {}};
    const int64_t count = element_count(shape);
    for (int64_t i = 0; i < count; ++i) {
      Affine a;
      auto& v = input ? a.x : a.y;
      v.assign(static_cast<size_t>(input ? n_ : m_), 0.0);
      v[static_cast<size_t>(i)] = 1.0;
      out.elems.push_back(std::move(a));
    }
    return out;
  }

  template <typename F>
  AffineTensor zip(const AffineTensor& a, const AffineTensor& b, F f) {
    AffineTensor out{broadcast_shapes(a.shape, b.shape), {}};
    BroadcastIndexer ia(a.shape, out.shape);
    BroadcastIndexer ib(b.shape, out.shape);
    const int64_t count = element_count(out.shape);
    for (int64_t i = 0; i < count; ++i) {
      out.elems.push_back(f(a.elems[static_cast<size_t>(ia(i))], b.elems[static_cast<size_t>(ib(i))]));
    }
    return out;
  }

  static Affine scaled(const Affine& a, double k, bool divide) {
    Affine out = a;
    auto apply = [&](double v) { return divide ? v / k : v * k; };
    for (auto& v : out.x) v = apply(v);
    for (auto& v : out.y) v = apply(v);
    out.c = apply(out.c);
    return out;
  }

  AffineTensor arith(const Expr& e) {
    AffineTensor a = affine(e.children[0]);
    if (e.arith == ArithOp::Neg) {
      for (auto& v : a.elems) v = scaled(v, -1.0, false);
      return a;
    }
    AffineTensor b = affine(e.children[1]);
    switch (e.arith) {
      case ArithOp::Add:
      case ArithOp::Sub: {
        const double sign = e.arith == ArithOp::Add ? 1.0 : -1.0;
        return zip(a, b, [&](const Affine& p, const Affine& q) {
          return Affine{combine(p.x, q.x, sign), combine(p.y, q.y, sign), sign > 0 ? p.c + q.c : p.c - q.c};
        });
      }
      case ArithOp::Mul:
        return zip(a, b, [&](const Affine& p, const Affine& q) {
          if (p.constant()) return scaled(q, p.c, false);
          if (q.constant()) return scaled(p, q.c, false);
          throw Error(ErrorCode::NonlinearAtom, "product of two symbolic terms");
        });
      case ArithOp::Div:
        return zip(a, b, [&](const Affine& p, const Affine& q) {
          if (!q.constant()) throw Error(ErrorCode::NonlinearAtom, "division by a symbolic term");
          if (q.c == 0.0) throw Error(ErrorCode::NonlinearAtom, "division by zero");
          return scaled(p, q.c, true);
        });
      case ArithOp::Neg: break;
    }
    return a;
  }

  AffineTensor index(const Expr& e) {
    const AffineTensor target = affine(e.children[0]);
    const EvalContext empty;
    auto integer = [&](const ExprPtr& p) -> int64_t {
      if (contains_symbol(*p)) throw Error(ErrorCode::NonlinearAtom, "symbolic index");
      const Tensor t = std::get<Tensor>(evaluate(p, empty));
      if (t.size() != 1 || t[0] != std::floor(t[0])) throw Error(ErrorCode::TypeError, "index must be an integer");
      return static_cast<int64_t>(t[0]);
    };
    std::vector<ResolvedIndex> items;
    for (const auto& item : e.items) {
      ResolvedIndex r;
      r.kind = item.kind;
      if (item.kind == IndexItem::Kind::Index) r.index = integer(item.index);
      if (item.start) r.start = integer(item.start);
      if (item.stop) r.stop = integer(item.stop);
      if (item.step) r.step = integer(item.step);
      items.push_back(r);
    }
    const IndexMap map = index_map(target.shape, items);
    AffineTensor out{map.shape, {}};
    for (int64_t s : map.source) out.elems.push_back(target.elems[static_cast<size_t>(s)]);
    return out;
  }

  // lhs (cmp) rhs as a canonical atom, or a truth constant when no variable remains.
  ExprPtr atom(const Affine& lhs_in, const Affine& rhs_in, Comparator cmp) const {
    const Affine* lhs = &lhs_in;
    const Affine* rhs = &rhs_in;
    if (lhs->constant() && !rhs->constant()) {
      std::swap(lhs, rhs);
      cmp = mirror(cmp);
    }
    auto x = combine(lhs->x, rhs->x, -1.0);
    auto y = combine(lhs->y, rhs->y, -1.0);
    const double constant = rhs->c - lhs->c;
    auto nonzero = [](const std::vector<double>& v) { return std::any_of(v.begin(), v.end(), [](double a) { return a != 0.0; }); };
    const bool has_x = nonzero(x);
    const bool has_y = nonzero(y);
    if (has_x && has_y) throw Error(ErrorCode::MixedAtom, "an inequality may not mix input and output components");
    if (!has_x && !has_y) {
      LinearAtom trivial{VarSpace::Input, {0.0}, cmp, constant};
      return make_bool(trivial.holds(std::vector<double>{0.0}));
    }
    LinearAtom a;
    a.space = has_x ? VarSpace::Input : VarSpace::Output;
    a.coefficients = has_x ? std::move(x) : std::move(y);
    a.coefficients.resize(static_cast<size_t>(has_x ? n_ : m_), 0.0);
    a.cmp = cmp;
    a.constant = constant;
    return make_atom(std::move(a));
  }

  ExprPtr compare(const Expr& e) {
    const ExprPtr& l = e.children[0];
    const ExprPtr& r = e.children[1];
    if (l->kind == ExprKind::ArgCmp || r->kind == ExprKind::ArgCmp) {
      const bool left = l->kind == ExprKind::ArgCmp;
      return arg_compare(*(left ? l : r), left ? r : l, e.compare);
    }
    const AffineTensor a = affine(l);
    const AffineTensor b = affine(r);
    std::vector<ExprPtr> parts;
    Shape shape = broadcast_shapes(a.shape, b.shape);
    BroadcastIndexer ia(a.shape, shape);
    BroadcastIndexer ib(b.shape, shape);
    for (int64_t i = 0; i < element_count(shape); ++i) {
      const Affine& p = a.elems[static_cast<size_t>(ia(i))];
      const Affine& q = b.elems[static_cast<size_t>(ib(i))];
      switch (e.compare) {
        case CompareOp::Eq: parts.push_back(conjunction({atom(p, q, Comparator::Le), atom(p, q, Comparator::Ge)}, ExprKind::And)); break;
        case CompareOp::Ne: parts.push_back(conjunction({atom(p, q, Comparator::Lt), atom(p, q, Comparator::Gt)}, ExprKind::Or)); break;
        default: parts.push_back(atom(p, q, to_comparator(e.compare))); break;
      }
    }
    return conjunction(std::move(parts), e.compare == CompareOp::Ne ? ExprKind::Or : ExprKind::And);
  }

  ExprPtr arg_compare(const Expr& arg, const ExprPtr& other, CompareOp op) {
    if (other->kind != ExprKind::Constant || other->truth || other->value.size() != 1) {
      throw Error(ErrorCode::NonlinearAtom, "argmax/argmin must be compared with a constant");
    }
    if (op != CompareOp::Eq && op != CompareOp::Ne) {
      throw Error(ErrorCode::NonlinearAtom, "argmax/argmin only supports == and !=");
    }
    const AffineTensor t = affine(arg.children[0]);
    const double c = other->value[0];
    const auto count = static_cast<int64_t>(t.elems.size());
    if (c != std::floor(c) || c < 0 || c >= static_cast<double>(count)) return make_bool(op == CompareOp::Ne);
    const auto k = static_cast<size_t>(c);
    const bool max = arg.arg == ArgOp::Argmax;
    std::vector<ExprPtr> parts;
    for (size_t j = 0; j < t.elems.size(); ++j) {
      if (j == k) continue;
      if (op == CompareOp::Eq) {
        parts.push_back(atom(t.elems[k], t.elems[j], max ? Comparator::Gt : Comparator::Lt));
      } else {
        parts.push_back(atom(t.elems[k], t.elems[j], max ? Comparator::Le : Comparator::Ge));
      }
    }
    return conjunction(std::move(parts), op == CompareOp::Eq ? ExprKind::And : ExprKind::Or);
  }

  NetworkPtr network_;
  int64_t n_;
  int64_t m_;
};

void collect_networks(const Expr& e, std::vector<NetworkPtr>& out) {
  if (e.kind == ExprKind::NetworkApply) {
    if (!e.network) throw Error(ErrorCode::MissingNetwork, e.name);
    if (std::find(out.begin(), out.end(), e.network) == out.end()) out.push_back(e.network);
  }
  for (const auto& c : e.children) collect_networks(*c, out);
}

}  // namespace

ExprPtr canonicalize(const ExprPtr& bound) {
  if (!bound || bound->kind != ExprKind::Forall) throw Error(ErrorCode::TypeError, "property must be a Forall");
  std::vector<NetworkPtr> networks;
  collect_networks(*bound, networks);
  if (networks.empty()) throw Error(ErrorCode::TypeError, "property does not apply any network to " + bound->name);
  if (networks.size() > 1) throw Error(ErrorCode::TypeError, "properties over more than one network are not supported");
  const NetworkPtr& net = networks[0];
  if (net->outputs().size() != 1) throw Error(ErrorCode::TypeError, "the network must have exactly one output");
  const int64_t n = element_count(bound->shape);
  const int64_t m = element_count(net->op(net->outputs()[0]).shape);
  Canonicalizer c(net, n, m);
  return make_forall(bound->name, c.formula(bound->children[0]), bound->shape, net);
}

}  // namespace verif

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <regex>
#include <sstream>

#include "verif/backends.hpp"
#include "verif/error.hpp"

namespace verif {

std::string_view to_string(Status status) {
  switch (status) {
    case Status::Sat: return "sat";
    case Status::Unsat: return "unsat";
    case Status::Unknown: return "unknown";
    case Status::Error: return "error";
  }
  return "?";
}

VerifierOutcome VerifierOutcome::sat(Tensor x) {
  VerifierOutcome o;
  o.status = Status::Sat;
  o.counterexample = std::move(x);
  return o;
}

VerifierOutcome VerifierOutcome::unsat() {
  VerifierOutcome o;
  o.status = Status::Unsat;
  return o;
}

VerifierOutcome VerifierOutcome::unknown() { return VerifierOutcome{}; }

VerifierOutcome VerifierOutcome::error(std::string reason) {
  VerifierOutcome o;
  o.status = Status::Error;
  o.reason = std::move(reason);
  return o;
}

namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// Numbers separated by whitespace, commas or brackets; nullopt when any token
// is not a number.
std::optional<std::vector<double>> parse_numbers(const std::string& line) {
  std::string cleaned = line;
  for (auto& c : cleaned) {
    if (c == ',' || c == '[' || c == ']' || c == '(' || c == ')') c = ' ';
  }
  std::istringstream in(cleaned);
  std::vector<double> out;
  for (std::string tok; in >> tok;) {
    const auto v = parse_double(tok);
    if (!v) return std::nullopt;
    out.push_back(*v);
  }
  return out;
}

std::optional<Status> status_word(const std::string& word) {
  static const std::map<std::string, Status> table{
      {"sat", Status::Sat},         {"unsat", Status::Unsat},     {"unknown", Status::Unknown},
      {"timeout", Status::Unknown}, {"violated", Status::Sat},    {"holds", Status::Unsat},
  };
  const auto it = table.find(lower(word));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::string failure_reason(std::string_view text, int exit_code) {
  std::string tail = trim(text);
  if (tail.size() > 400) tail = "..." + tail.substr(tail.size() - 400);
  std::string reason = "verifier exited with code " + std::to_string(exit_code);
  if (exit_code == 0) reason = "unrecognized verifier output";
  if (!tail.empty()) reason += ": " + tail;
  return reason;
}

VerifierOutcome finish(std::optional<Status> status, std::optional<std::vector<double>> cex, std::string_view text,
                       int exit_code) {
  if (!status) return VerifierOutcome::error(failure_reason(text, exit_code));
  switch (*status) {
    case Status::Sat:
      if (!cex || cex->empty()) return VerifierOutcome::error("verifier reported sat without a counterexample");
      return VerifierOutcome::sat(Tensor::vector(std::move(*cex)));
    case Status::Unsat: return VerifierOutcome::unsat();
    default: return VerifierOutcome::unknown();
  }
}

// Status line: a bare status word or "result: <word>". Counterexample: a line
// "counterexample:" followed by numbers on that line and any following lines
// that hold only numbers.
VerifierOutcome parse_generic(std::string_view text, int exit_code) {
  const auto lines = lines_of(text);
  std::optional<Status> status;
  std::optional<std::vector<double>> cex;
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string line = trim(lines[i]);
    const std::string low = lower(line);
    if (!status) {
      std::string word = low;
      if (word.rfind("result:", 0) == 0) word = trim(word.substr(7));
      status = status_word(word);
      if (status) continue;
    }
    if (low.rfind("counterexample:", 0) == 0) {
      std::vector<double> values;
      auto first = parse_numbers(line.substr(15));
      if (!first) return VerifierOutcome::error("malformed counterexample: " + line);
      values = *first;
      while (i + 1 < lines.size()) {
        const std::string next = trim(lines[i + 1]);
        if (next.empty()) break;
        const auto more = parse_numbers(next);
        if (!more) break;
        values.insert(values.end(), more->begin(), more->end());
        ++i;
      }
      cex = std::move(values);
    }
  }
  return finish(status, std::move(cex), text, exit_code);
}

// Collects "name<i> value" pairs into a dense vector; missing indices are an error.
std::optional<std::vector<double>> dense_assignment(const std::map<int64_t, double>& values) {
  if (values.empty()) return std::nullopt;
  std::vector<double> out;
  for (const auto& [index, v] : values) {
    if (index != static_cast<int64_t>(out.size())) return std::vector<double>{};
    out.push_back(v);
  }
  return out;
}

// Planet prints SAT or UNSAT, then a valuation with lines "- inX3: 0.25".
// A trailing " / <value>" on a valuation line is ignored.
VerifierOutcome parse_planet(std::string_view text, int exit_code) {
  static const std::regex valuation(R"(^\s*-\s*inX(\d+)\s*:\s*(\S+))");
  std::optional<Status> status;
  std::map<int64_t, double> values;
  for (const auto& raw : lines_of(text)) {
    const std::string line = trim(raw);
    if (!status) {
      if (line == "SAT") status = Status::Sat;
      if (line == "UNSAT") status = Status::Unsat;
      if (status) continue;
    }
    std::smatch m;
    if (std::regex_search(line, m, valuation)) {
      if (const auto v = parse_double(m[2].str())) values[std::stoll(m[1].str())] = *v;
    }
  }
  return finish(status, dense_assignment(values), text, exit_code);
}

// VNN-COMP style: first non-empty line is the status word, followed by an
// assignment "((X_0 0.25) (X_1 -1) (Y_0 ...))" that may span lines.
VerifierOutcome parse_vnnlib(std::string_view text, int exit_code) {
  static const std::regex pair(R"(\(\s*X_(\d+)\s+([^\s()]+)\s*\))");
  std::optional<Status> status;
  for (const auto& raw : lines_of(text)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    status = status_word(line);
    break;
  }
  std::map<int64_t, double> values;
  const std::string body(text);
  for (auto it = std::sregex_iterator(body.begin(), body.end(), pair); it != std::sregex_iterator(); ++it) {
    if (const auto v = parse_double((*it)[2].str())) values[std::stoll((*it)[1].str())] = *v;
  }
  return finish(status, dense_assignment(values), text, exit_code);
}

}  // namespace

bool is_known_parser(std::string_view parser) {
  return parser == "generic" || parser == "planet" || parser == "vnnlib";
}

VerifierOutcome parse_verifier_output(std::string_view parser, std::string_view stdout_text, int exit_code) {
  if (parser == "generic") return parse_generic(stdout_text, exit_code);
  if (parser == "planet") return parse_planet(stdout_text, exit_code);
  if (parser == "vnnlib") return parse_vnnlib(stdout_text, exit_code);
  throw Error(ErrorCode::UnknownBackend, "no output parser named '" + std::string(parser) + "'");
}

const std::vector<BackendDescriptor>& builtin_backends() {
  static const std::vector<BackendDescriptor> table{
      {"ibp", NetworkShape::General, InputSupport::Halfspace, {}},
      {"sample", NetworkShape::General, InputSupport::Halfspace, {}},
      {"nnet", NetworkShape::SequentialRelu, InputSupport::Box, {".nnet"}},
      {"rlv", NetworkShape::SequentialRelu, InputSupport::Halfspace, {".rlv"}},
      {"vnnlib", NetworkShape::General, InputSupport::Halfspace, {".onnx", ".vnnlib"}},
  };
  return table;
}

const BackendDescriptor* find_backend(std::string_view name) {
  for (const auto& d : builtin_backends()) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

}  // namespace verif

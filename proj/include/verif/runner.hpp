#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "verif/backends.hpp"
#include "verif/dnnp.hpp"

namespace verif {

// ---- plugins ----------------------------------------------------------------

/// A verifier the runner can dispatch to. Built-in plugins ("ibp", "sample")
/// run in process; external plugins are executables fed files in `format`.
struct VerifierPlugin {
  BackendDescriptor descriptor;
  std::string format;                  // nnet, rlv or vnnlib; empty for built-ins
  std::filesystem::path executable;
  std::vector<std::string> arguments;  // may contain {network} {property} {timeout} {dir} {problem}
  std::string parser = "generic";
  double timeout = 60.0;               // seconds per reduced problem

  bool builtin() const { return format.empty(); }
};

class PluginRegistry {
 public:
  /// Registry holding only "ibp" and "sample".
  static PluginRegistry builtins();
  /// Built-ins plus every registry file found on the search path.
  static PluginRegistry load_default();

  /// Throws PluginError for a duplicate name or a missing executable.
  void add(VerifierPlugin plugin);
  /// Adds the plugins of a registry file; names already present are kept.
  void load_file(const std::filesystem::path& path);

  const VerifierPlugin* find(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, VerifierPlugin> plugins_;
};

/// Registry files searched in order: entries of VERIF_PLUGIN_PATH (colon
/// separated; a directory means <dir>/plugins.ini), then
/// $XDG_CONFIG_HOME/verif/plugins.ini or ~/.config/verif/plugins.ini.
std::vector<std::filesystem::path> plugin_search_path();

// ---- processes --------------------------------------------------------------

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  bool spawn_failed = false;
  std::string out;
  std::string err;
};

/// Runs argv[0] with the given arguments, capturing output. A positive timeout
/// kills the process group when it expires.
ProcessResult run_process(const std::vector<std::string>& argv, double timeout_seconds,
                          const std::filesystem::path& cwd = {});

// ---- running ----------------------------------------------------------------

struct VerificationProblem {
  ExprPtr original;      // property as parsed, for counterexample validation
  EvalContext context;   // parameters and networks for `original`
  ExprPtr canonical;     // canonical form over the unsimplified network

  static VerificationProblem from(const ParsedProperty& parsed, const ParameterValues& params,
                                  const NetworkMap& networks);
  const Shape& input_shape() const { return canonical->shape; }
};

/// True when x violates the original property under the reference interpreter.
/// Throws ShapeMismatch when x does not have the network input shape.
bool validate_counterexample(const VerificationProblem& problem, const Tensor& x);

/// Any sat wins, then all unsat, then any error, else unknown. Empty is unsat.
Status aggregate(const std::vector<VerifierOutcome>& outcomes);

struct RunOptions {
  uint64_t seed = 0;
  double timeout = 0.0;          // overrides the plugin timeout when positive
  size_t jobs = 1;
  uint64_t sample_budget = 100000;
  bool simplify = true;
  std::filesystem::path work_dir;  // translated files; a fresh temp dir when empty
  bool keep_files = false;
};

struct ProblemReport {
  size_t disjunct = 0;
  VerifierOutcome outcome;
};

struct RunReport {
  Status status = Status::Unknown;
  std::optional<Tensor> counterexample;  // validated, shaped like the network input
  std::optional<std::string> reason;
  size_t reduced_problems = 0;
  std::vector<ProblemReport> problems;   // dispatched problems, by disjunct index
  double translation_time = 0.0;
  double verification_time = 0.0;
};

/// simplify, reduce, translate and dispatch every reduced problem, validate
/// any counterexample, aggregate. Stops dispatching after the first validated
/// sat in disjunct order. Never throws for verifier or pipeline failures.
RunReport run(const VerificationProblem& problem, const VerifierPlugin& plugin, const RunOptions& options = {});

}  // namespace verif

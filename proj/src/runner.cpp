#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <limits>
#include <mutex>
#include <thread>

#include "verif/error.hpp"
#include "verif/runner.hpp"
#include "verif/simplify.hpp"

namespace verif {

VerificationProblem VerificationProblem::from(const ParsedProperty& parsed, const ParameterValues& params,
                                              const NetworkMap& networks) {
  VerificationProblem p;
  p.original = parsed.expr;
  p.context = make_context(parsed, params, networks);
  p.canonical = canonicalize(bind(parsed, params, networks));
  return p;
}

bool validate_counterexample(const VerificationProblem& problem, const Tensor& x) {
  if (x.shape() != problem.input_shape()) {
    throw Error(ErrorCode::ShapeMismatch, "counterexample has shape " + shape_to_string(x.shape()) +
                                              ", network input is " + shape_to_string(problem.input_shape()));
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) return false;
  }
  return !holds_at(problem.original, x, problem.context);
}

Status aggregate(const std::vector<VerifierOutcome>& outcomes) {
  bool all_unsat = true, any_error = false;
  for (const auto& o : outcomes) {
    if (o.status == Status::Sat) return Status::Sat;
    all_unsat = all_unsat && o.status == Status::Unsat;
    any_error = any_error || o.status == Status::Error;
  }
  if (all_unsat) return Status::Unsat;
  return any_error ? Status::Error : Status::Unknown;
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string error_text(const std::exception& e) { return e.what(); }

class TempDir {
 public:
  TempDir(const std::filesystem::path& requested, bool keep) : keep_(keep || !requested.empty()) {
    if (!requested.empty()) {
      path_ = requested;
      std::filesystem::create_directories(path_);
      return;
    }
    std::string templ = (std::filesystem::temp_directory_path() / "verif-XXXXXX").string();
    if (::mkdtemp(templ.data()) == nullptr) throw Error(ErrorCode::IoError, "cannot create a temporary directory");
    path_ = templ;
  }
  ~TempDir() {
    if (keep_) return;
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  bool keep_;
};

std::string substitute(std::string arg, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    for (size_t pos = arg.find(token); pos != std::string::npos; pos = arg.find(token, pos + value.size())) {
      arg.replace(pos, token.size(), value);
    }
  }
  return arg;
}

std::string format_seconds(double s) {
  std::ostringstream out;
  out << s;
  return out.str();
}

VerifierOutcome dispatch_external(const ReducedProblem& rp, const VerifierPlugin& plugin, double timeout,
                                  const std::filesystem::path& dir) {
  const auto start = Clock::now();
  const std::string stem = "problem_" + std::to_string(rp.disjunct);
  std::filesystem::path network, property;
  try {
    if (plugin.format == "nnet") {
      network = property = dir / (stem + ".nnet");
      write_nnet(rp, network);
    } else if (plugin.format == "rlv") {
      network = property = dir / (stem + ".rlv");
      write_rlv(rp, network);
    } else {
      network = dir / (stem + ".onnx");
      property = dir / (stem + ".vnnlib");
      write_vnnlib(rp, network, property);
    }
  } catch (const Error& e) {
    auto o = VerifierOutcome::error(error_text(e));
    o.translation_time = since(start);
    return o;
  }
  const double translated = since(start);

  const std::map<std::string, std::string> values{{"network", network.string()},
                                                  {"property", property.string()},
                                                  {"timeout", format_seconds(timeout)},
                                                  {"dir", dir.string()},
                                                  {"problem", std::to_string(rp.disjunct)}};
  std::vector<std::string> argv{plugin.executable.string()};
  for (const auto& a : plugin.arguments) argv.push_back(substitute(a, values));
  const auto verify_start = Clock::now();
  const ProcessResult pr = run_process(argv, timeout, dir);
  VerifierOutcome o;
  if (pr.timed_out) {
    o = VerifierOutcome::unknown();
  } else if (pr.spawn_failed || pr.exit_code == 127) {
    o = VerifierOutcome::error("executable not found or failed: " + plugin.executable.string());
  } else {
    o = parse_verifier_output(plugin.parser, pr.out, pr.exit_code);
  }
  o.translation_time = translated;
  o.verification_time = since(verify_start);
  return o;
}

}  // namespace

RunReport run(const VerificationProblem& problem, const VerifierPlugin& plugin, const RunOptions& options) {
  RunReport report;
  const auto start = Clock::now();
  std::vector<ReducedProblem> reduced;
  try {
    auto canonical = std::make_shared<Expr>(*problem.canonical);
    if (options.simplify) {
      canonical->network = std::make_shared<const OperationGraph>(simplify(*problem.canonical->network).graph);
    }
    reduced = reduce(canonical);
  } catch (const std::exception& e) {
    report.status = Status::Error;
    report.reason = error_text(e);
    report.translation_time = since(start);
    return report;
  }
  report.reduced_problems = reduced.size();
  report.translation_time = since(start);

  std::optional<TempDir> dir;
  if (!plugin.builtin()) {
    try {
      dir.emplace(options.work_dir, options.keep_files);
    } catch (const std::exception& e) {
      report.status = Status::Error;
      report.reason = error_text(e);
      return report;
    }
  }
  const double timeout = options.timeout > 0 ? options.timeout : plugin.timeout;

  auto solve = [&](const ReducedProblem& rp) -> VerifierOutcome {
    VerifierOutcome o;
    try {
      if (plugin.descriptor.name == "ibp" && plugin.builtin()) {
        o = ibp_verify(rp, timeout);
      } else if (plugin.builtin()) {
        o = sample_falsify(rp, options.sample_budget, options.seed + rp.disjunct);
      } else {
        o = dispatch_external(rp, plugin, timeout, dir->path());
      }
    } catch (const std::exception& e) {
      return VerifierOutcome::error(error_text(e));
    }
    if (o.status != Status::Sat) return o;
    // Verifiers report flat vectors; restore the input shape before validating.
    Tensor x = *o.counterexample;
    const int64_t expected = element_count(problem.input_shape());
    if (x.size() != expected) {
      auto bad = VerifierOutcome::error("unvalidated counterexample: " + std::to_string(x.size()) +
                                        " values for an input of " + std::to_string(expected));
      bad.translation_time = o.translation_time;
      bad.verification_time = o.verification_time;
      return bad;
    }
    x = x.reshaped(problem.input_shape());
    bool valid = false;
    try {
      valid = validate_counterexample(problem, x);
    } catch (const std::exception&) {
      valid = false;
    }
    if (!valid) {
      auto bad = VerifierOutcome::error("unvalidated counterexample");
      bad.translation_time = o.translation_time;
      bad.verification_time = o.verification_time;
      return bad;
    }
    o.counterexample = std::move(x);
    return o;
  };

  // Workers take problems in disjunct order and skip anything after the first
  // validated sat, so the reported counterexample does not depend on `jobs`.
  std::vector<std::optional<VerifierOutcome>> outcomes(reduced.size());
  std::atomic<size_t> next{0};
  std::atomic<size_t> first_sat{std::numeric_limits<size_t>::max()};
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= reduced.size() || i > first_sat.load()) return;
      VerifierOutcome o = solve(reduced[i]);
      if (o.status == Status::Sat) {
        size_t cur = first_sat.load();
        while (i < cur && !first_sat.compare_exchange_weak(cur, i)) {
        }
      }
      std::lock_guard<std::mutex> lock(mu);
      outcomes[i] = std::move(o);
    }
  };
  const size_t jobs = std::max<size_t>(1, std::min(options.jobs, reduced.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<VerifierOutcome> dispatched;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i] || i > first_sat.load()) continue;
    report.translation_time += outcomes[i]->translation_time;
    report.verification_time += outcomes[i]->verification_time;
    report.problems.push_back({i, *outcomes[i]});
    dispatched.push_back(*outcomes[i]);
  }
  report.status = aggregate(dispatched);
  if (report.status == Status::Sat) {
    report.counterexample = outcomes[first_sat.load()]->counterexample;
  } else if (report.status == Status::Error) {
    for (const auto& o : dispatched) {
      if (o.status == Status::Error) {
        report.reason = o.reason;
        break;
      }
    }
  }
  return report;
}

}  // namespace verif

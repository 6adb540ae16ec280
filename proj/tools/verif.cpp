// verif <property> <verifier> --network <name> <path> [--prop.<name> <value>] ...
#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "verif/error.hpp"
#include "verif/npy.hpp"
#include "verif/onnx.hpp"
#include "verif/runner.hpp"

using namespace verif;

namespace {

constexpr int kUsage = 2;
constexpr int kInternal = 3;

struct UsageError {
  std::string message;
};

// Pulls "--prop.<name> <value>" and "--prop.<name>=<value>" out of argv,
// since CLI11 cannot declare options with open-ended names.
ParameterValues extract_properties(std::vector<std::string>& args) {
  ParameterValues out;
  std::vector<std::string> rest;
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--prop.", 0) != 0) {
      rest.push_back(a);
      continue;
    }
    std::string name = a.substr(7), value;
    if (const auto eq = name.find('='); eq != std::string::npos) {
      value = name.substr(eq + 1);
      name = name.substr(0, eq);
    } else if (i + 1 < args.size()) {
      value = args[++i];
    } else {
      throw UsageError{a + " needs a value"};
    }
    if (name.empty()) throw UsageError{a + ": empty parameter name"};
    out[name] = value;
  }
  args = std::move(rest);
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

std::string seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", s);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verify a DNNP property of an ONNX network.", "verif"};
  app.footer(
      "Property parameters:\n"
      "  --prop.<name> <value>       value for Parameter(\"<name>\", ...) in the property\n\n"
      "Verifiers: ibp, sample, or any plugin in a registry file on VERIF_PLUGIN_PATH.\n"
      "Exit status: 0 for any verdict, 2 for usage errors, 3 for internal errors.");
  std::string property_path, verifier;
  std::vector<std::pair<std::string, std::string>> network_args;
  uint64_t seed = 0;
  double timeout = 0.0;
  size_t jobs = 1;
  std::string format = "human";
  std::string save_violation;
  app.add_option("property", property_path, "DNNP property file")->required();
  app.add_option("verifier", verifier, "verifier name")->required();
  app.add_option("--network", network_args, "bind network <name> to the ONNX model at <path> (repeatable)")
      ->type_name("<name> <path>")
      ->required();
  app.add_option("--seed", seed, "random seed for sampling verifiers")->capture_default_str();
  app.add_option("--timeout", timeout, "seconds per reduced problem; 0 keeps the verifier default")
      ->capture_default_str();
  app.add_option("--jobs", jobs, "reduced problems verified in parallel")->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--format", format, "output style")->check(CLI::IsMember({"human", "line"}))->capture_default_str();
  app.add_option("--save-violation", save_violation,
                 "where to write a counterexample (default: <property>.violation.npy next to the property)");

  std::vector<std::string> args(argv + 1, argv + argc);
  ParameterValues params;
  auto usage = [&](const std::string& message) {
    std::cerr << app.help() << "\nerror: " << message << '\n';
    return kUsage;
  };
  try {
    params = extract_properties(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    return usage(e.what());
  } catch (const UsageError& e) {
    return usage(e.message);
  }

  try {
    const PluginRegistry registry = PluginRegistry::load_default();
    const VerifierPlugin* plugin = registry.find(verifier);
    if (!plugin) {
      std::string known;
      for (const auto& n : registry.names()) known += (known.empty() ? "" : ", ") + n;
      return usage("unknown verifier '" + verifier + "' (known: " + known + ")");
    }

    // Reading inputs: any failure here is the caller's to fix.
    VerificationProblem problem;
    ExprPtr bound;
    try {
      const ParsedProperty parsed = parse_dnnp_file(property_path);
      NetworkMap networks;
      for (const auto& [name, path] : network_args) {
        if (networks.count(name)) return usage("--network " + name + " given twice");
        networks[name] = std::make_shared<const OperationGraph>(parse_onnx(path).graph);
      }
      for (const auto& [name, _] : params) {
        const bool declared = std::any_of(parsed.parameters.begin(), parsed.parameters.end(),
                                          [&](const ParameterDecl& d) { return d.name == name; });
        if (!declared) return usage("--prop." + name + ": the property declares no parameter '" + name + "'");
      }
      problem.original = parsed.expr;
      problem.context = make_context(parsed, params, networks);
      bound = verif::bind(parsed, params, networks);
    } catch (const Error& e) {
      return usage(e.what());
    }

    RunReport report;
    try {
      problem.canonical = canonicalize(bound);
      RunOptions options;
      options.seed = seed;
      options.timeout = timeout;
      options.jobs = jobs;
      report = run(problem, *plugin, options);
    } catch (const Error& e) {
      report.status = Status::Error;
      report.reason = e.what();
    }

    std::string cex_path;
    if (report.status == Status::Sat && report.counterexample) {
      std::filesystem::path out = save_violation;
      if (out.empty()) {
        const std::filesystem::path prop(property_path);
        out = prop.parent_path() / (prop.stem().string() + ".violation.npy");
      }
      save_npy(out, *report.counterexample);
      cex_path = out.string();
    }

    if (format == "line") {
      std::cout << "status=" << to_string(report.status) << " translate=" << seconds(report.translation_time)
                << " verify=" << seconds(report.verification_time) << " problems=" << report.reduced_problems;
      if (!cex_path.empty()) std::cout << " counterexample=" << quote(cex_path);
      if (report.reason) std::cout << " reason=" << quote(*report.reason);
      std::cout << '\n';
    } else {
      std::cout << "result: " << to_string(report.status) << '\n';
      if (report.reason) std::cout << "reason: " << *report.reason << '\n';
      std::cout << "time: " << seconds(report.translation_time) << "s + " << seconds(report.verification_time)
                << "s\n";
      std::cout << "problems: " << report.reduced_problems << '\n';
      if (!cex_path.empty()) std::cout << "counterexample: " << cex_path << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

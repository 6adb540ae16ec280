#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "verif/reduce.hpp"

namespace verif {

// ---- layer view -------------------------------------------------------------

enum class LayerKind { Dense, Conv };

/// One affine layer with an optional Relu. Dense weights are [out, in];
/// conv weights are [filters, channels, kh, kw] over `in_shape` (NCHW).
struct Layer {
  LayerKind kind = LayerKind::Dense;
  Tensor weights;
  Tensor bias;
  bool relu = false;
  Shape in_shape;
  Shape out_shape;
  std::vector<int64_t> strides;
  std::vector<int64_t> pads;

  int64_t inputs() const { return element_count(in_shape); }
  int64_t outputs() const { return element_count(out_shape); }
};

/// Sequential view of a chain of Conv/Gemm/MatMul layers with optional Relu.
/// Flatten, Reshape and Identity between layers are absorbed (row-major
/// order is preserved). Throws NotSequential naming the offending node.
std::vector<Layer> to_layers(const OperationGraph& graph);

/// Same network with every Conv layer expanded to its dense matrix.
std::vector<Layer> dense_layers(const std::vector<Layer>& layers);

/// Evaluates a layer list on a flat input.
std::vector<double> run_layers(const std::vector<Layer>& layers, std::span<const double> x);

// ---- outcomes ---------------------------------------------------------------

enum class Status { Sat, Unsat, Unknown, Error };

std::string_view to_string(Status status);

struct VerifierOutcome {
  Status status = Status::Unknown;
  std::optional<Tensor> counterexample;  // set exactly when status is Sat
  std::optional<std::string> reason;     // set exactly when status is Error
  double translation_time = 0.0;
  double verification_time = 0.0;

  static VerifierOutcome sat(Tensor x);
  static VerifierOutcome unsat();
  static VerifierOutcome unknown();
  static VerifierOutcome error(std::string reason);
};

// ---- writers ----------------------------------------------------------------

/// Reluplex NNET text. H_in must be a bounded axis-aligned box.
void write_nnet(const ReducedProblem& rp, const std::filesystem::path& path);
std::string nnet_text(const ReducedProblem& rp);

/// Planet RLV text: the network, the input rows and the violation N'_0 <= N'_1.
void write_rlv(const ReducedProblem& rp, const std::filesystem::path& path);
std::string rlv_text(const ReducedProblem& rp);

/// N' as ONNX at `onnx_path` plus a VNNLIB file asserting H_in and Y_0 <= Y_1.
void write_vnnlib(const ReducedProblem& rp, const std::filesystem::path& onnx_path,
                  const std::filesystem::path& path);
std::string vnnlib_text(const ReducedProblem& rp);

// ---- built-in verifiers -----------------------------------------------------

struct Interval {
  std::vector<double> lower;
  std::vector<double> upper;
};

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

/// Interval bounds of every element of the network output over the box.
/// Bounds enclose both the exact result and the float64 evaluation of infer.
/// Returns nullopt when the deadline passes.
std::optional<Interval> propagate_intervals(const OperationGraph& graph, const Box& input, Deadline deadline = {});

/// Sound and incomplete: unsat when lower(N'_0) > upper(N'_1), else unknown.
VerifierOutcome ibp_verify(const ReducedProblem& rp, double timeout_seconds = 0.0);

/// Uniform samples from the bounding box of H_in, rejection-filtered by H_in.
/// Sat with the first violating sample, else unknown. Deterministic per seed.
VerifierOutcome sample_falsify(const ReducedProblem& rp, uint64_t budget, uint64_t seed);

// ---- external verifier output -----------------------------------------------

/// Known parsers: "generic", "planet", "vnnlib".
VerifierOutcome parse_verifier_output(std::string_view parser, std::string_view stdout_text, int exit_code);
bool is_known_parser(std::string_view parser);

// ---- registry ---------------------------------------------------------------

enum class NetworkShape { SequentialRelu, General };
enum class InputSupport { Box, Halfspace };

struct BackendDescriptor {
  std::string name;
  NetworkShape network = NetworkShape::General;
  InputSupport input = InputSupport::Halfspace;
  std::vector<std::string> extensions;
};

/// Built-in descriptors: "ibp" and "sample" run in process; "nnet", "rlv" and
/// "vnnlib" are translation formats used by external plugins.
const std::vector<BackendDescriptor>& builtin_backends();
const BackendDescriptor* find_backend(std::string_view name);

}  // namespace verif

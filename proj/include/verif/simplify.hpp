#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "verif/graph.hpp"

namespace verif {

// Each pass rewrites every matching site until none is left and reports how
// many rewrites it applied through `applied` (may be null). Rewrites only fire
// on single-consumer links, so no weights are ever duplicated.

/// Folds BatchNormalization into a preceding Conv or Gemm; otherwise replaces
/// it with an equivalent 1x1 Conv (rank-4 input) or diagonal Gemm (rank-2 input).
OperationGraph fuse_batch_norm(const OperationGraph& graph, size_t* applied = nullptr);
/// Drops Identity, single-input Concat, and Flatten that does not change the shape.
OperationGraph remove_identities(const OperationGraph& graph, size_t* applied = nullptr);
OperationGraph matmul_add_to_gemm(const OperationGraph& graph, size_t* applied = nullptr);
OperationGraph combine_consecutive_gemm(const OperationGraph& graph, size_t* applied = nullptr);
/// Folds a diagonal 1x1, stride-1, unpadded Conv into an unpadded successor Conv.
OperationGraph combine_consecutive_conv(const OperationGraph& graph, size_t* applied = nullptr);
/// Moves zero constant-mode Pad into the pads attribute of the consuming Conv
/// or MaxPool. MaxPool only when the padded tensor is non-negative.
OperationGraph bundle_pad(const OperationGraph& graph, size_t* applied = nullptr);
/// Swaps Relu/Sigmoid/Tanh ahead of Reshape/Flatten/Transpose producers.
OperationGraph move_activations_backward(const OperationGraph& graph, size_t* applied = nullptr);

struct SimplifyReport {
  std::map<std::string, size_t> applications;  // pass name -> rewrites applied
  size_t nodes_before = 0;
  size_t nodes_after = 0;
  size_t rounds = 0;

  size_t total() const;
};

/// Pass names in the order simplify() runs them.
const std::vector<std::string>& simplification_passes();

struct SimplifyResult {
  OperationGraph graph;
  SimplifyReport report;
};

/// Runs every pass in a fixed order, repeating rounds until a round changes nothing.
SimplifyResult simplify(const OperationGraph& graph);

}  // namespace verif

#pragma once

#include <span>
#include <vector>

#include "verif/graph.hpp"

namespace verif {

/// Reference executor. Evaluates a graph in topological order in float64.
/// The evaluation order is cached so repeated calls on one graph are cheap.
class Executor {
 public:
  explicit Executor(const OperationGraph& graph);

  std::vector<Tensor> run(std::span<const Tensor> inputs) const;
  const OperationGraph& graph() const noexcept { return *graph_; }

 private:
  const OperationGraph* graph_;
  std::vector<NodeId> order_;
  std::unordered_map<NodeId, size_t> position_;
};

std::vector<Tensor> infer(const OperationGraph& graph, std::span<const Tensor> inputs);

/// Evaluates one operation on concrete operand values.
Tensor evaluate_operation(const Operation& op, const std::vector<const Tensor*>& args);

}  // namespace verif

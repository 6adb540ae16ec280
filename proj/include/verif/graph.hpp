#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "verif/tensor.hpp"

namespace verif {

using NodeId = int64_t;

// Supported operation kinds. Adding a kind means extending kind_from_string,
// the attribute table and shape rule in ops.cpp, and the executor in infer.cpp.
enum class OpKind {
  Input,
  Gemm,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Conv,
  BatchNormalization,
  Relu,
  Sigmoid,
  Tanh,
  MaxPool,
  AveragePool,
  Flatten,
  Reshape,
  Transpose,
  Concat,
  Pad,
  Identity,
};

std::string_view to_string(OpKind kind);
std::optional<OpKind> kind_from_string(std::string_view name);
bool is_activation(OpKind kind);
bool is_reshaping(OpKind kind);

using AttrValue = std::variant<int64_t, double, std::vector<int64_t>, std::string>;

class Attributes {
 public:
  Attributes() = default;
  Attributes(std::initializer_list<std::pair<const std::string, AttrValue>> init) : values_(init) {}

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, AttrValue value) { values_[key] = std::move(value); }

  int64_t get_int(const std::string& key) const;
  double get_float(const std::string& key) const;
  const std::vector<int64_t>& get_ints(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  const std::map<std::string, AttrValue>& values() const noexcept { return values_; }
  bool operator==(const Attributes& other) const = default;

 private:
  std::map<std::string, AttrValue> values_;
};

using ConstantPtr = std::shared_ptr<const Tensor>;

/// One input slot of an operation: either the output of another operation or
/// a constant tensor (weights, biases, normalization statistics).
class Operand {
 public:
  static Operand node(NodeId id) { return Operand(id); }
  static Operand constant(Tensor value) { return Operand(std::make_shared<const Tensor>(std::move(value))); }
  static Operand constant(ConstantPtr value) { return Operand(std::move(value)); }

  bool is_node() const noexcept { return std::holds_alternative<NodeId>(source_); }
  bool is_constant() const noexcept { return !is_node(); }
  NodeId producer() const { return std::get<NodeId>(source_); }
  const Tensor& value() const { return *std::get<ConstantPtr>(source_); }
  const ConstantPtr& shared_value() const { return std::get<ConstantPtr>(source_); }

  void rewire(NodeId id) { source_ = id; }

 private:
  explicit Operand(NodeId id) : source_(id) {}
  explicit Operand(ConstantPtr value) : source_(std::move(value)) {}

  std::variant<NodeId, ConstantPtr> source_;
};

struct Operation {
  NodeId id = 0;
  OpKind kind = OpKind::Identity;
  Attributes attrs;
  std::vector<Operand> inputs;
  Shape shape;                  // output shape, filled in by GraphBuilder::build
  DType dtype = DType::Float64; // declared dtype, meaningful for Input
};

struct Use {
  NodeId consumer;
  size_t slot;
};

/// Immutable DAG of operations. Build or edit through GraphBuilder.
class OperationGraph {
 public:
  OperationGraph() = default;

  const std::vector<Operation>& operations() const noexcept { return ops_; }
  const Operation& op(NodeId id) const;
  bool contains(NodeId id) const { return index_.count(id) != 0; }
  size_t size() const noexcept { return ops_.size(); }

  const std::vector<NodeId>& inputs() const noexcept { return inputs_; }
  const std::vector<NodeId>& outputs() const noexcept { return outputs_; }
  bool is_output(NodeId id) const;

  const std::vector<Use>& uses(NodeId id) const;
  /// Consumer slots plus appearances in the output list.
  size_t use_count(NodeId id) const;
  /// The unique consuming operation, if `id` has exactly one use and is not a graph output.
  std::optional<NodeId> sole_consumer(NodeId id) const;

  NodeId next_id() const noexcept { return next_id_; }

 private:
  friend class GraphBuilder;

  std::vector<Operation> ops_;  // ascending id
  std::unordered_map<NodeId, size_t> index_;
  std::vector<NodeId> inputs_;
  std::vector<NodeId> outputs_;
  std::unordered_map<NodeId, std::vector<Use>> uses_;
  NodeId next_id_ = 0;
};

/// Mutable staging area for constructing or rewriting a graph. Ids are never
/// reused: an editor seeded from a graph continues from its next_id().
class GraphBuilder {
 public:
  GraphBuilder() = default;
  explicit GraphBuilder(const OperationGraph& base);

  NodeId add_input(Shape shape, DType dtype = DType::Float64);
  NodeId add(OpKind kind, std::vector<Operand> inputs, Attributes attrs = {});
  void set_outputs(std::vector<NodeId> outputs) { outputs_ = std::move(outputs); }
  const std::vector<NodeId>& outputs() const noexcept { return outputs_; }

  Operation& op(NodeId id);
  const Operation& op(NodeId id) const;
  bool contains(NodeId id) const { return ops_.count(id) != 0; }

  /// Points every consumer slot and output entry that reads `from` at `to`.
  void replace_uses(NodeId from, NodeId to);
  void remove(NodeId id);

  /// Prunes operations that no output depends on (graph inputs are kept),
  /// validates structure and attributes, and infers every output shape.
  OperationGraph build() const;

 private:
  std::map<NodeId, Operation> ops_;
  std::vector<NodeId> input_order_;
  std::vector<NodeId> outputs_;
  NodeId next_id_ = 0;
};

/// Deterministic topological order; ties broken by ascending id.
std::vector<NodeId> topological_order(const OperationGraph& graph);

using KindPredicate = std::function<bool(const Operation&)>;
KindPredicate kind_is(OpKind kind);
KindPredicate kind_in(std::vector<OpKind> kinds);

/// Paths p[0] -> p[1] -> ... whose kinds satisfy the predicates in order and
/// where every node except the last has the next node as its only consumer.
std::vector<std::vector<NodeId>> match_pattern(const OperationGraph& graph,
                                               const std::vector<KindPredicate>& pattern);

/// Isomorphism check following topological order: kinds, attributes, constant
/// values, wiring and output order must agree. Ids may differ.
bool structurally_equal(const OperationGraph& a, const OperationGraph& b);

}  // namespace verif

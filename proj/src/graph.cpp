#include "verif/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include "verif/error.hpp"
#include "verif/ops.hpp"

namespace verif {

namespace {

constexpr std::pair<OpKind, std::string_view> kKindNames[] = {
    {OpKind::Input, "Input"},
    {OpKind::Gemm, "Gemm"},
    {OpKind::MatMul, "MatMul"},
    {OpKind::Add, "Add"},
    {OpKind::Sub, "Sub"},
    {OpKind::Mul, "Mul"},
    {OpKind::Div, "Div"},
    {OpKind::Conv, "Conv"},
    {OpKind::BatchNormalization, "BatchNormalization"},
    {OpKind::Relu, "Relu"},
    {OpKind::Sigmoid, "Sigmoid"},
    {OpKind::Tanh, "Tanh"},
    {OpKind::MaxPool, "MaxPool"},
    {OpKind::AveragePool, "AveragePool"},
    {OpKind::Flatten, "Flatten"},
    {OpKind::Reshape, "Reshape"},
    {OpKind::Transpose, "Transpose"},
    {OpKind::Concat, "Concat"},
    {OpKind::Pad, "Pad"},
    {OpKind::Identity, "Identity"},
};

template <typename T>
const T& attr_as(const std::map<std::string, AttrValue>& values, const std::string& key) {
  auto it = values.find(key);
  if (it == values.end()) throw Error(ErrorCode::InvalidGraph, "missing attribute '" + key + "'");
  const T* value = std::get_if<T>(&it->second);
  if (!value) throw Error(ErrorCode::InvalidGraph, "attribute '" + key + "' has the wrong type");
  return *value;
}

}  // namespace

std::string_view to_string(OpKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<OpKind> kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

bool is_activation(OpKind kind) {
  return kind == OpKind::Relu || kind == OpKind::Sigmoid || kind == OpKind::Tanh;
}

bool is_reshaping(OpKind kind) {
  return kind == OpKind::Reshape || kind == OpKind::Flatten || kind == OpKind::Transpose;
}

int64_t Attributes::get_int(const std::string& key) const { return attr_as<int64_t>(values_, key); }
double Attributes::get_float(const std::string& key) const { return attr_as<double>(values_, key); }
const std::vector<int64_t>& Attributes::get_ints(const std::string& key) const {
  return attr_as<std::vector<int64_t>>(values_, key);
}
const std::string& Attributes::get_string(const std::string& key) const { return attr_as<std::string>(values_, key); }

const Operation& OperationGraph::op(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::InvalidGraph, "no operation with id " + std::to_string(id));
  return ops_[it->second];
}

bool OperationGraph::is_output(NodeId id) const {
  return std::find(outputs_.begin(), outputs_.end(), id) != outputs_.end();
}

const std::vector<Use>& OperationGraph::uses(NodeId id) const {
  static const std::vector<Use> none;
  auto it = uses_.find(id);
  return it == uses_.end() ? none : it->second;
}

size_t OperationGraph::use_count(NodeId id) const {
  return uses(id).size() + static_cast<size_t>(std::count(outputs_.begin(), outputs_.end(), id));
}

std::optional<NodeId> OperationGraph::sole_consumer(NodeId id) const {
  if (is_output(id)) return std::nullopt;
  const auto& u = uses(id);
  if (u.size() != 1) return std::nullopt;
  return u.front().consumer;
}

GraphBuilder::GraphBuilder(const OperationGraph& base)
    : input_order_(base.inputs()), outputs_(base.outputs()), next_id_(base.next_id()) {
  for (const auto& op : base.operations()) ops_.emplace(op.id, op);
}

NodeId GraphBuilder::add_input(Shape shape, DType dtype) {
  const NodeId id = next_id_++;
  Operation op;
  op.id = id;
  op.kind = OpKind::Input;
  op.attrs.set("shape", std::move(shape));
  op.dtype = dtype;
  ops_.emplace(id, std::move(op));
  input_order_.push_back(id);
  return id;
}

NodeId GraphBuilder::add(OpKind kind, std::vector<Operand> inputs, Attributes attrs) {
  if (kind == OpKind::Input) throw Error(ErrorCode::InvalidGraph, "use add_input for graph inputs");
  const NodeId id = next_id_++;
  Operation op;
  op.id = id;
  op.kind = kind;
  op.attrs = std::move(attrs);
  op.inputs = std::move(inputs);
  ops_.emplace(id, std::move(op));
  return id;
}

Operation& GraphBuilder::op(NodeId id) {
  auto it = ops_.find(id);
  if (it == ops_.end()) throw Error(ErrorCode::InvalidGraph, "no operation with id " + std::to_string(id));
  return it->second;
}

const Operation& GraphBuilder::op(NodeId id) const {
  auto it = ops_.find(id);
  if (it == ops_.end()) throw Error(ErrorCode::InvalidGraph, "no operation with id " + std::to_string(id));
  return it->second;
}

void GraphBuilder::replace_uses(NodeId from, NodeId to) {
  for (auto& [id, op] : ops_) {
    if (id == to) continue;
    for (auto& input : op.inputs) {
      if (input.is_node() && input.producer() == from) input.rewire(to);
    }
  }
  for (auto& out : outputs_) {
    if (out == from) out = to;
  }
}

void GraphBuilder::remove(NodeId id) {
  ops_.erase(id);
  input_order_.erase(std::remove(input_order_.begin(), input_order_.end(), id), input_order_.end());
}

OperationGraph GraphBuilder::build() const {
  // Liveness: everything reachable backwards from the outputs, plus inputs.
  std::set<NodeId> live(input_order_.begin(), input_order_.end());
  std::vector<NodeId> stack(outputs_.begin(), outputs_.end());
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    auto it = ops_.find(id);
    if (it == ops_.end()) throw Error(ErrorCode::InvalidGraph, "edge to missing operation " + std::to_string(id));
    if (!live.insert(id).second && it->second.kind != OpKind::Input) continue;  // already visited
    for (const auto& input : it->second.inputs) {
      if (input.is_node()) stack.push_back(input.producer());
    }
  }

  OperationGraph graph;
  graph.next_id_ = next_id_;
  graph.inputs_ = input_order_;
  graph.outputs_ = outputs_;
  for (NodeId id : live) {
    graph.index_[id] = graph.ops_.size();
    graph.ops_.push_back(ops_.at(id));
  }
  for (const auto& op : graph.ops_) {
    ops::validate(op);
    for (size_t slot = 0; slot < op.inputs.size(); ++slot) {
      if (!op.inputs[slot].is_node()) continue;
      const NodeId producer = op.inputs[slot].producer();
      if (!graph.contains(producer)) {
        throw Error(ErrorCode::InvalidGraph, "edge from missing operation " + std::to_string(producer));
      }
      graph.uses_[producer].push_back({op.id, slot});
    }
  }
  for (NodeId id : graph.inputs_) {
    if (graph.op(id).kind != OpKind::Input) throw Error(ErrorCode::InvalidGraph, "graph input is not an Input node");
  }

  // Shape inference in topological order; this also rejects cycles.
  for (NodeId id : topological_order(graph)) {
    Operation& op = graph.ops_[graph.index_.at(id)];
    std::vector<Shape> in;
    in.reserve(op.inputs.size());
    for (const auto& input : op.inputs) {
      in.push_back(input.is_node() ? graph.op(input.producer()).shape : input.value().shape());
    }
    op.shape = ops::output_shape(op, in);
  }
  return graph;
}

std::vector<NodeId> topological_order(const OperationGraph& graph) {
  std::unordered_map<NodeId, size_t> pending;
  for (const auto& op : graph.operations()) {
    size_t n = 0;
    for (const auto& input : op.inputs) n += input.is_node() ? 1 : 0;
    pending[op.id] = n;
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (const auto& [id, n] : pending) {
    if (n == 0) ready.push(id);
  }
  std::vector<NodeId> order;
  order.reserve(graph.size());
  while (!ready.empty()) {
    const NodeId id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const Use& use : graph.uses(id)) {
      if (--pending[use.consumer] == 0) ready.push(use.consumer);
    }
  }
  if (order.size() != graph.size()) throw Error(ErrorCode::CycleDetected, "operation graph contains a cycle");
  return order;
}

KindPredicate kind_is(OpKind kind) {
  return [kind](const Operation& op) { return op.kind == kind; };
}

KindPredicate kind_in(std::vector<OpKind> kinds) {
  return [kinds = std::move(kinds)](const Operation& op) {
    return std::find(kinds.begin(), kinds.end(), op.kind) != kinds.end();
  };
}

std::vector<std::vector<NodeId>> match_pattern(const OperationGraph& graph,
                                               const std::vector<KindPredicate>& pattern) {
  std::vector<std::vector<NodeId>> sites;
  if (pattern.empty()) return sites;
  for (NodeId start : topological_order(graph)) {
    if (!pattern[0](graph.op(start))) continue;
    std::vector<NodeId> path{start};
    bool ok = true;
    for (size_t i = 1; i < pattern.size() && ok; ++i) {
      const auto next = graph.sole_consumer(path.back());
      ok = next.has_value() && pattern[i](graph.op(*next));
      if (ok) path.push_back(*next);
    }
    if (ok) sites.push_back(std::move(path));
  }
  return sites;
}

bool structurally_equal(const OperationGraph& a, const OperationGraph& b) {
  if (a.size() != b.size() || a.inputs().size() != b.inputs().size() || a.outputs().size() != b.outputs().size()) {
    return false;
  }
  const auto order_a = topological_order(a);
  const auto order_b = topological_order(b);
  std::unordered_map<NodeId, NodeId> mapping;
  for (size_t i = 0; i < order_a.size(); ++i) mapping[order_a[i]] = order_b[i];
  for (size_t i = 0; i < order_a.size(); ++i) {
    const Operation& x = a.op(order_a[i]);
    const Operation& y = b.op(order_b[i]);
    if (x.kind != y.kind || !(x.attrs == y.attrs) || x.shape != y.shape || x.inputs.size() != y.inputs.size()) {
      return false;
    }
    if (x.kind == OpKind::Input && x.dtype != y.dtype) return false;
    for (size_t s = 0; s < x.inputs.size(); ++s) {
      const Operand& p = x.inputs[s];
      const Operand& q = y.inputs[s];
      if (p.is_node() != q.is_node()) return false;
      if (p.is_node() ? mapping.at(p.producer()) != q.producer() : !(p.value() == q.value())) return false;
    }
  }
  for (size_t i = 0; i < a.inputs().size(); ++i) {
    if (mapping.at(a.inputs()[i]) != b.inputs()[i]) return false;
  }
  for (size_t i = 0; i < a.outputs().size(); ++i) {
    if (mapping.at(a.outputs()[i]) != b.outputs()[i]) return false;
  }
  return true;
}

}  // namespace verif

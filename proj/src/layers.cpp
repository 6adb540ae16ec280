#include <algorithm>

#include "verif/backends.hpp"
#include "verif/error.hpp"
#include "verif/infer.hpp"
#include "verif/linear.hpp"
#include "verif/ops.hpp"

namespace verif {
namespace {

std::string describe(const Operation& op) {
  return "node " + std::to_string(op.id) + " (" + std::string(to_string(op.kind)) + ")";
}

[[noreturn]] void not_sequential(const Operation& op, const std::string& why) {
  throw Error(ErrorCode::NotSequential, describe(op) + ": " + why);
}

// The single node operand of `op`; everything else must be constant.
NodeId node_operand(const Operation& op) {
  std::optional<NodeId> found;
  for (size_t i = 0; i < op.inputs.size(); ++i) {
    if (!op.inputs[i].is_node()) continue;
    if (found || i != 0) not_sequential(op, "more than one non-constant operand");
    found = op.inputs[i].producer();
  }
  if (!found) not_sequential(op, "no non-constant operand");
  return *found;
}

Layer dense_from_gemm(const Operation& op, const Shape& in_shape) {
  if (op.attrs.get_int("transA") != 0) not_sequential(op, "transposed activations");
  if (in_shape.size() != 2 || in_shape[0] != 1) not_sequential(op, "batch dimension other than 1");
  const Tensor& b = op.inputs[1].value();
  const bool tb = op.attrs.get_int("transB") != 0;
  const int64_t in = in_shape[1];
  const int64_t out = op.shape[1];
  Layer layer;
  layer.weights = Tensor({out, in});
  for (int64_t j = 0; j < out; ++j) {
    for (int64_t p = 0; p < in; ++p) layer.weights[j * in + p] = tb ? b[j * in + p] : b[p * out + j];
  }
  layer.bias = Tensor({out});
  if (op.inputs.size() > 2) {
    const Tensor& c = op.inputs[2].value();
    BroadcastIndexer index(c.shape(), op.shape);
    for (int64_t j = 0; j < out; ++j) layer.bias[j] = c[index(j)];
  }
  layer.in_shape = {in};
  layer.out_shape = {out};
  return layer;
}

Layer dense_from_matmul(const Operation& op, const Shape& in_shape) {
  if (in_shape.size() != 2 || in_shape[0] != 1) not_sequential(op, "batch dimension other than 1");
  const Tensor& b = op.inputs[1].value();
  if (b.rank() != 2) not_sequential(op, "matrix operand must be rank 2");
  const int64_t in = b.shape()[0], out = b.shape()[1];
  Layer layer;
  layer.weights = Tensor({out, in});
  for (int64_t j = 0; j < out; ++j) {
    for (int64_t p = 0; p < in; ++p) layer.weights[j * in + p] = b[p * out + j];
  }
  layer.bias = Tensor::zeros({out});
  layer.in_shape = {in};
  layer.out_shape = {out};
  return layer;
}

Layer conv_layer(const Operation& op, const Shape& in_shape) {
  if (in_shape.size() != 4 || in_shape[0] != 1) not_sequential(op, "batch dimension other than 1");
  Layer layer;
  layer.kind = LayerKind::Conv;
  layer.weights = op.inputs[1].value();
  layer.bias = op.inputs.size() > 2 ? op.inputs[2].value() : Tensor::zeros({layer.weights.shape()[0]});
  layer.in_shape = in_shape;
  layer.out_shape = op.shape;
  layer.strides = op.attrs.get_ints("strides");
  layer.pads = op.attrs.get_ints("pads");
  return layer;
}

Operation conv_operation(const Layer& layer) {
  Operation op;
  op.kind = OpKind::Conv;
  op.attrs = ops::conv_attributes({layer.weights.shape()[2], layer.weights.shape()[3]}, layer.strides, layer.pads);
  op.shape = layer.out_shape;
  return op;
}

Tensor apply_conv(const Layer& layer, const Tensor& x, const Tensor& bias) {
  const Operation op = conv_operation(layer);
  return evaluate_operation(op, {&x, &layer.weights, &bias});
}

}  // namespace

std::vector<Layer> to_layers(const OperationGraph& graph) {
  if (graph.inputs().size() != 1 || graph.outputs().size() != 1) {
    throw Error(ErrorCode::NotSequential, "graph must have one input and one output");
  }
  const auto order = topological_order(graph);
  // Merge points are reported before the fan-out that feeds them.
  for (NodeId id : order) {
    if (graph.op(id).kind != OpKind::Input) node_operand(graph.op(id));
  }
  for (NodeId id : order) {
    if (graph.use_count(id) > 1) not_sequential(graph.op(id), "output is used more than once");
  }
  // Every operation now has one node operand and one consumer: the graph is a chain.
  std::vector<Layer> layers;
  for (NodeId id : order) {
    const Operation& op = graph.op(id);
    if (op.kind == OpKind::Input) continue;
    const Shape& in_shape = graph.op(node_operand(op)).shape;
    switch (op.kind) {
      case OpKind::Gemm:
        if (op.inputs.size() < 2 || !op.inputs[1].is_constant()) not_sequential(op, "weights are not constant");
        layers.push_back(dense_from_gemm(op, in_shape));
        break;
      case OpKind::MatMul:
        if (!op.inputs[1].is_constant()) not_sequential(op, "weights are not constant");
        layers.push_back(dense_from_matmul(op, in_shape));
        break;
      case OpKind::Conv:
        layers.push_back(conv_layer(op, in_shape));
        break;
      case OpKind::Relu:
        if (layers.empty() || layers.back().relu) not_sequential(op, "activation without a preceding layer");
        layers.back().relu = true;
        break;
      case OpKind::Flatten:
      case OpKind::Reshape:
      case OpKind::Identity:
        break;
      default:
        not_sequential(op, "unsupported in a sequential network");
    }
  }
  if (layers.empty()) throw Error(ErrorCode::InvalidGraph, "network has no layers");
  // A dense layer after a conv reads the conv output flattened.
  for (size_t i = 1; i < layers.size(); ++i) {
    if (layers[i].inputs() != layers[i - 1].outputs()) {
      throw Error(ErrorCode::NotSequential, "layer " + std::to_string(i) + " input size differs from layer " +
                                                std::to_string(i - 1) + " output size");
    }
  }
  return layers;
}

std::vector<Layer> dense_layers(const std::vector<Layer>& layers) {
  std::vector<Layer> out;
  out.reserve(layers.size());
  for (const Layer& layer : layers) {
    if (layer.kind == LayerKind::Dense) {
      out.push_back(layer);
      continue;
    }
    // Column i of the matrix is the conv response to the i-th unit vector.
    const int64_t in = layer.inputs(), n_out = layer.outputs();
    Layer dense;
    dense.weights = Tensor({n_out, in});
    const Tensor zero_bias = Tensor::zeros({layer.weights.shape()[0]});
    Tensor unit(layer.in_shape);
    for (int64_t i = 0; i < in; ++i) {
      unit[i] = 1.0;
      const Tensor column = apply_conv(layer, unit, zero_bias);
      for (int64_t o = 0; o < n_out; ++o) dense.weights[o * in + i] = column[o];
      unit[i] = 0.0;
    }
    dense.bias = Tensor({n_out});
    const int64_t plane = layer.out_shape[2] * layer.out_shape[3];
    for (int64_t o = 0; o < n_out; ++o) dense.bias[o] = layer.bias[o / plane];
    dense.relu = layer.relu;
    dense.in_shape = {in};
    dense.out_shape = {n_out};
    out.push_back(std::move(dense));
  }
  return out;
}

std::vector<double> run_layers(const std::vector<Layer>& layers, std::span<const double> x) {
  std::vector<double> cur(x.begin(), x.end());
  for (const Layer& layer : layers) {
    if (static_cast<int64_t>(cur.size()) != layer.inputs()) {
      throw Error(ErrorCode::ShapeMismatch, "layer expects " + std::to_string(layer.inputs()) + " values, got " +
                                                std::to_string(cur.size()));
    }
    std::vector<double> next(static_cast<size_t>(layer.outputs()));
    if (layer.kind == LayerKind::Conv) {
      const Tensor y = apply_conv(layer, Tensor(layer.in_shape, cur), layer.bias);
      next.assign(y.data().begin(), y.data().end());
    } else {
      const int64_t in = layer.inputs();
      for (int64_t j = 0; j < layer.outputs(); ++j) {
        next[static_cast<size_t>(j)] = dot(layer.weights.data().subspan(static_cast<size_t>(j * in), static_cast<size_t>(in)), cur) + layer.bias[j];
      }
    }
    if (layer.relu) {
      for (auto& v : next) v = v > 0.0 ? v : 0.0;
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace verif

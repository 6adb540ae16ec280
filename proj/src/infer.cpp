#include "verif/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "verif/error.hpp"

namespace verif {
namespace {

Tensor gemm(const Operation& op, const Tensor& a, const Tensor& b, const Tensor& c) {
  const bool ta = op.attrs.get_int("transA") != 0;
  const bool tb = op.attrs.get_int("transB") != 0;
  const int64_t m = op.shape[0];
  const int64_t n = op.shape[1];
  const int64_t k = ta ? a.shape()[0] : a.shape()[1];
  const int64_t a_cols = a.shape()[1];
  const int64_t b_cols = b.shape()[1];
  Tensor out(op.shape);
  BroadcastIndexer bias(c.shape(), op.shape);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      // Dot product first, bias last: polytope membership tests rely on this order.
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * a_cols + i] : a[i * a_cols + p];
        const double bv = tb ? b[j * b_cols + p] : b[p * b_cols + j];
        acc += av * bv;
      }
      const int64_t flat = i * n + j;
      out[flat] = acc + c[bias(flat)];
    }
  }
  return out;
}

Tensor matmul(const Operation& op, const Tensor& a, const Tensor& b) {
  const int64_t k = a.shape().back();
  const int64_t n = b.rank() == 2 ? b.shape()[1] : 1;
  const int64_t rows = a.size() / k;
  Tensor out(op.shape);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[r * k + p] * b[p * n + j];
      out[r * n + j] = acc;
    }
  }
  return out;
}

template <typename F>
Tensor binary(const Operation& op, const Tensor& a, const Tensor& b, F f) {
  Tensor out(op.shape);
  BroadcastIndexer ia(a.shape(), op.shape);
  BroadcastIndexer ib(b.shape(), op.shape);
  for (int64_t i = 0; i < out.size(); ++i) out[i] = f(a[ia(i)], b[ib(i)]);
  return out;
}

template <typename F>
Tensor unary(const Tensor& x, F f) {
  Tensor out = x;
  out.set_dtype(DType::Float64);
  for (auto& v : out.data()) v = f(v);
  return out;
}

Tensor conv(const Operation& op, const Tensor& x, const Tensor& w, const Tensor& bias) {
  const auto& strides = op.attrs.get_ints("strides");
  const auto& pads = op.attrs.get_ints("pads");
  const int64_t batch = x.shape()[0], channels = x.shape()[1], height = x.shape()[2], width = x.shape()[3];
  const int64_t filters = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  const int64_t out_h = op.shape[2], out_w = op.shape[3];
  Tensor out(op.shape);
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t m = 0; m < filters; ++m) {
      for (int64_t oh = 0; oh < out_h; ++oh) {
        for (int64_t ow = 0; ow < out_w; ++ow) {
          double acc = 0.0;
          for (int64_t c = 0; c < channels; ++c) {
            for (int64_t i = 0; i < kh; ++i) {
              const int64_t ih = oh * strides[0] - pads[0] + i;
              if (ih < 0 || ih >= height) continue;
              for (int64_t j = 0; j < kw; ++j) {
                const int64_t iw = ow * strides[1] - pads[1] + j;
                if (iw < 0 || iw >= width) continue;
                acc += x[((n * channels + c) * height + ih) * width + iw] * w[((m * channels + c) * kh + i) * kw + j];
              }
            }
          }
          out[((n * filters + m) * out_h + oh) * out_w + ow] = acc + bias[m];
        }
      }
    }
  }
  return out;
}

Tensor pool(const Operation& op, const Tensor& x) {
  const bool is_max = op.kind == OpKind::MaxPool;
  const bool include_pad = !is_max && op.attrs.get_int("count_include_pad") != 0;
  const auto& kernel = op.attrs.get_ints("kernel_shape");
  const auto& strides = op.attrs.get_ints("strides");
  const auto& pads = op.attrs.get_ints("pads");
  const int64_t planes = x.shape()[0] * x.shape()[1], height = x.shape()[2], width = x.shape()[3];
  const int64_t out_h = op.shape[2], out_w = op.shape[3];
  Tensor out(op.shape);
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t oh = 0; oh < out_h; ++oh) {
      for (int64_t ow = 0; ow < out_w; ++ow) {
        double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
        int64_t count = 0;
        for (int64_t i = 0; i < kernel[0]; ++i) {
          for (int64_t j = 0; j < kernel[1]; ++j) {
            const int64_t ih = oh * strides[0] - pads[0] + i;
            const int64_t iw = ow * strides[1] - pads[1] + j;
            const bool inside = ih >= 0 && ih < height && iw >= 0 && iw < width;
            if (inside) {
              const double v = x[(p * height + ih) * width + iw];
              acc = is_max ? std::max(acc, v) : acc + v;
            }
            count += inside || include_pad ? 1 : 0;
          }
        }
        out[(p * out_h + oh) * out_w + ow] = is_max ? acc : acc / static_cast<double>(count);
      }
    }
  }
  return out;
}

Tensor batch_norm(const Operation& op, const std::vector<const Tensor*>& args) {
  const Tensor& x = *args[0];
  const Tensor& scale = *args[1];
  const Tensor& shift = *args[2];
  const Tensor& mean = *args[3];
  const Tensor& var = *args[4];
  const double eps = op.attrs.get_float("epsilon");
  const int64_t channels = x.shape()[1];
  const int64_t inner = x.size() / (x.shape()[0] * channels);
  Tensor out(op.shape);
  for (int64_t i = 0; i < x.size(); ++i) {
    const int64_t c = (i / inner) % channels;
    out[i] = (x[i] - mean[c]) / std::sqrt(var[c] + eps) * scale[c] + shift[c];
  }
  return out;
}

Tensor transpose(const Operation& op, const Tensor& x) {
  const auto& perm = op.attrs.get_ints("perm");
  const auto in_strides = strides_of(x.shape());
  const auto out_strides = strides_of(op.shape);
  Tensor out(op.shape);
  for (int64_t o = 0; o < out.size(); ++o) {
    int64_t src = 0;
    for (size_t axis = 0; axis < perm.size(); ++axis) {
      const int64_t coord = (o / out_strides[axis]) % op.shape[axis];
      src += coord * in_strides[static_cast<size_t>(perm[axis])];
    }
    out[o] = x[src];
  }
  return out;
}

Tensor concat(const Operation& op, const std::vector<const Tensor*>& args) {
  int64_t axis = op.attrs.get_int("axis");
  if (axis < 0) axis += static_cast<int64_t>(op.shape.size());
  int64_t outer = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= op.shape[static_cast<size_t>(i)];
  Tensor out(op.shape);
  int64_t pos = 0;
  for (int64_t o = 0; o < outer; ++o) {
    for (const Tensor* t : args) {
      const int64_t chunk = t->size() / outer;
      for (int64_t i = 0; i < chunk; ++i) out[pos++] = (*t)[o * chunk + i];
    }
  }
  return out;
}

Tensor pad(const Operation& op, const Tensor& x) {
  const auto& pads = op.attrs.get_ints("pads");
  const double value = op.attrs.get_float("value");
  const size_t rank = x.shape().size();
  Tensor out(op.shape, std::vector<double>(static_cast<size_t>(element_count(op.shape)), value));
  const auto in_strides = strides_of(x.shape());
  const auto out_strides = strides_of(op.shape);
  for (int64_t i = 0; i < x.size(); ++i) {
    int64_t dst = 0;
    for (size_t axis = 0; axis < rank; ++axis) {
      const int64_t coord = (i / in_strides[axis]) % x.shape()[axis];
      dst += (coord + pads[axis]) * out_strides[axis];
    }
    out[dst] = x[i];
  }
  return out;
}

}  // namespace

Tensor evaluate_operation(const Operation& op, const std::vector<const Tensor*>& args) {
  switch (op.kind) {
    case OpKind::Input:
      throw Error(ErrorCode::InvalidGraph, "Input nodes are not evaluated");
    case OpKind::Gemm:
      return gemm(op, *args[0], *args[1], *args[2]);
    case OpKind::MatMul:
      return matmul(op, *args[0], *args[1]);
    case OpKind::Add:
      return binary(op, *args[0], *args[1], [](double a, double b) { return a + b; });
    case OpKind::Sub:
      return binary(op, *args[0], *args[1], [](double a, double b) { return a - b; });
    case OpKind::Mul:
      return binary(op, *args[0], *args[1], [](double a, double b) { return a * b; });
    case OpKind::Div:
      return binary(op, *args[0], *args[1], [](double a, double b) { return a / b; });
    case OpKind::Conv:
      return conv(op, *args[0], *args[1], *args[2]);
    case OpKind::BatchNormalization:
      return batch_norm(op, args);
    case OpKind::Relu:
      return unary(*args[0], [](double v) { return v > 0.0 ? v : 0.0; });
    case OpKind::Sigmoid:
      return unary(*args[0], [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case OpKind::Tanh:
      return unary(*args[0], [](double v) { return std::tanh(v); });
    case OpKind::MaxPool:
    case OpKind::AveragePool:
      return pool(op, *args[0]);
    case OpKind::Flatten:
    case OpKind::Reshape:
    case OpKind::Identity: {
      Tensor out = args[0]->reshaped(op.shape);
      out.set_dtype(DType::Float64);
      return out;
    }
    case OpKind::Transpose:
      return transpose(op, *args[0]);
    case OpKind::Concat:
      return concat(op, args);
    case OpKind::Pad:
      return pad(op, *args[0]);
  }
  throw Error(ErrorCode::UnsupportedKind, std::string(to_string(op.kind)));
}

Executor::Executor(const OperationGraph& graph) : graph_(&graph), order_(topological_order(graph)) {
  for (size_t i = 0; i < order_.size(); ++i) position_[order_[i]] = i;
}

std::vector<Tensor> Executor::run(std::span<const Tensor> inputs) const {
  const auto& graph_inputs = graph_->inputs();
  if (inputs.size() != graph_inputs.size()) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(graph_inputs.size()) + " inputs, got " +
                                              std::to_string(inputs.size()));
  }
  std::vector<Tensor> values(order_.size());
  std::vector<bool> written(order_.size(), false);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Operation& op = graph_->op(graph_inputs[i]);
    if (inputs[i].shape() != op.shape) {
      throw Error(ErrorCode::ShapeMismatch, "input " + std::to_string(i) + " has shape " +
                                                shape_to_string(inputs[i].shape()) + ", expected " +
                                                shape_to_string(op.shape));
    }
    const size_t pos = position_.at(op.id);
    values[pos] = inputs[i];
    values[pos].set_dtype(DType::Float64);
    written[pos] = true;
  }
  std::vector<const Tensor*> args;
  for (size_t pos = 0; pos < order_.size(); ++pos) {
    const Operation& op = graph_->op(order_[pos]);
    if (op.kind == OpKind::Input) continue;
    args.clear();
    for (const Operand& input : op.inputs) {
      if (input.is_constant()) {
        args.push_back(&input.value());
      } else {
        const size_t src = position_.at(input.producer());
        if (!written[src]) throw Error(ErrorCode::InvalidGraph, "operand read before it was computed");
        args.push_back(&values[src]);
      }
    }
    values[pos] = evaluate_operation(op, args);
    written[pos] = true;
  }
  std::vector<Tensor> outputs;
  outputs.reserve(graph_->outputs().size());
  for (NodeId id : graph_->outputs()) outputs.push_back(values[position_.at(id)]);
  return outputs;
}

std::vector<Tensor> infer(const OperationGraph& graph, std::span<const Tensor> inputs) {
  return Executor(graph).run(inputs);
}

}  // namespace verif

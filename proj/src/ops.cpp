#include "verif/ops.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "verif/error.hpp"

namespace verif::ops {
namespace {

struct KindSpec {
  std::set<std::string> attributes;
  size_t min_inputs;
  size_t max_inputs;
};

const KindSpec& spec_for(OpKind kind) {
  static const std::map<OpKind, KindSpec> table = {
      {OpKind::Input, {{"shape"}, 0, 0}},
      {OpKind::Gemm, {{"transA", "transB"}, 3, 3}},
      {OpKind::MatMul, {{}, 2, 2}},
      {OpKind::Add, {{}, 2, 2}},
      {OpKind::Sub, {{}, 2, 2}},
      {OpKind::Mul, {{}, 2, 2}},
      {OpKind::Div, {{}, 2, 2}},
      {OpKind::Conv, {{"kernel_shape", "strides", "pads", "dilations", "group"}, 3, 3}},
      {OpKind::BatchNormalization, {{"epsilon"}, 5, 5}},
      {OpKind::Relu, {{}, 1, 1}},
      {OpKind::Sigmoid, {{}, 1, 1}},
      {OpKind::Tanh, {{}, 1, 1}},
      {OpKind::MaxPool, {{"kernel_shape", "strides", "pads"}, 1, 1}},
      {OpKind::AveragePool, {{"kernel_shape", "strides", "pads", "count_include_pad"}, 1, 1}},
      {OpKind::Flatten, {{"axis"}, 1, 1}},
      {OpKind::Reshape, {{"shape"}, 1, 1}},
      {OpKind::Transpose, {{"perm"}, 1, 1}},
      {OpKind::Concat, {{"axis"}, 1, SIZE_MAX}},
      {OpKind::Pad, {{"pads", "value"}, 1, 1}},
      {OpKind::Identity, {{}, 1, 1}},
  };
  return table.at(kind);
}

[[noreturn]] void invalid(const Operation& op, const std::string& why) {
  throw Error(ErrorCode::InvalidGraph,
              std::string(to_string(op.kind)) + " node " + std::to_string(op.id) + ": " + why);
}

[[noreturn]] void mismatch(const Operation& op, const std::string& why) {
  throw Error(ErrorCode::ShapeMismatch,
              std::string(to_string(op.kind)) + " node " + std::to_string(op.id) + ": " + why);
}

int64_t normalize_axis(const Operation& op, int64_t axis, int64_t rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis > rank) mismatch(op, "axis out of range");
  return axis;
}

Shape spatial_output(const Operation& op, const Shape& x, int64_t channels) {
  if (x.size() != 4) mismatch(op, "expects a rank-4 NCHW input, got " + shape_to_string(x));
  const auto& kernel = op.attrs.get_ints("kernel_shape");
  const auto& strides = op.attrs.get_ints("strides");
  const auto& pads = op.attrs.get_ints("pads");
  if (kernel.size() != 2 || strides.size() != 2 || pads.size() != 4) {
    throw Error(ErrorCode::UnsupportedKind, "only 2-D windows with explicit 4-value pads are supported");
  }
  Shape out{x[0], channels, 0, 0};
  for (size_t i = 0; i < 2; ++i) {
    const int64_t padded = x[2 + i] + pads[i] + pads[i + 2];
    if (strides[i] <= 0 || kernel[i] <= 0 || padded < kernel[i]) mismatch(op, "window does not fit input");
    out[2 + i] = (padded - kernel[i]) / strides[i] + 1;
  }
  return out;
}

}  // namespace

void validate(const Operation& op) {
  const KindSpec& spec = spec_for(op.kind);
  if (op.inputs.size() < spec.min_inputs || op.inputs.size() > spec.max_inputs) {
    invalid(op, "wrong number of inputs (" + std::to_string(op.inputs.size()) + ")");
  }
  std::set<std::string> present;
  for (const auto& [key, value] : op.attrs.values()) present.insert(key);
  if (present != spec.attributes) {
    std::string listed;
    for (const auto& key : present) listed += key + " ";
    invalid(op, "attribute set {" + listed + "} does not match kind");
  }
  if (op.kind == OpKind::Conv) {
    const auto& dilations = op.attrs.get_ints("dilations");
    if (op.attrs.get_int("group") != 1 || std::any_of(dilations.begin(), dilations.end(), [](int64_t d) { return d != 1; })) {
      throw Error(ErrorCode::UnsupportedKind, "Conv with group != 1 or dilations != 1");
    }
  }
  if (op.kind == OpKind::BatchNormalization || op.kind == OpKind::Conv || op.kind == OpKind::Gemm) {
    for (size_t i = 1; i < op.inputs.size(); ++i) {
      if (!op.inputs[i].is_constant()) invalid(op, "parameter input " + std::to_string(i) + " must be constant");
    }
  }
}

Shape output_shape(const Operation& op, const std::vector<Shape>& in) {
  switch (op.kind) {
    case OpKind::Input:
      return op.attrs.get_ints("shape");
    case OpKind::Gemm: {
      const Shape& a = in[0];
      const Shape& b = in[1];
      if (a.size() != 2 || b.size() != 2) mismatch(op, "Gemm operands must be rank 2");
      const bool ta = op.attrs.get_int("transA") != 0;
      const bool tb = op.attrs.get_int("transB") != 0;
      const int64_t m = ta ? a[1] : a[0];
      const int64_t k = ta ? a[0] : a[1];
      const int64_t kb = tb ? b[1] : b[0];
      const int64_t n = tb ? b[0] : b[1];
      if (k != kb) mismatch(op, "inner dimensions differ: " + shape_to_string(a) + " x " + shape_to_string(b));
      Shape out{m, n};
      if (broadcast_shapes(in[2], out) != out) mismatch(op, "bias does not broadcast to output");
      return out;
    }
    case OpKind::MatMul: {
      Shape a = in[0];
      Shape b = in[1];
      if (a.empty() || b.empty() || b.size() > 2) mismatch(op, "unsupported MatMul ranks");
      const int64_t k = a.back();
      const int64_t kb = b.size() == 2 ? b[0] : b[0];
      if (k != kb) mismatch(op, "inner dimensions differ: " + shape_to_string(a) + " x " + shape_to_string(b));
      Shape out(a.begin(), a.end() - 1);
      if (b.size() == 2) out.push_back(b[1]);
      return out;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
      return broadcast_shapes(in[0], in[1]);
    case OpKind::Conv: {
      const Shape& w = in[1];
      if (w.size() != 4) mismatch(op, "Conv weights must be rank 4");
      if (in[0].size() == 4 && w[1] != in[0][1]) mismatch(op, "Conv channel count mismatch");
      const auto& kernel = op.attrs.get_ints("kernel_shape");
      if (kernel.size() != 2 || kernel[0] != w[2] || kernel[1] != w[3]) mismatch(op, "kernel_shape disagrees with weights");
      if (element_count(in[2]) != w[0]) mismatch(op, "Conv bias length must equal output channels");
      return spatial_output(op, in[0], w[0]);
    }
    case OpKind::BatchNormalization: {
      const Shape& x = in[0];
      if (x.size() < 2) mismatch(op, "BatchNormalization needs a channel axis");
      for (size_t i = 1; i < 5; ++i) {
        if (element_count(in[i]) != x[1]) mismatch(op, "statistic length must equal channel count");
      }
      return x;
    }
    case OpKind::Relu:
    case OpKind::Sigmoid:
    case OpKind::Tanh:
    case OpKind::Identity:
      return in[0];
    case OpKind::MaxPool:
    case OpKind::AveragePool:
      return spatial_output(op, in[0], in[0].size() == 4 ? in[0][1] : 0);
    case OpKind::Flatten: {
      const Shape& x = in[0];
      const int64_t axis = normalize_axis(op, op.attrs.get_int("axis"), static_cast<int64_t>(x.size()));
      int64_t outer = 1;
      int64_t inner = 1;
      for (int64_t i = 0; i < static_cast<int64_t>(x.size()); ++i) (i < axis ? outer : inner) *= x[static_cast<size_t>(i)];
      return {outer, inner};
    }
    case OpKind::Reshape: {
      const Shape& x = in[0];
      Shape out = op.attrs.get_ints("shape");
      int64_t known = 1;
      int64_t infer_at = -1;
      for (size_t i = 0; i < out.size(); ++i) {
        if (out[i] == 0) {
          if (i >= x.size()) mismatch(op, "0 in reshape target beyond input rank");
          out[i] = x[i];
        }
        if (out[i] == -1) {
          if (infer_at >= 0) mismatch(op, "more than one -1 in reshape target");
          infer_at = static_cast<int64_t>(i);
        } else {
          known *= out[i];
        }
      }
      const int64_t total = element_count(x);
      if (infer_at >= 0) {
        if (known == 0 || total % known != 0) mismatch(op, "cannot infer reshape extent");
        out[static_cast<size_t>(infer_at)] = total / known;
      }
      if (element_count(out) != total) mismatch(op, "reshape changes element count");
      return out;
    }
    case OpKind::Transpose: {
      const Shape& x = in[0];
      const auto& perm = op.attrs.get_ints("perm");
      if (perm.size() != x.size()) mismatch(op, "perm rank differs from input rank");
      std::vector<bool> seen(x.size(), false);
      Shape out(x.size());
      for (size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] < 0 || perm[i] >= static_cast<int64_t>(x.size()) || seen[static_cast<size_t>(perm[i])]) {
          mismatch(op, "perm is not a permutation");
        }
        seen[static_cast<size_t>(perm[i])] = true;
        out[i] = x[static_cast<size_t>(perm[i])];
      }
      return out;
    }
    case OpKind::Concat: {
      Shape out = in[0];
      const int64_t rank = static_cast<int64_t>(out.size());
      const int64_t axis = normalize_axis(op, op.attrs.get_int("axis"), rank);
      if (axis >= rank) mismatch(op, "concat axis out of range");
      for (size_t i = 1; i < in.size(); ++i) {
        if (static_cast<int64_t>(in[i].size()) != rank) mismatch(op, "concat rank mismatch");
        for (int64_t d = 0; d < rank; ++d) {
          if (d == axis) continue;
          if (in[i][static_cast<size_t>(d)] != out[static_cast<size_t>(d)]) mismatch(op, "concat extent mismatch");
        }
        out[static_cast<size_t>(axis)] += in[i][static_cast<size_t>(axis)];
      }
      return out;
    }
    case OpKind::Pad: {
      const Shape& x = in[0];
      const auto& pads = op.attrs.get_ints("pads");
      if (pads.size() != 2 * x.size()) mismatch(op, "pads must hold 2 values per axis");
      Shape out = x;
      for (size_t i = 0; i < x.size(); ++i) {
        if (pads[i] < 0 || pads[i + x.size()] < 0) throw Error(ErrorCode::UnsupportedKind, "negative Pad amounts");
        out[i] += pads[i] + pads[i + x.size()];
      }
      return out;
    }
  }
  throw Error(ErrorCode::UnsupportedKind, std::string(to_string(op.kind)));
}

Attributes gemm_attributes(bool trans_a, bool trans_b) {
  return {{"transA", int64_t{trans_a}}, {"transB", int64_t{trans_b}}};
}

Attributes conv_attributes(std::vector<int64_t> kernel, std::vector<int64_t> strides, std::vector<int64_t> pads) {
  return {{"kernel_shape", std::move(kernel)},
          {"strides", std::move(strides)},
          {"pads", std::move(pads)},
          {"dilations", std::vector<int64_t>{1, 1}},
          {"group", int64_t{1}}};
}

Attributes pool_attributes(OpKind kind, std::vector<int64_t> kernel, std::vector<int64_t> strides,
                           std::vector<int64_t> pads) {
  Attributes attrs{{"kernel_shape", std::move(kernel)}, {"strides", std::move(strides)}, {"pads", std::move(pads)}};
  if (kind == OpKind::AveragePool) attrs.set("count_include_pad", int64_t{0});
  return attrs;
}

Attributes batch_norm_attributes(double epsilon) { return {{"epsilon", epsilon}}; }
Attributes flatten_attributes(int64_t axis) { return {{"axis", axis}}; }
Attributes reshape_attributes(std::vector<int64_t> shape) { return {{"shape", std::move(shape)}}; }
Attributes transpose_attributes(std::vector<int64_t> perm) { return {{"perm", std::move(perm)}}; }
Attributes concat_attributes(int64_t axis) { return {{"axis", axis}}; }
Attributes pad_attributes(std::vector<int64_t> pads, double value) {
  return {{"pads", std::move(pads)}, {"value", value}};
}

}  // namespace verif::ops

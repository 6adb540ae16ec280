#include "verif/simplify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "verif/error.hpp"
#include "verif/ops.hpp"

namespace verif {
namespace {

using Rewrite = std::function<std::optional<OperationGraph>(const OperationGraph&)>;

OperationGraph to_fixpoint(const OperationGraph& graph, const Rewrite& rewrite, size_t* applied) {
  OperationGraph current = graph;
  size_t count = 0;
  while (auto next = rewrite(current)) {
    current = std::move(*next);
    ++count;
  }
  if (applied) *applied = count;
  return current;
}

std::optional<NodeId> data_producer(const Operation& op) {
  if (op.inputs.empty() || !op.inputs[0].is_node()) return std::nullopt;
  return op.inputs[0].producer();
}

// The producer of `op`'s data input, provided `op` is its only consumer.
std::optional<NodeId> exclusive_producer(const OperationGraph& g, const Operation& op) {
  const auto producer = data_producer(op);
  if (!producer || g.sole_consumer(*producer) != op.id) return std::nullopt;
  return producer;
}

// Broadcasts a bias of shape [], [1], [n] or [1,n] to a length-n vector.
std::optional<std::vector<double>> bias_vector(const Tensor& c, int64_t n) {
  const Shape& s = c.shape();
  const bool scalar_like = c.size() == 1 && s.size() <= 2;
  const bool row = c.size() == n && (s.size() == 1 || (s.size() == 2 && s[0] == 1));
  if (!scalar_like && !row) return std::nullopt;
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = scalar_like ? c[0] : c[i];
  return out;
}

// A plain fully connected Gemm: y = x W^T + b with W laid out [out, in].
struct Dense {
  int64_t out = 0;
  int64_t in = 0;
  std::vector<double> weights;  // row-major [out, in]
  std::vector<double> bias;
};

std::optional<Dense> as_dense(const Operation& op) {
  if (op.kind != OpKind::Gemm || op.attrs.get_int("transA") != 0) return std::nullopt;
  const Tensor& w = op.inputs[1].value();
  const bool tb = op.attrs.get_int("transB") != 0;
  Dense d;
  d.out = tb ? w.shape()[0] : w.shape()[1];
  d.in = tb ? w.shape()[1] : w.shape()[0];
  auto bias = bias_vector(op.inputs[2].value(), d.out);
  if (!bias) return std::nullopt;
  d.bias = std::move(*bias);
  d.weights.resize(static_cast<size_t>(d.out * d.in));
  for (int64_t o = 0; o < d.out; ++o) {
    for (int64_t i = 0; i < d.in; ++i) d.weights[static_cast<size_t>(o * d.in + i)] = tb ? w[o * d.in + i] : w[i * d.out + o];
  }
  return d;
}

NodeId add_dense(GraphBuilder& b, Operand x, const Dense& d) {
  return b.add(OpKind::Gemm,
               {std::move(x), Operand::constant(Tensor({d.out, d.in}, d.weights)), Operand::constant(Tensor::vector(d.bias))},
               ops::gemm_attributes(false, true));
}

struct Normalization {
  std::vector<double> scale;  // gamma / sqrt(var + eps)
  std::vector<double> shift;  // beta - scale * mean
  std::vector<double> mean;
  std::vector<double> beta;
};

Normalization normalization_of(const Operation& bn) {
  const double eps = bn.attrs.get_float("epsilon");
  const Tensor& gamma = bn.inputs[1].value();
  const Tensor& beta = bn.inputs[2].value();
  const Tensor& mean = bn.inputs[3].value();
  const Tensor& var = bn.inputs[4].value();
  Normalization n;
  for (int64_t c = 0; c < gamma.size(); ++c) {
    const double s = gamma[c] / std::sqrt(var[c] + eps);
    n.scale.push_back(s);
    n.shift.push_back(beta[c] - s * mean[c]);
    n.mean.push_back(mean[c]);
    n.beta.push_back(beta[c]);
  }
  return n;
}

std::optional<OperationGraph> fuse_batch_norm_once(const OperationGraph& g) {
  for (NodeId id : topological_order(g)) {
    const Operation& bn = g.op(id);
    if (bn.kind != OpKind::BatchNormalization || !bn.inputs[0].is_node()) continue;
    const Normalization norm = normalization_of(bn);
    const auto channels = static_cast<int64_t>(norm.scale.size());
    GraphBuilder b(g);
    std::optional<NodeId> replacement;

    if (const auto producer = exclusive_producer(g, bn)) {
      const Operation& p = g.op(*producer);
      if (p.kind == OpKind::Conv) {
        Tensor w = p.inputs[1].value();
        const int64_t per_filter = w.size() / channels;
        std::vector<double> bias(static_cast<size_t>(channels));
        for (int64_t m = 0; m < channels; ++m) {
          for (int64_t i = 0; i < per_filter; ++i) w[m * per_filter + i] *= norm.scale[static_cast<size_t>(m)];
          const auto mi = static_cast<size_t>(m);
          bias[mi] = norm.scale[mi] * (p.inputs[2].value()[m] - norm.mean[mi]) + norm.beta[mi];
        }
        w.set_dtype(DType::Float64);
        replacement = b.add(OpKind::Conv, {p.inputs[0], Operand::constant(std::move(w)), Operand::constant(Tensor::vector(bias))},
                            p.attrs);
      } else if (auto dense = as_dense(p); dense && bn.shape.size() == 2) {
        for (int64_t o = 0; o < dense->out; ++o) {
          const auto oi = static_cast<size_t>(o);
          for (int64_t i = 0; i < dense->in; ++i) dense->weights[static_cast<size_t>(o * dense->in + i)] *= norm.scale[oi];
          dense->bias[oi] = norm.scale[oi] * (dense->bias[oi] - norm.mean[oi]) + norm.beta[oi];
        }
        replacement = add_dense(b, p.inputs[0], *dense);
      }
    }
    if (!replacement && bn.shape.size() == 4) {
      Tensor w({channels, channels, 1, 1});
      for (int64_t c = 0; c < channels; ++c) w[c * channels + c] = norm.scale[static_cast<size_t>(c)];
      replacement = b.add(OpKind::Conv, {bn.inputs[0], Operand::constant(std::move(w)), Operand::constant(Tensor::vector(norm.shift))},
                          ops::conv_attributes({1, 1}));
    } else if (!replacement && bn.shape.size() == 2) {
      Dense d{channels, channels, std::vector<double>(static_cast<size_t>(channels * channels), 0.0), norm.shift};
      for (int64_t c = 0; c < channels; ++c) d.weights[static_cast<size_t>(c * channels + c)] = norm.scale[static_cast<size_t>(c)];
      replacement = add_dense(b, bn.inputs[0], d);
    }
    if (!replacement) continue;
    b.replace_uses(id, *replacement);
    return b.build();
  }
  return std::nullopt;
}

std::optional<OperationGraph> remove_identities_once(const OperationGraph& g) {
  for (NodeId id : topological_order(g)) {
    const Operation& op = g.op(id);
    const bool removable =
        op.kind == OpKind::Identity || (op.kind == OpKind::Concat && op.inputs.size() == 1) ||
        (op.kind == OpKind::Flatten && op.inputs[0].is_node() && g.op(op.inputs[0].producer()).shape == op.shape);
    if (!removable || !op.inputs[0].is_node()) continue;
    GraphBuilder b(g);
    b.replace_uses(id, op.inputs[0].producer());
    return b.build();
  }
  return std::nullopt;
}

std::optional<OperationGraph> matmul_add_to_gemm_once(const OperationGraph& g) {
  for (const auto& site : match_pattern(g, {kind_is(OpKind::MatMul), kind_is(OpKind::Add)})) {
    const Operation& mm = g.op(site[0]);
    const Operation& add = g.op(site[1]);
    if (!mm.inputs[0].is_node() || !mm.inputs[1].is_constant()) continue;
    const Tensor& w = mm.inputs[1].value();
    if (w.rank() != 2 || g.op(mm.inputs[0].producer()).shape.size() != 2 || add.shape != mm.shape) continue;
    const size_t bias_slot = add.inputs[0].is_node() && add.inputs[0].producer() == mm.id ? 1 : 0;
    if (!add.inputs[bias_slot].is_constant()) continue;
    auto bias = bias_vector(add.inputs[bias_slot].value(), w.shape()[1]);
    if (!bias) continue;
    GraphBuilder b(g);
    const NodeId gemm = b.add(OpKind::Gemm, {mm.inputs[0], mm.inputs[1], Operand::constant(Tensor::vector(*bias))},
                              ops::gemm_attributes(false, false));
    b.replace_uses(add.id, gemm);
    return b.build();
  }
  return std::nullopt;
}

std::optional<OperationGraph> combine_consecutive_gemm_once(const OperationGraph& g) {
  for (const auto& site : match_pattern(g, {kind_is(OpKind::Gemm), kind_is(OpKind::Gemm)})) {
    const Operation& first = g.op(site[0]);
    const Operation& second = g.op(site[1]);
    if (!second.inputs[0].is_node() || second.inputs[0].producer() != first.id) continue;
    auto d1 = as_dense(first);
    auto d2 = as_dense(second);
    if (!d1 || !d2) continue;
    Dense d{d2->out, d1->in, std::vector<double>(static_cast<size_t>(d2->out * d1->in), 0.0), d2->bias};
    for (int64_t o = 0; o < d.out; ++o) {
      for (int64_t h = 0; h < d1->out; ++h) {
        const double w2 = d2->weights[static_cast<size_t>(o * d2->in + h)];
        for (int64_t i = 0; i < d.in; ++i) {
          d.weights[static_cast<size_t>(o * d.in + i)] += w2 * d1->weights[static_cast<size_t>(h * d1->in + i)];
        }
        d.bias[static_cast<size_t>(o)] += w2 * d1->bias[static_cast<size_t>(h)];
      }
    }
    GraphBuilder b(g);
    const NodeId fused = add_dense(b, first.inputs[0], d);
    b.replace_uses(second.id, fused);
    return b.build();
  }
  return std::nullopt;
}

bool all_zero(const std::vector<int64_t>& v) {
  return std::all_of(v.begin(), v.end(), [](int64_t x) { return x == 0; });
}

std::optional<OperationGraph> combine_consecutive_conv_once(const OperationGraph& g) {
  for (const auto& site : match_pattern(g, {kind_is(OpKind::Conv), kind_is(OpKind::Conv)})) {
    const Operation& first = g.op(site[0]);
    const Operation& second = g.op(site[1]);
    if (!second.inputs[0].is_node() || second.inputs[0].producer() != first.id) continue;
    const Tensor& w1 = first.inputs[1].value();
    const auto& strides = first.attrs.get_ints("strides");
    if (w1.shape()[2] != 1 || w1.shape()[3] != 1 || w1.shape()[0] != w1.shape()[1]) continue;
    if (strides != std::vector<int64_t>{1, 1} || !all_zero(first.attrs.get_ints("pads"))) continue;
    if (!all_zero(second.attrs.get_ints("pads"))) continue;
    const int64_t channels = w1.shape()[0];
    bool diagonal = true;
    for (int64_t i = 0; i < channels && diagonal; ++i) {
      for (int64_t j = 0; j < channels && diagonal; ++j) diagonal = i == j || w1[i * channels + j] == 0.0;
    }
    if (!diagonal) continue;

    Tensor w2 = second.inputs[1].value();
    w2.set_dtype(DType::Float64);
    const Tensor& b1 = first.inputs[2].value();
    const int64_t filters = w2.shape()[0];
    const int64_t window = w2.shape()[2] * w2.shape()[3];
    std::vector<double> bias(second.inputs[2].value().data().begin(), second.inputs[2].value().data().end());
    for (int64_t m = 0; m < filters; ++m) {
      for (int64_t c = 0; c < channels; ++c) {
        const double scale = w1[c * channels + c];
        for (int64_t k = 0; k < window; ++k) {
          const int64_t at = (m * channels + c) * window + k;
          bias[static_cast<size_t>(m)] += w2[at] * b1[c];
          w2[at] *= scale;
        }
      }
    }
    GraphBuilder b(g);
    const NodeId fused = b.add(OpKind::Conv, {first.inputs[0], Operand::constant(std::move(w2)), Operand::constant(Tensor::vector(bias))},
                               second.attrs);
    b.replace_uses(second.id, fused);
    return b.build();
  }
  return std::nullopt;
}

bool non_negative(const OperationGraph& g, const Operand& x) {
  if (!x.is_node()) return false;
  const OpKind k = g.op(x.producer()).kind;
  return k == OpKind::Relu || k == OpKind::Sigmoid;
}

std::optional<OperationGraph> bundle_pad_once(const OperationGraph& g) {
  for (const auto& site : match_pattern(g, {kind_is(OpKind::Pad), kind_in({OpKind::Conv, OpKind::MaxPool})})) {
    const Operation& pad = g.op(site[0]);
    const Operation& next = g.op(site[1]);
    if (!pad.inputs[0].is_node() || !next.inputs[0].is_node() || next.inputs[0].producer() != pad.id) continue;
    const auto& amounts = pad.attrs.get_ints("pads");
    if (pad.attrs.get_float("value") != 0.0 || amounts.size() != 8) continue;
    if (amounts[0] || amounts[1] || amounts[4] || amounts[5]) continue;
    std::vector<int64_t> pads = next.attrs.get_ints("pads");
    pads[0] += amounts[2];
    pads[1] += amounts[3];
    pads[2] += amounts[6];
    pads[3] += amounts[7];
    if (next.kind == OpKind::MaxPool) {
      // Zero padding only matches MaxPool's implicit padding when every window
      // still sees a real element and the input cannot go negative.
      const auto& kernel = next.attrs.get_ints("kernel_shape");
      if (!non_negative(g, pad.inputs[0]) || pads[0] >= kernel[0] || pads[2] >= kernel[0] || pads[1] >= kernel[1] ||
          pads[3] >= kernel[1]) {
        continue;
      }
    }
    Attributes attrs = next.attrs;
    attrs.set("pads", pads);
    std::vector<Operand> inputs = next.inputs;
    inputs[0] = pad.inputs[0];
    GraphBuilder b(g);
    const NodeId merged = b.add(next.kind, std::move(inputs), std::move(attrs));
    b.replace_uses(next.id, merged);
    return b.build();
  }
  return std::nullopt;
}

std::optional<OperationGraph> move_activations_backward_once(const OperationGraph& g) {
  for (NodeId id : topological_order(g)) {
    const Operation& act = g.op(id);
    if (!is_activation(act.kind)) continue;
    const auto producer = exclusive_producer(g, act);
    if (!producer) continue;
    const Operation& reshape = g.op(*producer);
    if (!is_reshaping(reshape.kind) || !reshape.inputs[0].is_node()) continue;
    GraphBuilder b(g);
    const NodeId moved = b.add(act.kind, {reshape.inputs[0]}, act.attrs);
    const NodeId reshaped = b.add(reshape.kind, {Operand::node(moved)}, reshape.attrs);
    b.replace_uses(id, reshaped);
    return b.build();
  }
  return std::nullopt;
}

}  // namespace

OperationGraph fuse_batch_norm(const OperationGraph& graph, size_t* applied) {
  return to_fixpoint(graph, fuse_batch_norm_once, applied);
}
OperationGraph remove_identities(const OperationGraph& graph, size_t* applied) {
  return to_fixpoint(graph, remove_identities_once, applied);
}
OperationGraph matmul_add_to_gemm(const OperationGraph& graph, size_t* applied) {
  return to_fixpoint(graph, matmul_add_to_gemm_once, applied);
}
OperationGraph combine_consecutive_gemm(const OperationGraph& graph, size_t* applied) {
  return to_fixpoint(graph, combine_consecutive_gemm_once, applied);
}
OperationGraph combine_consecutive_conv(const OperationGraph& graph, size_t* applied) {
  return to_fixpoint(graph, combine_consecutive_conv_once, applied);
}
OperationGraph bundle_pad(const OperationGraph& graph, size_t* applied) {
  return to_fixpoint(graph, bundle_pad_once, applied);
}
OperationGraph move_activations_backward(const OperationGraph& graph, size_t* applied) {
  return to_fixpoint(graph, move_activations_backward_once, applied);
}

size_t SimplifyReport::total() const {
  size_t n = 0;
  for (const auto& [name, count] : applications) n += count;
  return n;
}

const std::vector<std::string>& simplification_passes() {
  static const std::vector<std::string> names = {"remove_identities", "matmul_add_to_gemm", "fuse_batch_norm",
                                                 "combine_consecutive_conv", "combine_consecutive_gemm", "bundle_pad",
                                                 "move_activations_backward"};
  return names;
}

SimplifyResult simplify(const OperationGraph& graph) {
  using Pass = OperationGraph (*)(const OperationGraph&, size_t*);
  static const Pass passes[] = {remove_identities, matmul_add_to_gemm, fuse_batch_norm, combine_consecutive_conv,
                                combine_consecutive_gemm, bundle_pad, move_activations_backward};
  SimplifyResult result{graph, {}};
  result.report.nodes_before = graph.size();
  for (const auto& name : simplification_passes()) result.report.applications[name] = 0;
  while (true) {
    size_t changed = 0;
    for (size_t i = 0; i < std::size(passes); ++i) {
      size_t n = 0;
      result.graph = passes[i](result.graph, &n);
      result.report.applications[simplification_passes()[i]] += n;
      changed += n;
    }
    ++result.report.rounds;
    if (changed == 0) break;
  }
  result.report.nodes_after = result.graph.size();
  return result;
}

}  // namespace verif

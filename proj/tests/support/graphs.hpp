#pragma once

#include <random>
#include <utility>
#include <vector>

#include "support/testing.hpp"
#include "verif/simplify.hpp"

namespace verif::testing {

inline Operand vec(std::vector<double> v) { return Operand::constant(Tensor::vector(std::move(v))); }

inline NodeId conv(GraphBuilder& b, NodeId x, Tensor w, Tensor bias, std::vector<int64_t> strides = {1, 1},
                   std::vector<int64_t> pads = {0, 0, 0, 0}) {
  const std::vector<int64_t> kernel = {w.shape()[2], w.shape()[3]};
  return b.add(OpKind::Conv, {Operand::node(x), Operand::constant(std::move(w)), Operand::constant(std::move(bias))},
               ops::conv_attributes(kernel, strides, pads));
}

inline NodeId batch_norm(GraphBuilder& b, NodeId x, std::vector<double> gamma, std::vector<double> beta,
                         std::vector<double> mean, std::vector<double> var, double eps) {
  return b.add(OpKind::BatchNormalization,
               {Operand::node(x), vec(std::move(gamma)), vec(std::move(beta)), vec(std::move(mean)), vec(std::move(var))},
               ops::batch_norm_attributes(eps));
}

inline NodeId gemm(GraphBuilder& b, NodeId x, Tensor w, Tensor bias) {
  return b.add(OpKind::Gemm, {Operand::node(x), Operand::constant(std::move(w)), Operand::constant(std::move(bias))},
               ops::gemm_attributes());
}

// A chain exercising every rewrite once: conv section on [1, 2, 6, 6], then a dense section.
inline OperationGraph every_pattern(std::mt19937_64& rng) {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 2, 6, 6});
  const NodeId id = b.add(OpKind::Identity, {Operand::node(x)});
  const NodeId bn = batch_norm(b, id, {1.5, 0.5}, {0.1, -0.2}, {0.3, 0.0}, {2.0, 0.5}, 1e-5);
  const NodeId c1 = conv(b, bn, random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng));
  const NodeId pad = b.add(OpKind::Pad, {Operand::node(c1)}, ops::pad_attributes({0, 0, 1, 1, 0, 0, 1, 1}));
  const NodeId c2 = conv(b, pad, random_tensor({2, 3, 3, 3}, rng), random_tensor({2}, rng));
  const NodeId flat = b.add(OpKind::Flatten, {Operand::node(c2)}, ops::flatten_attributes(1));
  const NodeId relu = b.add(OpKind::Relu, {Operand::node(flat)});
  const NodeId mm = b.add(OpKind::MatMul, {Operand::node(relu), Operand::constant(random_tensor({32, 5}, rng, -0.3, 0.3))});
  const NodeId add = b.add(OpKind::Add, {Operand::node(mm), Operand::constant(random_tensor({5}, rng))});
  const NodeId g = gemm(b, add, random_tensor({5, 3}, rng), random_tensor({3}, rng));
  b.set_outputs({g});
  return b.build();
}

// Random chains built from rewrite motifs and neutral operations.
inline OperationGraph random_graph(std::mt19937_64& rng) {
  GraphBuilder b;
  int64_t c = 2;
  const int64_t hw = 5;
  NodeId cur = b.add_input({1, c, hw, hw});
  auto coin = [&](int n) { return static_cast<int>(rng() % static_cast<uint64_t>(n)); };
  bool nonneg = false;
  const int conv_steps = 1 + coin(5);
  for (int i = 0; i < conv_steps; ++i) {
    bool next_nonneg = false;
    switch (coin(8)) {
      case 0: {
        std::vector<double> g, be, m, v;
        for (int64_t k = 0; k < c; ++k) {
          g.push_back(0.5 + coin(100) / 100.0), be.push_back(coin(100) / 100.0 - 0.5);
          m.push_back(coin(100) / 100.0 - 0.5), v.push_back(0.5 + coin(100) / 100.0);
        }
        cur = batch_norm(b, cur, g, be, m, v, 1e-3);
        break;
      }
      case 1: {
        Tensor w = Tensor::zeros({c, c, 1, 1});
        for (int64_t k = 0; k < c; ++k) w.at({k, k, 0, 0}) = 0.5 + coin(100) / 100.0;
        cur = conv(b, cur, w, random_tensor({c}, rng));
        break;
      }
      case 2: {
        const int64_t out = 1 + coin(3);
        cur = conv(b, cur, random_tensor({out, c, 3, 3}, rng, -0.5, 0.5), random_tensor({out}, rng), {1, 1}, {1, 1, 1, 1});
        c = out;
        break;
      }
      case 3: {
        cur = b.add(OpKind::Pad, {Operand::node(cur)}, ops::pad_attributes({0, 0, 1, 1, 0, 0, 1, 1}));
        const int64_t out = 1 + coin(3);
        cur = conv(b, cur, random_tensor({out, c, 3, 3}, rng, -0.5, 0.5), random_tensor({out}, rng));
        c = out;
        break;
      }
      case 4:
        cur = b.add(OpKind::Relu, {Operand::node(cur)});
        next_nonneg = true;
        break;
      case 5:
        if (nonneg) {
          cur = b.add(OpKind::Pad, {Operand::node(cur)}, ops::pad_attributes({0, 0, 0, 0, 0, 0, 1, 1}));
          cur = b.add(OpKind::MaxPool, {Operand::node(cur)}, ops::pool_attributes(OpKind::MaxPool, {2, 2}, {1, 1}));
          next_nonneg = true;
        } else {
          cur = b.add(OpKind::Identity, {Operand::node(cur)});
        }
        break;
      case 6:
        cur = b.add(OpKind::Transpose, {Operand::node(cur)}, ops::transpose_attributes({0, 1, 3, 2}));
        cur = b.add(coin(2) ? OpKind::Sigmoid : OpKind::Relu, {Operand::node(cur)});
        break;
      default:
        cur = b.add(OpKind::Concat, {Operand::node(cur)}, ops::concat_attributes(1));
        next_nonneg = nonneg;
        break;
    }
    nonneg = next_nonneg;
  }
  cur = b.add(OpKind::Flatten, {Operand::node(cur)}, ops::flatten_attributes(1));
  if (coin(2)) cur = b.add(OpKind::Tanh, {Operand::node(cur)});
  int64_t f = c * hw * hw;
  const int dense_steps = 1 + coin(5);
  for (int i = 0; i < dense_steps; ++i) {
    switch (coin(6)) {
      case 0: {
        const int64_t out = 2 + coin(5);
        cur = gemm(b, cur, random_tensor({f, out}, rng, -0.4, 0.4), random_tensor({out}, rng));
        f = out;
        break;
      }
      case 1: {
        const int64_t out = 2 + coin(5);
        cur = b.add(OpKind::MatMul, {Operand::node(cur), Operand::constant(random_tensor({f, out}, rng, -0.4, 0.4))});
        cur = b.add(OpKind::Add, {Operand::node(cur), Operand::constant(random_tensor({out}, rng))});
        f = out;
        break;
      }
      case 2: cur = b.add(OpKind::Relu, {Operand::node(cur)}); break;
      case 3: {
        std::vector<double> g, be, m, v;
        for (int64_t k = 0; k < f; ++k) {
          g.push_back(0.5 + coin(100) / 100.0), be.push_back(coin(100) / 100.0 - 0.5);
          m.push_back(coin(100) / 100.0 - 0.5), v.push_back(0.5 + coin(100) / 100.0);
        }
        cur = batch_norm(b, cur, g, be, m, v, 1e-3);
        break;
      }
      case 4:
        cur = b.add(OpKind::Reshape, {Operand::node(cur)}, ops::reshape_attributes({1, -1}));
        cur = b.add(OpKind::Sigmoid, {Operand::node(cur)});
        break;
      default: cur = b.add(OpKind::Identity, {Operand::node(cur)}); break;
    }
  }
  b.set_outputs({cur});
  return b.build();
}

using Pass = OperationGraph (*)(const OperationGraph&, size_t*);
inline const std::vector<std::pair<const char*, Pass>> kPasses = {
    {"fuse_batch_norm", fuse_batch_norm},
    {"remove_identities", remove_identities},
    {"matmul_add_to_gemm", matmul_add_to_gemm},
    {"combine_consecutive_gemm", combine_consecutive_gemm},
    {"combine_consecutive_conv", combine_consecutive_conv},
    {"bundle_pad", bundle_pad},
    {"move_activations_backward", move_activations_backward},
};

}  // namespace verif::testing

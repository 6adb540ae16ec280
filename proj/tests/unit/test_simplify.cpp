#include <doctest.h>

#include <map>
#include <random>

#include "support/graphs.hpp"
#include "verif/simplify.hpp"

using namespace verif;
using namespace verif::testing;

namespace {

const Operation& only(const OperationGraph& g, OpKind kind) {
  for (const auto& op : g.operations()) {
    if (op.kind == kind) return op;
  }
  FAIL("no operation of kind " << to_string(kind));
  return g.operations().front();
}

OperationGraph conv_then_bn(double w, double bias, double gamma, double beta, double mean, double var) {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 1, 1, 1});
  const NodeId c = conv(b, x, Tensor({1, 1, 1, 1}, {w}), Tensor::vector({bias}));
  b.set_outputs({batch_norm(b, c, {gamma}, {beta}, {mean}, {var}, 0.0)});
  return b.build();
}

}  // namespace

TEST_CASE("fuse_batch_norm folds into a preceding conv") {
  const auto g = conv_then_bn(2, 1, 3, 0.5, 1, 4);
  size_t n = 0;
  const auto s = fuse_batch_norm(g, &n);
  CHECK(n == 1);
  CHECK(s.size() == 2);
  const Operation& c = only(s, OpKind::Conv);
  CHECK(c.inputs[1].value()[0] == 3.0);
  CHECK(c.inputs[2].value()[0] == 0.5);
  for (double x : {-1.0, 0.0, 1.0}) {
    const Tensor in({1, 1, 1, 1}, {x});
    CHECK(testing::run1(s, in)[0] == doctest::Approx(3 * x + 0.5).epsilon(1e-12));
    CHECK(testing::run1(s, in)[0] == doctest::Approx(testing::run1(g, in)[0]).epsilon(1e-12));
  }
}

TEST_CASE("identity batch norm leaves the conv unchanged") {
  const auto g = conv_then_bn(2, 1, 1, 0, 0, 1);
  const auto s = fuse_batch_norm(g);
  const Operation& c = only(s, OpKind::Conv);
  CHECK(c.inputs[1].value()[0] == 2.0);
  CHECK(c.inputs[2].value()[0] == 1.0);
}

TEST_CASE("fuse_batch_norm keeps strides and pads") {
  std::mt19937_64 rng(2);
  GraphBuilder b;
  const NodeId x = b.add_input({1, 2, 7, 7});
  const NodeId c = conv(b, x, random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), {2, 2}, {1, 0, 1, 0});
  b.set_outputs({batch_norm(b, c, {1, 2, 3}, {0, 1, 0}, {0.5, 0, -1}, {1, 2, 0.5}, 1e-5)});
  const auto g = b.build();
  const auto s = fuse_batch_norm(g);
  CHECK(count_kind(s, OpKind::BatchNormalization) == 0);
  CHECK(only(s, OpKind::Conv).attrs == only(g, OpKind::Conv).attrs);
  CHECK(max_deviation(g, s, 100) <= 1e-9);
}

TEST_CASE("standalone batch norm becomes a 1x1 conv") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 3, 4, 4});
  b.set_outputs({batch_norm(b, x, {1, 2, 3}, {0, 1, 0}, {0.5, 0, -1}, {1, 2, 0.5}, 1e-5)});
  const auto g = b.build();
  size_t n = 0;
  const auto s = fuse_batch_norm(g, &n);
  CHECK(n == 1);
  CHECK(count_kind(s, OpKind::BatchNormalization) == 0);
  const Operation& c = only(s, OpKind::Conv);
  CHECK(c.attrs.get_ints("kernel_shape") == std::vector<int64_t>{1, 1});
  CHECK(max_deviation(g, s, 100) <= 1e-9);
}

TEST_CASE("batch norm on a rank-2 tensor becomes a diagonal gemm") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 3});
  b.set_outputs({batch_norm(b, x, {1, 2, 3}, {0, 1, 0}, {0.5, 0, -1}, {1, 2, 0.5}, 1e-5)});
  const auto g = b.build();
  const auto s = fuse_batch_norm(g);
  CHECK(count_kind(s, OpKind::Gemm) == 1);
  CHECK(max_deviation(g, s, 100) <= 1e-9);
}

TEST_CASE("remove_identities") {
  SUBCASE("identity op") {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 3});
    b.set_outputs({b.add(OpKind::Identity, {Operand::node(x)})});
    const auto s = remove_identities(b.build());
    CHECK(s.size() == 1);
    CHECK(s.outputs() == s.inputs());
  }
  SUBCASE("single-input concat") {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 3});
    const NodeId r = b.add(OpKind::Relu, {Operand::node(x)});
    b.set_outputs({b.add(OpKind::Concat, {Operand::node(r)}, ops::concat_attributes(1))});
    const auto s = remove_identities(b.build());
    CHECK(s.size() == 2);
    CHECK(s.outputs() == std::vector<NodeId>{r});
  }
  SUBCASE("flatten only when already flat") {
    for (const Shape& shape : {Shape{1, 10}, Shape{1, 3, 4}}) {
      GraphBuilder b;
      const NodeId x = b.add_input(shape);
      b.set_outputs({b.add(OpKind::Flatten, {Operand::node(x)}, ops::flatten_attributes(1))});
      const auto s = remove_identities(b.build());
      CHECK(count_kind(s, OpKind::Flatten) == (shape.size() == 2 ? 0u : 1u));
    }
  }
}

TEST_CASE("matmul_add_to_gemm") {
  auto build = [](bool second_consumer, bool constant_bias) {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 1});
    const NodeId mm = b.add(OpKind::MatMul, {Operand::node(x), Operand::constant(Tensor::matrix(1, 1, {2}))});
    const Operand bias = constant_bias ? vec({1}) : Operand::node(x);
    std::vector<NodeId> outs{b.add(OpKind::Add, {Operand::node(mm), bias})};
    if (second_consumer) outs.push_back(b.add(OpKind::Relu, {Operand::node(mm)}));
    b.set_outputs(outs);
    return b.build();
  };
  const auto fused = matmul_add_to_gemm(build(false, true));
  CHECK(count_kind(fused, OpKind::Gemm) == 1);
  CHECK(count_kind(fused, OpKind::MatMul) == 0);
  CHECK(testing::run1(fused, Tensor::matrix(1, 1, {3}))[0] == 7.0);

  size_t n = 0;
  matmul_add_to_gemm(build(true, true), &n);
  CHECK(n == 0);
  matmul_add_to_gemm(build(false, false), &n);
  CHECK(n == 0);
}

TEST_CASE("combine_consecutive_gemm") {
  SUBCASE("scalar example") {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 1});
    const NodeId g1 = gemm(b, x, Tensor::matrix(1, 1, {2}), Tensor::vector({1}));
    b.set_outputs({gemm(b, g1, Tensor::matrix(1, 1, {3}), Tensor::vector({-1}))});
    const auto s = combine_consecutive_gemm(b.build());
    const Operation& g = only(s, OpKind::Gemm);
    CHECK(count_kind(s, OpKind::Gemm) == 1);
    CHECK(g.inputs[1].value()[0] == 6.0);
    CHECK(g.inputs[2].value()[0] == 2.0);
  }
  SUBCASE("identity second layer") {
    std::mt19937_64 rng(4);
    GraphBuilder b;
    const NodeId x = b.add_input({1, 3});
    const NodeId g1 = gemm(b, x, random_tensor({3, 2}, rng), random_tensor({2}, rng));
    b.set_outputs({gemm(b, g1, Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::vector({0, 0}))});
    const auto g = b.build();
    const auto s = combine_consecutive_gemm(g);
    CHECK(count_kind(s, OpKind::Gemm) == 1);
    CHECK(max_deviation(g, s, 20) == 0.0);
  }
  SUBCASE("three gemms collapse to one") {
    std::mt19937_64 rng(8);
    GraphBuilder b;
    NodeId cur = b.add_input({1, 4});
    for (int64_t out : {5, 3, 2}) {
      const int64_t in = b.op(cur).kind == OpKind::Input ? 4 : b.op(cur).inputs[1].value().shape()[1];
      cur = gemm(b, cur, random_tensor({in, out}, rng), random_tensor({out}, rng));
    }
    b.set_outputs({cur});
    const auto g = b.build();
    const auto s = combine_consecutive_gemm(g);
    CHECK(count_kind(s, OpKind::Gemm) == 1);
    CHECK(max_deviation(g, s, 100) <= 1e-9);
  }
}

TEST_CASE("combine_consecutive_conv") {
  std::mt19937_64 rng(12);
  const Tensor k = random_tensor({1, 1, 3, 3}, rng);
  auto build = [&](std::vector<int64_t> strides1, std::vector<int64_t> pads2) {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 1, 5, 5});
    const NodeId c1 = conv(b, x, Tensor({1, 1, 1, 1}, {2}), Tensor::vector({0}), strides1);
    b.set_outputs({conv(b, c1, k, Tensor::vector({0.25}), {1, 1}, pads2)});
    return b.build();
  };
  const auto g = build({1, 1}, {0, 0, 0, 0});
  size_t n = 0;
  const auto s = combine_consecutive_conv(g, &n);
  CHECK(n == 1);
  CHECK(count_kind(s, OpKind::Conv) == 1);
  const Operation& c = only(s, OpKind::Conv);
  for (int64_t i = 0; i < 9; ++i) CHECK(c.inputs[1].value()[i] == 2 * k[i]);
  CHECK(c.inputs[2].value()[0] == 0.25);
  CHECK(max_deviation(g, s, 100) <= 1e-9);

  combine_consecutive_conv(build({2, 2}, {0, 0, 0, 0}), &n);
  CHECK(n == 0);
  combine_consecutive_conv(build({1, 1}, {1, 1, 1, 1}), &n);
  CHECK(n == 0);
}

TEST_CASE("combine_consecutive_conv carries the first bias through") {
  std::mt19937_64 rng(13);
  GraphBuilder b;
  const NodeId x = b.add_input({1, 2, 5, 5});
  Tensor diag = Tensor::zeros({2, 2, 1, 1});
  diag.at({0, 0, 0, 0}) = 1.5;
  diag.at({1, 1, 0, 0}) = -0.5;
  const NodeId c1 = conv(b, x, diag, Tensor::vector({0.3, -0.7}));
  b.set_outputs({conv(b, c1, random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng), {2, 1})});
  const auto g = b.build();
  const auto s = combine_consecutive_conv(g);
  CHECK(count_kind(s, OpKind::Conv) == 1);
  CHECK(max_deviation(g, s, 100) <= 1e-9);
}

TEST_CASE("bundle_pad") {
  std::mt19937_64 rng(14);
  auto build = [&](double value, bool into_conv) {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 1, 4, 4});
    const NodeId pad = b.add(OpKind::Pad, {Operand::node(x)}, ops::pad_attributes({0, 0, 1, 1, 0, 0, 1, 1}, value));
    const NodeId out = into_conv ? conv(b, pad, random_tensor({1, 1, 3, 3}, rng), Tensor::vector({0}))
                                 : b.add(OpKind::Relu, {Operand::node(pad)});
    b.set_outputs({out});
    return b.build();
  };
  const auto g = build(0.0, true);
  const auto s = bundle_pad(g);
  CHECK(count_kind(s, OpKind::Pad) == 0);
  CHECK(only(s, OpKind::Conv).attrs.get_ints("pads") == std::vector<int64_t>{1, 1, 1, 1});
  CHECK(max_deviation(g, s, 100) <= 1e-9);

  size_t n = 0;
  bundle_pad(build(1.0, true), &n);
  CHECK(n == 0);
  bundle_pad(build(0.0, false), &n);
  CHECK(n == 0);
}

TEST_CASE("bundle_pad into max pool only for non-negative inputs") {
  auto build = [](bool relu_first) {
    GraphBuilder b;
    NodeId cur = b.add_input({1, 1, 4, 4});
    if (relu_first) cur = b.add(OpKind::Relu, {Operand::node(cur)});
    cur = b.add(OpKind::Pad, {Operand::node(cur)}, ops::pad_attributes({0, 0, 1, 1, 0, 0, 1, 1}));
    b.set_outputs({b.add(OpKind::MaxPool, {Operand::node(cur)}, ops::pool_attributes(OpKind::MaxPool, {2, 2}, {2, 2}))});
    return b.build();
  };
  size_t n = 0;
  const auto g = build(true);
  const auto s = bundle_pad(g, &n);
  CHECK(n == 1);
  CHECK(max_deviation(g, s, 100) <= 1e-9);
  bundle_pad(build(false), &n);
  CHECK(n == 0);
}

TEST_CASE("move_activations_backward") {
  std::mt19937_64 rng(15);
  SUBCASE("gemm, flatten, relu") {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 3});
    const NodeId g1 = gemm(b, x, random_tensor({3, 4}, rng), random_tensor({4}, rng));
    const NodeId fl = b.add(OpKind::Flatten, {Operand::node(g1)}, ops::flatten_attributes(1));
    b.set_outputs({b.add(OpKind::Relu, {Operand::node(fl)})});
    const auto g = b.build();
    const auto s = move_activations_backward(g);
    const auto order = topological_order(s);
    REQUIRE(order.size() == 4);
    CHECK(s.op(order[1]).kind == OpKind::Gemm);
    CHECK(s.op(order[2]).kind == OpKind::Relu);
    CHECK(s.op(order[3]).kind == OpKind::Flatten);
    CHECK(max_deviation(g, s, 20) == 0.0);
  }
  SUBCASE("already in place") {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 3});
    const NodeId g1 = gemm(b, x, random_tensor({3, 4}, rng), random_tensor({4}, rng));
    b.set_outputs({b.add(OpKind::Relu, {Operand::node(g1)})});
    size_t n = 0;
    move_activations_backward(b.build(), &n);
    CHECK(n == 0);
  }
  SUBCASE("through reshape and transpose") {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 3});
    const NodeId g1 = gemm(b, x, random_tensor({3, 6}, rng), random_tensor({6}, rng));
    const NodeId rs = b.add(OpKind::Reshape, {Operand::node(g1)}, ops::reshape_attributes({1, 2, 3}));
    const NodeId tr = b.add(OpKind::Transpose, {Operand::node(rs)}, ops::transpose_attributes({0, 2, 1}));
    b.set_outputs({b.add(OpKind::Relu, {Operand::node(tr)})});
    const auto g = b.build();
    const auto s = move_activations_backward(g);
    std::vector<OpKind> kinds;
    for (NodeId id : topological_order(s)) kinds.push_back(s.op(id).kind);
    CHECK(kinds == std::vector<OpKind>{OpKind::Input, OpKind::Gemm, OpKind::Relu, OpKind::Reshape, OpKind::Transpose});
    CHECK(max_deviation(g, s, 20) == 0.0);
  }
}

TEST_CASE("simplify on an already simple graph changes nothing") {
  std::mt19937_64 rng(16);
  const auto g = testing::dense_network({3, 4, 2}, rng);
  const auto r = simplify(g);
  CHECK(r.report.total() == 0);
  CHECK(r.report.rounds == 1);
  CHECK(structurally_equal(g, r.graph));
  for (const auto& name : simplification_passes()) CHECK(r.report.applications.at(name) == 0);
}

TEST_CASE("conv followed by batch norm simplifies to a single conv") {
  std::mt19937_64 rng(17);
  GraphBuilder b;
  const NodeId x = b.add_input({1, 3, 6, 6});
  const NodeId c = conv(b, x, random_tensor({4, 3, 3, 3}, rng), random_tensor({4}, rng), {1, 1}, {1, 1, 1, 1});
  b.set_outputs({batch_norm(b, c, {1, 2, 0.5, 1.5}, {0, 0.1, 0.2, 0.3}, {0.1, 0.2, 0.3, 0.4}, {1, 2, 3, 4}, 1e-5)});
  const auto g = b.build();
  const auto r = simplify(g);
  CHECK(r.graph.size() == 2);
  CHECK(count_kind(r.graph, OpKind::Conv) == 1);
  CHECK(max_deviation(g, r.graph, 100) <= 1e-9);
}

TEST_CASE("every pass fires on a graph containing each pattern") {
  std::mt19937_64 rng(18);
  const auto g = every_pattern(rng);
  const auto r = simplify(g);
  for (const auto& name : simplification_passes()) CHECK_MESSAGE(r.report.applications.at(name) >= 1, name);
  CHECK(r.report.nodes_after < r.report.nodes_before);
  CHECK(max_deviation(g, r.graph, 100) <= 1e-9);
}

TEST_CASE("every pass preserves semantics on generated graphs") {
  std::mt19937_64 rng(19);
  std::map<std::string, size_t> fired;
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = random_graph(rng);
    for (const auto& [name, pass] : kPasses) {
      const auto s = pass(g, nullptr);
      CHECK_MESSAGE(max_deviation(g, s, 100, trial) <= 1e-9, name << " trial " << trial);
    }
    const auto r = simplify(g);
    for (const auto& [name, count] : r.report.applications) fired[name] += count;
    CHECK(max_deviation(g, r.graph, 100, trial) <= 1e-9);
    CHECK(r.report.nodes_after <= r.report.nodes_before);
    // Idempotence
    const auto again = simplify(r.graph);
    CHECK(again.report.total() == 0);
    CHECK(structurally_equal(again.graph, r.graph));
  }
  // The corpus is only meaningful if it exercises every rewrite.
  for (const auto& name : simplification_passes()) CHECK_MESSAGE(fired[name] > 0, name);
}

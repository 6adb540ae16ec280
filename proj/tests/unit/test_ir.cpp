#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <random>

#include "support/testing.hpp"
#include "verif/error.hpp"
#include "verif/graph.hpp"
#include "verif/infer.hpp"
#include "verif/ops.hpp"

using namespace verif;
using verif::testing::random_tensor;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidGraph;
}

}  // namespace

TEST_CASE("topological order of a single input") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 3});
  b.set_outputs({x});
  const auto g = b.build();
  CHECK(topological_order(g) == std::vector<NodeId>{x});
}

TEST_CASE("topological order of a chain") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 1});
  const NodeId gemm = b.add(OpKind::Gemm, {Operand::node(x), Operand::constant(Tensor::matrix(1, 1, {2})),
                                           Operand::constant(Tensor::vector({1}))},
                            ops::gemm_attributes());
  const NodeId relu = b.add(OpKind::Relu, {Operand::node(gemm)});
  b.set_outputs({relu});
  CHECK(topological_order(b.build()) == std::vector<NodeId>{x, gemm, relu});
}

TEST_CASE("diamond order is one of the valid orders and breaks ties by id") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 2});
  const NodeId a = b.add(OpKind::Relu, {Operand::node(x)});
  const NodeId c = b.add(OpKind::Sigmoid, {Operand::node(x)});
  const NodeId cat = b.add(OpKind::Concat, {Operand::node(a), Operand::node(c)}, ops::concat_attributes(1));
  b.set_outputs({cat});
  const auto g = b.build();
  const auto order = topological_order(g);

  // Brute force: every permutation that respects the edges.
  std::vector<NodeId> perm = {x, a, c, cat};
  std::sort(perm.begin(), perm.end());
  std::vector<std::vector<NodeId>> valid;
  do {
    auto pos = [&](NodeId id) { return std::find(perm.begin(), perm.end(), id) - perm.begin(); };
    bool ok = true;
    for (const auto& op : g.operations()) {
      for (const auto& in : op.inputs) {
        if (in.is_node() && pos(in.producer()) > pos(op.id)) ok = false;
      }
    }
    if (ok) valid.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(valid.size() == 2);
  CHECK(std::find(valid.begin(), valid.end(), order) != valid.end());
  CHECK(order.front() == x);
  CHECK(order.back() == cat);
  CHECK(std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), c));
}

TEST_CASE("cycles are detected") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 2});
  const NodeId a = b.add(OpKind::Relu, {Operand::node(x)});
  const NodeId c = b.add(OpKind::Add, {Operand::node(a), Operand::node(x)});
  b.op(a).inputs[0].rewire(c);
  b.set_outputs({c});
  CHECK(code_of([&] { b.build(); }) == ErrorCode::CycleDetected);
}

TEST_CASE("infer examples") {
  SUBCASE("identity graph") {
    GraphBuilder b;
    const NodeId x = b.add_input({3});
    b.set_outputs({x});
    CHECK(testing::run1(b.build(), Tensor::vector({1, 2, 3})) == Tensor::vector({1, 2, 3}));
  }
  SUBCASE("gemm 2*3+1") {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 1});
    const NodeId y = b.add(OpKind::Gemm, {Operand::node(x), Operand::constant(Tensor::matrix(1, 1, {2})),
                                          Operand::constant(Tensor::vector({1}))},
                           ops::gemm_attributes());
    b.set_outputs({y});
    CHECK(testing::run1(b.build(), Tensor::matrix(1, 1, {3}))[0] == 7.0);
  }
  SUBCASE("relu") {
    GraphBuilder b;
    const NodeId x = b.add_input({3});
    b.set_outputs({b.add(OpKind::Relu, {Operand::node(x)})});
    CHECK(testing::run1(b.build(), Tensor::vector({-1, 0, 2})) == Tensor::vector({0, 0, 2}));
  }
}

TEST_CASE("infer rejects inputs of the wrong shape") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 3});
  b.set_outputs({b.add(OpKind::Relu, {Operand::node(x)})});
  const auto g = b.build();
  CHECK(code_of([&] { testing::run1(g, Tensor::vector({1, 2})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("attribute sets are validated per kind") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 3});
  Attributes attrs;
  attrs.set("axis", int64_t{1});
  b.set_outputs({b.add(OpKind::Relu, {Operand::node(x)}, attrs)});
  CHECK(code_of([&] { b.build(); }) == ErrorCode::InvalidGraph);

  GraphBuilder c;
  const NodeId y = c.add_input({1, 1, 4, 4});
  Attributes conv = ops::conv_attributes({3, 3});
  conv.set("group", int64_t{2});
  c.set_outputs({c.add(OpKind::Conv, {Operand::node(y), Operand::constant(Tensor::zeros({1, 1, 3, 3})),
                                      Operand::constant(Tensor::zeros({1}))},
                       conv)});
  CHECK(code_of([&] { c.build(); }) == ErrorCode::UnsupportedKind);
}

TEST_CASE("match_pattern honours the single-use constraint") {
  auto conv_bn = [](bool second_consumer) {
    GraphBuilder b;
    const NodeId x = b.add_input({1, 1, 3, 3});
    const NodeId conv = b.add(OpKind::Conv, {Operand::node(x), Operand::constant(Tensor({1, 1, 1, 1}, {2})),
                                             Operand::constant(Tensor::vector({1}))},
                              ops::conv_attributes({1, 1}));
    auto c = [](double v) { return Operand::constant(Tensor::vector({v})); };
    const NodeId bn = b.add(OpKind::BatchNormalization, {Operand::node(conv), c(3), c(0.5), c(1), c(4)},
                            ops::batch_norm_attributes(0));
    std::vector<NodeId> outs{bn};
    if (second_consumer) outs.push_back(b.add(OpKind::Relu, {Operand::node(conv)}));
    b.set_outputs(outs);
    return b.build();
  };
  const std::vector<KindPredicate> pattern = {kind_is(OpKind::Conv), kind_is(OpKind::BatchNormalization)};
  CHECK(match_pattern(conv_bn(false), pattern).size() == 1);
  CHECK(match_pattern(conv_bn(true), pattern).empty());

  GraphBuilder b;
  const NodeId x = b.add_input({1, 2});
  const NodeId mm = b.add(OpKind::MatMul, {Operand::node(x), Operand::constant(Tensor::matrix(2, 2, {1, 2, 3, 4}))});
  const NodeId add = b.add(OpKind::Add, {Operand::node(mm), Operand::constant(Tensor::vector({1, 1}))});
  b.set_outputs({add});
  const auto sites = match_pattern(b.build(), {kind_is(OpKind::MatMul), kind_is(OpKind::Add)});
  REQUIRE(sites.size() == 1);
  CHECK(sites[0] == std::vector<NodeId>{mm, add});
}

TEST_CASE("builder prunes dead operations and never reuses ids") {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 2});
  const NodeId dead = b.add(OpKind::Sigmoid, {Operand::node(x)});
  const NodeId live = b.add(OpKind::Relu, {Operand::node(x)});
  b.set_outputs({live});
  const auto g = b.build();
  CHECK_FALSE(g.contains(dead));
  CHECK(g.size() == 2);
  GraphBuilder edit(g);
  const NodeId fresh = edit.add(OpKind::Tanh, {Operand::node(live)});
  CHECK(fresh > dead);
}

TEST_CASE("executor output shapes follow the static shape rules") {
  std::mt19937_64 rng(3);
  GraphBuilder b;
  const NodeId x = b.add_input({1, 2, 6, 6});
  const NodeId conv = b.add(OpKind::Conv, {Operand::node(x), Operand::constant(random_tensor({3, 2, 3, 3}, rng)),
                                           Operand::constant(random_tensor({3}, rng))},
                            ops::conv_attributes({3, 3}, {2, 1}, {1, 0, 1, 2}));
  auto v = [&](int64_t n) { return Operand::constant(random_tensor({n}, rng, 0.5, 1.5)); };
  const NodeId bn = b.add(OpKind::BatchNormalization, {Operand::node(conv), v(3), v(3), v(3), v(3)},
                          ops::batch_norm_attributes(1e-5));
  const NodeId mp = b.add(OpKind::MaxPool, {Operand::node(bn)}, ops::pool_attributes(OpKind::MaxPool, {2, 2}, {1, 1}, {0, 1, 0, 1}));
  const NodeId ap = b.add(OpKind::AveragePool, {Operand::node(mp)}, ops::pool_attributes(OpKind::AveragePool, {2, 2}, {2, 2}));
  const NodeId pad = b.add(OpKind::Pad, {Operand::node(ap)}, ops::pad_attributes({0, 0, 1, 0, 0, 0, 0, 1}, 0.5));
  const NodeId tr = b.add(OpKind::Transpose, {Operand::node(pad)}, ops::transpose_attributes({0, 2, 3, 1}));
  const NodeId fl = b.add(OpKind::Flatten, {Operand::node(tr)}, ops::flatten_attributes(1));
  const NodeId rs = b.add(OpKind::Reshape, {Operand::node(fl)}, ops::reshape_attributes({1, -1}));
  const NodeId mm = b.add(OpKind::MatMul, {Operand::node(rs), Operand::constant(random_tensor({24, 4}, rng))});
  const NodeId sub = b.add(OpKind::Sub, {Operand::node(mm), Operand::constant(random_tensor({4}, rng))});
  const NodeId mul = b.add(OpKind::Mul, {Operand::node(sub), Operand::constant(random_tensor({1, 4}, rng))});
  const NodeId div = b.add(OpKind::Div, {Operand::node(mul), Operand::constant(random_tensor({4}, rng, 1, 2))});
  const NodeId tanh = b.add(OpKind::Tanh, {Operand::node(div)});
  const NodeId id = b.add(OpKind::Identity, {Operand::node(tanh)});
  const NodeId cat = b.add(OpKind::Concat, {Operand::node(id), Operand::node(sub)}, ops::concat_attributes(1));
  b.set_outputs({cat});
  const auto g = b.build();

  Executor exec(g);
  const Tensor input = random_tensor({1, 2, 6, 6}, rng);
  // Re-run each operation on its evaluated operands and compare with the static rule.
  std::map<NodeId, Tensor> values;
  for (NodeId nid : topological_order(g)) {
    const Operation& op = g.op(nid);
    if (op.kind == OpKind::Input) {
      values[nid] = input;
      continue;
    }
    std::vector<const Tensor*> args;
    for (const auto& in : op.inputs) args.push_back(in.is_node() ? &values.at(in.producer()) : &in.value());
    values[nid] = evaluate_operation(op, args);
    CHECK_MESSAGE(values[nid].shape() == op.shape, to_string(op.kind));
  }
  CHECK(g.op(cat).shape == Shape{1, 8});
  const Tensor out = exec.run(std::vector<Tensor>{input}).at(0);
  CHECK(out == values.at(cat));
}

TEST_CASE("infer is deterministic") {
  std::mt19937_64 rng(11);
  const auto g = testing::dense_network({4, 8, 8, 3}, rng);
  const Tensor x = random_tensor({1, 4}, rng);
  const Tensor a = testing::run1(g, x);
  for (int i = 0; i < 5; ++i) CHECK(testing::run1(g, x) == a);
}

TEST_CASE("small integer graphs match a recursive evaluation oracle") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 300; ++trial) {
    // Random DAG of at most 5 nodes over [1, 3] tensors with integer parameters.
    GraphBuilder b;
    std::vector<NodeId> nodes{b.add_input({1, 3})};
    struct Spec {
      OpKind kind;
      std::vector<size_t> args;
      Tensor w, bias;
    };
    std::map<NodeId, Spec> specs;
    std::uniform_int_distribution<int> pick_kind(0, 4);
    const int count = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < count; ++k) {
      std::uniform_int_distribution<size_t> pick(0, nodes.size() - 1);
      Spec s;
      const int which = pick_kind(rng);
      NodeId id = 0;
      if (which == 0) {
        s = {OpKind::Gemm, {pick(rng)}, testing::random_integers({3, 3}, rng, -3, 3), testing::random_integers({3}, rng, -3, 3)};
        id = b.add(OpKind::Gemm, {Operand::node(nodes[s.args[0]]), Operand::constant(s.w), Operand::constant(s.bias)},
                   ops::gemm_attributes());
      } else if (which == 1) {
        s = {OpKind::Relu, {pick(rng)}, {}, {}};
        id = b.add(OpKind::Relu, {Operand::node(nodes[s.args[0]])});
      } else {
        const OpKind kind = which == 2 ? OpKind::Add : which == 3 ? OpKind::Sub : OpKind::Mul;
        s = {kind, {pick(rng), pick(rng)}, {}, {}};
        id = b.add(kind, {Operand::node(nodes[s.args[0]]), Operand::node(nodes[s.args[1]])});
      }
      specs[id] = s;
      nodes.push_back(id);
    }
    b.set_outputs({nodes.back()});
    const auto g = b.build();
    const Tensor x = testing::random_integers({1, 3}, rng, -4, 4);

    std::function<std::vector<double>(NodeId)> oracle = [&](NodeId id) -> std::vector<double> {
      if (id == nodes[0]) return {x[0], x[1], x[2]};
      const Spec& s = specs.at(id);
      const auto a = oracle(nodes[s.args[0]]);
      std::vector<double> out(3);
      for (int j = 0; j < 3; ++j) {
        switch (s.kind) {
          case OpKind::Gemm:
            out[j] = s.bias[j];
            for (int i = 0; i < 3; ++i) out[j] += a[i] * s.w.at({i, j});
            break;
          case OpKind::Relu: out[j] = std::max(a[j], 0.0); break;
          case OpKind::Add: out[j] = a[j] + oracle(nodes[s.args[1]])[j]; break;
          case OpKind::Sub: out[j] = a[j] - oracle(nodes[s.args[1]])[j]; break;
          default: out[j] = a[j] * oracle(nodes[s.args[1]])[j]; break;
        }
      }
      return out;
    };
    const auto expected = oracle(nodes.back());
    const Tensor got = testing::run1(g, x);
    for (int j = 0; j < 3; ++j) CHECK(got[j] == expected[j]);
  }
}

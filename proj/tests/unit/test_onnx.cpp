#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "onnx.pb.h"
#include "support/testing.hpp"
#include "verif/error.hpp"
#include "verif/onnx.hpp"
#include "verif/simplify.hpp"

using namespace verif;
using verif::testing::random_tensor;

namespace {

// Small helpers for writing ModelProto messages by hand.
struct ModelWriter {
  onnx::ModelProto model;
  onnx::GraphProto* graph = model.mutable_graph();

  explicit ModelWriter(int64_t opset = 13) {
    model.set_ir_version(7);
    auto* op = model.add_opset_import();
    op->set_domain("");
    op->set_version(opset);
    graph->set_name("g");
  }

  void value(google::protobuf::RepeatedPtrField<onnx::ValueInfoProto>* field, const std::string& name, const Shape& shape) {
    auto* vi = field->Add();
    vi->set_name(name);
    auto* tt = vi->mutable_type()->mutable_tensor_type();
    tt->set_elem_type(onnx::TensorProto::FLOAT);
    auto* s = tt->mutable_shape();
    for (int64_t d : shape) s->add_dim()->set_dim_value(d);
  }
  void input(const std::string& name, const Shape& shape) { value(graph->mutable_input(), name, shape); }
  void output(const std::string& name, const Shape& shape) { value(graph->mutable_output(), name, shape); }

  void initializer(const std::string& name, const Tensor& t) {
    auto* init = graph->add_initializer();
    init->set_name(name);
    init->set_data_type(onnx::TensorProto::FLOAT);
    for (int64_t d : t.shape()) init->add_dims(d);
    for (double v : t.data()) init->add_float_data(static_cast<float>(v));
  }

  onnx::NodeProto* node(const std::string& op, std::vector<std::string> inputs, std::vector<std::string> outputs) {
    auto* n = graph->add_node();
    n->set_op_type(op);
    n->set_name(outputs.at(0) + "_node");
    for (auto& i : inputs) n->add_input(i);
    for (auto& o : outputs) n->add_output(o);
    return n;
  }

  static void attr_float(onnx::NodeProto* n, const std::string& name, float v) {
    auto* a = n->add_attribute();
    a->set_name(name);
    a->set_type(onnx::AttributeProto::FLOAT);
    a->set_f(v);
  }
  static void attr_int(onnx::NodeProto* n, const std::string& name, int64_t v) {
    auto* a = n->add_attribute();
    a->set_name(name);
    a->set_type(onnx::AttributeProto::INT);
    a->set_i(v);
  }

  std::string bytes() const { return model.SerializeAsString(); }
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidGraph;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

OperationGraph conv_model(std::mt19937_64& rng) {
  GraphBuilder b;
  const NodeId x = b.add_input({1, 2, 5, 5});
  const NodeId conv = b.add(OpKind::Conv, {Operand::node(x), Operand::constant(random_tensor({3, 2, 3, 3}, rng)),
                                           Operand::constant(random_tensor({3}, rng))},
                            ops::conv_attributes({3, 3}, {1, 1}, {1, 1, 1, 1}));
  auto v = [&](int64_t n) { return Operand::constant(random_tensor({n}, rng, 0.5, 1.5)); };
  // ONNX stores float attributes in 32 bits; pick an epsilon that survives export exactly.
  const NodeId bn = b.add(OpKind::BatchNormalization, {Operand::node(conv), v(3), v(3), v(3), v(3)},
                          ops::batch_norm_attributes(0x1p-10));
  const NodeId relu = b.add(OpKind::Relu, {Operand::node(bn)});
  const NodeId pool = b.add(OpKind::MaxPool, {Operand::node(relu)}, ops::pool_attributes(OpKind::MaxPool, {2, 2}, {2, 2}));
  const NodeId avg = b.add(OpKind::AveragePool, {Operand::node(relu)},
                           ops::pool_attributes(OpKind::AveragePool, {3, 3}, {2, 2}, {1, 1, 0, 0}));
  const NodeId cat = b.add(OpKind::Concat, {Operand::node(pool), Operand::node(avg)}, ops::concat_attributes(1));
  const NodeId pad = b.add(OpKind::Pad, {Operand::node(cat)}, ops::pad_attributes({0, 0, 1, 1, 0, 0, 0, 0}));
  const NodeId tr = b.add(OpKind::Transpose, {Operand::node(pad)}, ops::transpose_attributes({0, 1, 3, 2}));
  const NodeId flat = b.add(OpKind::Flatten, {Operand::node(tr)}, ops::flatten_attributes(1));
  const NodeId mm = b.add(OpKind::MatMul, {Operand::node(flat), Operand::constant(random_tensor({54, 4}, rng))});
  const NodeId add = b.add(OpKind::Add, {Operand::node(mm), Operand::constant(random_tensor({4}, rng))});
  const NodeId sig = b.add(OpKind::Sigmoid, {Operand::node(add)});
  const NodeId mul = b.add(OpKind::Mul, {Operand::node(sig), Operand::constant(random_tensor({4}, rng))});
  const NodeId sub = b.add(OpKind::Sub, {Operand::node(mul), Operand::node(add)});
  const NodeId div = b.add(OpKind::Div, {Operand::node(sub), Operand::constant(random_tensor({1}, rng, 1, 2))});
  const NodeId tanh = b.add(OpKind::Tanh, {Operand::node(div)});
  const NodeId rs = b.add(OpKind::Reshape, {Operand::node(tanh)}, ops::reshape_attributes({2, 2}));
  const NodeId id = b.add(OpKind::Identity, {Operand::node(rs)});
  const NodeId gemm = b.add(OpKind::Gemm, {Operand::node(id), Operand::constant(random_tensor({3, 2}, rng)),
                                           Operand::constant(random_tensor({3}, rng))},
                            ops::gemm_attributes(false, true));
  b.set_outputs({gemm});
  return b.build();
}

}  // namespace

TEST_CASE("minimal relu model") {
  ModelWriter w;
  w.input("x", {1, 2});
  w.node("Relu", {"x"}, {"y"});
  w.output("y", {1, 2});
  const OnnxModel m = parse_onnx_bytes(w.bytes());
  CHECK(m.graph.size() == 2);
  CHECK(m.meta.inputs.at(0).name == "x");
  CHECK(m.meta.outputs.at(0).name == "y");
  CHECK(m.meta.opset == 13);
  CHECK(testing::run1(m.graph, Tensor::matrix(1, 2, {-1, 2})) == Tensor::matrix(1, 2, {0, 2}));
}

TEST_CASE("unsupported operations are named") {
  ModelWriter w;
  w.input("x", {1, 2});
  w.node("Relu", {"x"}, {"h"});
  w.node("Softmax", {"h"}, {"y"});
  w.output("y", {1, 2});
  CHECK(code_of([&] { parse_onnx_bytes(w.bytes()); }) == ErrorCode::UnsupportedOperation);
  CHECK(message_of([&] { parse_onnx_bytes(w.bytes()); }).find("Softmax") != std::string::npos);
}

TEST_CASE("opset range is enforced") {
  for (int64_t opset : {8, 14}) {
    ModelWriter w(opset);
    w.input("x", {1, 2});
    w.node("Relu", {"x"}, {"y"});
    w.output("y", {1, 2});
    CHECK(code_of([&] { parse_onnx_bytes(w.bytes()); }) == ErrorCode::UnsupportedOpset);
  }
}

TEST_CASE("symbolic input dimensions are rejected") {
  ModelWriter w;
  auto* vi = w.graph->add_input();
  vi->set_name("x");
  auto* tt = vi->mutable_type()->mutable_tensor_type();
  tt->set_elem_type(onnx::TensorProto::FLOAT);
  tt->mutable_shape()->add_dim()->set_dim_param("batch");
  tt->mutable_shape()->add_dim()->set_dim_value(2);
  w.node("Relu", {"x"}, {"y"});
  w.output("y", {1, 2});
  CHECK(code_of([&] { parse_onnx_bytes(w.bytes()); }) == ErrorCode::ShapeUnknown);
}

TEST_CASE("undecodable bytes are a malformed model") {
  CHECK(code_of([] { parse_onnx_bytes("definitely not a protobuf \xff\xff\xff"); }) == ErrorCode::MalformedModel);
  CHECK(code_of([] { parse_onnx("/nonexistent/model.onnx"); }) == ErrorCode::IoError);
}

TEST_CASE("gemm alpha and beta are folded at parse time") {
  ModelWriter w;
  w.input("x", {1, 2});
  w.initializer("W", Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  w.initializer("B", Tensor::vector({1, -1, 0.5}));
  auto* n = w.node("Gemm", {"x", "W", "B"}, {"y"});
  ModelWriter::attr_float(n, "alpha", 2.0f);
  ModelWriter::attr_float(n, "beta", 3.0f);
  w.output("y", {1, 3});
  const OnnxModel m = parse_onnx_bytes(w.bytes());
  const Tensor y = testing::run1(m.graph, Tensor::matrix(1, 2, {1, 1}));
  // 2 * (x W) + 3 * B with x = [1, 1]
  CHECK(y == Tensor::matrix(1, 3, {2 * 5 + 3, 2 * 7 - 3, 2 * 9 + 1.5}));
  for (const auto& op : m.graph.operations()) {
    if (op.kind == OpKind::Gemm) CHECK(op.attrs.values().count("alpha") == 0);
  }
}

TEST_CASE("each initializer becomes exactly one constant input") {
  ModelWriter w;
  w.input("x", {1, 2});
  w.initializer("W1", Tensor::matrix(2, 2, {1, 2, 3, 4}));
  w.initializer("B1", Tensor::vector({1, 1}));
  w.initializer("W2", Tensor::matrix(2, 2, {0, 1, 1, 0}));
  w.initializer("B2", Tensor::vector({0, 2}));
  w.node("Gemm", {"x", "W1", "B1"}, {"h"});
  w.node("Relu", {"h"}, {"r"});
  w.node("Gemm", {"r", "W2", "B2"}, {"y"});
  w.output("y", {1, 2});
  const OnnxModel m = parse_onnx_bytes(w.bytes());
  std::set<const Tensor*> constants;
  size_t slots = 0;
  for (const auto& op : m.graph.operations()) {
    for (const auto& in : op.inputs) {
      if (in.is_constant()) {
        constants.insert(in.shared_value().get());
        ++slots;
      }
    }
  }
  CHECK(constants.size() == 4);
  CHECK(slots == 4);
}

TEST_CASE("parse, serialize, parse round trip is exact") {
  std::mt19937_64 rng(5);
  for (const auto& g : {conv_model(rng), testing::dense_network({3, 5, 4, 2}, rng)}) {
    const ModelMetadata meta = default_metadata(g);
    const std::string bytes = serialize_onnx_bytes(g, meta);
    CHECK(bytes == serialize_onnx_bytes(g, meta));  // deterministic
    const OnnxModel first = parse_onnx_bytes(bytes);
    CHECK(structurally_equal(g, first.graph));
    const OnnxModel second = parse_onnx_bytes(serialize_onnx_bytes(first.graph, first.meta));
    CHECK(structurally_equal(first.graph, second.graph));
    CHECK(serialize_onnx_bytes(second.graph, second.meta) == serialize_onnx_bytes(first.graph, first.meta));
    for (int i = 0; i < 10; ++i) {
      const Tensor x = random_tensor(g.op(g.inputs()[0]).shape, rng);
      CHECK(testing::run1(first.graph, x) == testing::run1(second.graph, x));
      CHECK(testing::run1(g, x) == testing::run1(first.graph, x));
    }
  }
}

TEST_CASE("serialized models decode to the same node multiset") {
  std::mt19937_64 rng(9);
  const auto g = conv_model(rng);
  onnx::ModelProto proto;
  REQUIRE(proto.ParseFromString(serialize_onnx_bytes(g, default_metadata(g))));
  std::multiset<std::string> emitted;
  for (const auto& n : proto.graph().node()) emitted.insert(n.op_type());
  std::multiset<std::string> expected;
  for (const auto& op : g.operations()) {
    if (op.kind != OpKind::Input) expected.insert(std::string(to_string(op.kind)));
  }
  CHECK(emitted == expected);
}

TEST_CASE("graphs without outputs cannot be serialized") {
  GraphBuilder b;
  b.add_input({1, 2});
  const auto g = b.build();
  CHECK(code_of([&] { serialize_onnx_bytes(g, default_metadata(g)); }) == ErrorCode::InvalidGraph);
}

TEST_CASE("float32 models keep their element type") {
  ModelWriter w;
  w.input("x", {1, 2});
  w.initializer("W", Tensor::matrix(2, 2, {0.1, 0.2, 0.3, 0.4}));
  w.initializer("B", Tensor::vector({0.5, 0.6}));
  w.node("Gemm", {"x", "W", "B"}, {"y"});
  w.output("y", {1, 2});
  const OnnxModel m = parse_onnx_bytes(w.bytes());
  onnx::ModelProto proto;
  REQUIRE(proto.ParseFromString(serialize_onnx_bytes(m.graph, m.meta)));
  CHECK(proto.graph().input(0).type().tensor_type().elem_type() == onnx::TensorProto::FLOAT);
  for (const auto& init : proto.graph().initializer()) CHECK(init.data_type() == onnx::TensorProto::FLOAT);
  const OnnxModel again = parse_onnx_bytes(proto.SerializeAsString());
  CHECK(structurally_equal(m.graph, again.graph));
}

TEST_CASE("simplified graphs serialize and reload") {
  std::mt19937_64 rng(21);
  const auto g = conv_model(rng);
  const auto s = simplify(g).graph;
  const OnnxModel reloaded = parse_onnx_bytes(serialize_onnx_bytes(s, default_metadata(s)));
  CHECK(structurally_equal(s, reloaded.graph));
  CHECK(testing::max_deviation(g, reloaded.graph, 20) <= 1e-9);
}

TEST_CASE("opset 9 style pads and reshape inputs are normalised") {
  ModelWriter w(9);
  w.input("x", {1, 1, 2, 2});
  auto* pad = w.node("Pad", {"x"}, {"p"});
  auto* a = pad->add_attribute();
  a->set_name("pads");
  a->set_type(onnx::AttributeProto::INTS);
  for (int64_t v : {0, 0, 1, 0, 0, 0, 0, 1}) a->add_ints(v);
  auto* shape = w.graph->add_initializer();
  shape->set_name("s");
  shape->set_data_type(onnx::TensorProto::INT64);
  shape->add_dims(2);
  shape->add_int64_data(1);
  shape->add_int64_data(-1);
  w.node("Reshape", {"p", "s"}, {"y"});
  w.output("y", {1, 9});
  const OnnxModel m = parse_onnx_bytes(w.bytes());
  const Tensor y = testing::run1(m.graph, Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(y == Tensor({1, 9}, {0, 0, 0, 1, 2, 0, 3, 4, 0}));
}

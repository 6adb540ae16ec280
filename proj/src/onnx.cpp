#include "verif/onnx.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <google/protobuf/io/coded_stream.h>
#include <google/protobuf/io/zero_copy_stream_impl_lite.h>

#include "onnx.pb.h"
#include "verif/error.hpp"
#include "verif/ops.hpp"

namespace verif {
namespace {

static_assert(std::endian::native == std::endian::little, "raw tensor data is little-endian");

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::MalformedModel, why); }

template <typename T>
std::vector<T> read_raw(const std::string& raw) {
  if (raw.size() % sizeof(T) != 0) malformed("raw_data length is not a multiple of the element size");
  std::vector<T> out(raw.size() / sizeof(T));
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

Shape dims_of(const onnx::TensorProto& t) { return Shape(t.dims().begin(), t.dims().end()); }

Tensor float_tensor(const onnx::TensorProto& t) {
  Shape shape = dims_of(t);
  std::vector<double> values;
  DType dtype = DType::Float64;
  switch (t.data_type()) {
    case onnx::TensorProto::FLOAT: {
      dtype = DType::Float32;
      if (t.has_raw_data()) {
        for (float v : read_raw<float>(t.raw_data())) values.push_back(v);
      } else {
        values.assign(t.float_data().begin(), t.float_data().end());
      }
      break;
    }
    case onnx::TensorProto::DOUBLE:
      if (t.has_raw_data()) {
        values = read_raw<double>(t.raw_data());
      } else {
        values.assign(t.double_data().begin(), t.double_data().end());
      }
      break;
    default:
      malformed("tensor '" + t.name() + "' has unsupported element type " + std::to_string(t.data_type()));
  }
  if (static_cast<int64_t>(values.size()) != element_count(shape)) {
    malformed("tensor '" + t.name() + "' holds " + std::to_string(values.size()) + " values for shape " +
              shape_to_string(shape));
  }
  return Tensor(std::move(shape), std::move(values), dtype);
}

std::vector<int64_t> int_tensor(const onnx::TensorProto& t) {
  if (t.data_type() != onnx::TensorProto::INT64) malformed("tensor '" + t.name() + "' must be int64");
  if (t.has_raw_data()) return read_raw<int64_t>(t.raw_data());
  return {t.int64_data().begin(), t.int64_data().end()};
}

class NodeAttributes {
 public:
  explicit NodeAttributes(const onnx::NodeProto& node) {
    for (const auto& a : node.attribute()) by_name_[a.name()] = &a;
  }
  const onnx::AttributeProto* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }
  int64_t get_int(const std::string& name, int64_t fallback) const {
    const auto* a = find(name);
    return a ? a->i() : fallback;
  }
  double get_float(const std::string& name, double fallback) const {
    const auto* a = find(name);
    return a ? static_cast<double>(a->f()) : fallback;
  }
  std::vector<int64_t> get_ints(const std::string& name, std::vector<int64_t> fallback) const {
    const auto* a = find(name);
    return a ? std::vector<int64_t>(a->ints().begin(), a->ints().end()) : fallback;
  }
  std::string get_string(const std::string& name, std::string fallback) const {
    const auto* a = find(name);
    return a ? a->s() : fallback;
  }

 private:
  std::map<std::string, const onnx::AttributeProto*> by_name_;
};

DType dtype_from_elem(int32_t elem, const std::string& name) {
  if (elem == onnx::TensorProto::FLOAT) return DType::Float32;
  if (elem == onnx::TensorProto::DOUBLE) return DType::Float64;
  malformed("value '" + name + "' has unsupported element type " + std::to_string(elem));
}

class Importer {
 public:
  explicit Importer(const onnx::ModelProto& model) : model_(model) {}

  OnnxModel run() {
    meta_.producer = model_.producer_name();
    meta_.opset = opset();
    const auto& g = model_.graph();
    for (const auto& init : g.initializer()) initializers_[init.name()] = &init;

    for (const auto& vi : g.input()) {
      if (initializers_.count(vi.name())) continue;
      add_graph_input(vi);
    }
    for (const auto& node : g.node()) add_node(node);

    std::vector<NodeId> outputs;
    for (const auto& vi : g.output()) {
      auto it = values_.find(vi.name());
      if (it == values_.end()) malformed("graph output '" + vi.name() + "' is not produced by any node");
      outputs.push_back(it->second);
    }
    builder_.set_outputs(outputs);
    OnnxModel result{builder_.build(), meta_};
    for (size_t i = 0; i < outputs.size(); ++i) {
      const auto& vi = g.output(static_cast<int>(i));
      const int32_t elem = vi.type().tensor_type().elem_type();
      result.meta.outputs.push_back({vi.name(), result.graph.op(outputs[i]).shape,
                                     elem ? dtype_from_elem(elem, vi.name()) : DType::Float64});
    }
    check_unique(result.meta);
    return result;
  }

 private:
  int64_t opset() const {
    for (const auto& id : model_.opset_import()) {
      if (id.domain().empty() || id.domain() == "ai.onnx") {
        if (id.version() < kMinOpset || id.version() > kMaxOpset) {
          throw Error(ErrorCode::UnsupportedOpset, "opset " + std::to_string(id.version()) +
                                                       " is outside the supported range " +
                                                       std::to_string(kMinOpset) + "-" + std::to_string(kMaxOpset));
        }
        return id.version();
      }
    }
    malformed("model does not import the default ONNX operator set");
  }

  void add_graph_input(const onnx::ValueInfoProto& vi) {
    if (!vi.type().has_tensor_type()) malformed("graph input '" + vi.name() + "' is not a tensor");
    const auto& tt = vi.type().tensor_type();
    if (!tt.has_shape()) throw Error(ErrorCode::ShapeUnknown, "graph input '" + vi.name() + "' has no shape");
    Shape shape;
    for (const auto& dim : tt.shape().dim()) {
      if (dim.value_case() != onnx::TensorShapeProto::Dimension::kDimValue) {
        throw Error(ErrorCode::ShapeUnknown, "graph input '" + vi.name() + "' has a symbolic dimension");
      }
      shape.push_back(dim.dim_value());
    }
    const DType dtype = dtype_from_elem(tt.elem_type(), vi.name());
    const NodeId id = builder_.add_input(shape, dtype);
    values_[vi.name()] = id;
    shapes_[id] = shape;
    meta_.inputs.push_back({vi.name(), shape, dtype});
  }

  [[noreturn]] void unsupported(const onnx::NodeProto& node, const std::string& why) const {
    const std::string name = node.name().empty() ? (node.output_size() ? node.output(0) : "?") : node.name();
    throw Error(ErrorCode::UnsupportedOperation, name + " (" + node.op_type() + ")" + (why.empty() ? "" : ": " + why));
  }

  bool has_input(const onnx::NodeProto& node, int i) const { return node.input_size() > i && !node.input(i).empty(); }

  bool is_constant(const std::string& name) const {
    return initializers_.count(name) || constants_.count(name);
  }

  ConstantPtr constant(const onnx::NodeProto& node, const std::string& name) {
    if (auto it = constants_.find(name); it != constants_.end()) return it->second;
    auto it = initializers_.find(name);
    if (it == initializers_.end()) unsupported(node, "input '" + name + "' must be a constant");
    auto value = std::make_shared<const Tensor>(float_tensor(*it->second));
    constants_[name] = value;
    return value;
  }

  std::vector<int64_t> int_constant(const onnx::NodeProto& node, const std::string& name) {
    if (auto it = int_constants_.find(name); it != int_constants_.end()) return it->second;
    auto it = initializers_.find(name);
    if (it == initializers_.end()) unsupported(node, "input '" + name + "' must be a constant int64 tensor");
    return int_tensor(*it->second);
  }

  Operand operand(const onnx::NodeProto& node, const std::string& name) {
    if (auto it = values_.find(name); it != values_.end()) return Operand::node(it->second);
    if (is_constant(name)) return Operand::constant(constant(node, name));
    malformed("node " + node.name() + " reads undefined value '" + name + "'");
  }

  Shape operand_shape(const Operand& o) const { return o.is_node() ? shapes_.at(o.producer()) : o.value().shape(); }

  void add_node(const onnx::NodeProto& node) {
    if (!node.domain().empty() && node.domain() != "ai.onnx") unsupported(node, "custom domain");
    const std::string& type = node.op_type();
    if (type == "Constant") {
      NodeAttributes attrs(node);
      const auto* value = attrs.find("value");
      if (!value || node.output_size() != 1) unsupported(node, "only tensor-valued Constant nodes are supported");
      if (value->t().data_type() == onnx::TensorProto::INT64) {
        int_constants_[node.output(0)] = int_tensor(value->t());
      } else {
        constants_[node.output(0)] = std::make_shared<const Tensor>(float_tensor(value->t()));
      }
      return;
    }
    const auto kind = kind_from_string(type);
    if (!kind || *kind == OpKind::Input) unsupported(node, "");
    for (int i = 1; i < node.output_size(); ++i) {
      if (!node.output(i).empty()) unsupported(node, "only the first output may be used");
    }

    NodeAttributes na(node);
    std::vector<Operand> inputs;
    Attributes attrs;
    auto data = [&](int i) { return operand(node, node.input(i)); };

    switch (*kind) {
      case OpKind::Gemm: {
        const double alpha = na.get_float("alpha", 1.0);
        const double beta = na.get_float("beta", 1.0);
        attrs = ops::gemm_attributes(na.get_int("transA", 0) != 0, na.get_int("transB", 0) != 0);
        inputs.push_back(data(0));
        if (!is_constant(node.input(1))) unsupported(node, "Gemm weights must be constant");
        Tensor weights = *constant(node, node.input(1));
        if (alpha != 1.0) {
          for (auto& v : weights.data()) v *= alpha;
        }
        const Shape b = weights.shape();
        const int64_t n = attrs.get_int("transB") ? b.at(0) : b.at(1);
        inputs.push_back(alpha != 1.0 ? Operand::constant(std::move(weights)) : Operand::constant(constant(node, node.input(1))));
        if (has_input(node, 2)) {
          if (!is_constant(node.input(2))) unsupported(node, "Gemm bias must be constant");
          if (beta != 1.0) {
            Tensor bias = *constant(node, node.input(2));
            for (auto& v : bias.data()) v *= beta;
            inputs.push_back(Operand::constant(std::move(bias)));
          } else {
            inputs.push_back(Operand::constant(constant(node, node.input(2))));
          }
        } else {
          inputs.push_back(Operand::constant(Tensor::zeros({n})));
        }
        break;
      }
      case OpKind::Conv: {
        if (na.get_string("auto_pad", "NOTSET") != "NOTSET") unsupported(node, "auto_pad");
        inputs.push_back(data(0));
        if (!is_constant(node.input(1))) unsupported(node, "Conv weights must be constant");
        auto weights = constant(node, node.input(1));
        if (weights->rank() != 4) unsupported(node, "only 2-D convolution is supported");
        const Shape& w = weights->shape();
        inputs.push_back(Operand::constant(weights));
        if (has_input(node, 2)) {
          inputs.push_back(Operand::constant(constant(node, node.input(2))));
        } else {
          inputs.push_back(Operand::constant(Tensor::zeros({w[0]})));
        }
        attrs = ops::conv_attributes(na.get_ints("kernel_shape", {w[2], w[3]}), na.get_ints("strides", {1, 1}),
                                     na.get_ints("pads", {0, 0, 0, 0}));
        attrs.set("dilations", na.get_ints("dilations", {1, 1}));
        attrs.set("group", na.get_int("group", 1));
        break;
      }
      case OpKind::BatchNormalization:
        inputs.push_back(data(0));
        for (int i = 1; i < 5; ++i) {
          if (!is_constant(node.input(i))) unsupported(node, "normalization statistics must be constant");
          inputs.push_back(Operand::constant(constant(node, node.input(i))));
        }
        attrs = ops::batch_norm_attributes(na.get_float("epsilon", 1e-5));
        break;
      case OpKind::MaxPool:
      case OpKind::AveragePool: {
        if (na.get_string("auto_pad", "NOTSET") != "NOTSET") unsupported(node, "auto_pad");
        if (na.get_int("ceil_mode", 0) != 0) unsupported(node, "ceil_mode");
        const auto dilations = na.get_ints("dilations", {1, 1});
        if (std::any_of(dilations.begin(), dilations.end(), [](int64_t d) { return d != 1; })) unsupported(node, "dilations");
        const auto kernel = na.get_ints("kernel_shape", {});
        if (kernel.size() != 2) unsupported(node, "only 2-D pooling is supported");
        inputs.push_back(data(0));
        attrs = ops::pool_attributes(*kind, kernel, na.get_ints("strides", {1, 1}), na.get_ints("pads", {0, 0, 0, 0}));
        if (*kind == OpKind::AveragePool) attrs.set("count_include_pad", na.get_int("count_include_pad", 0));
        break;
      }
      case OpKind::Flatten:
        inputs.push_back(data(0));
        attrs = ops::flatten_attributes(na.get_int("axis", 1));
        break;
      case OpKind::Reshape:
        inputs.push_back(data(0));
        if (na.get_int("allowzero", 0) != 0) unsupported(node, "allowzero");
        attrs = ops::reshape_attributes(int_constant(node, node.input(1)));
        break;
      case OpKind::Transpose: {
        inputs.push_back(data(0));
        std::vector<int64_t> perm = na.get_ints("perm", {});
        if (perm.empty()) {
          const auto rank = static_cast<int64_t>(operand_shape(inputs[0]).size());
          for (int64_t i = rank - 1; i >= 0; --i) perm.push_back(i);
        }
        attrs = ops::transpose_attributes(perm);
        break;
      }
      case OpKind::Concat:
        for (int i = 0; i < node.input_size(); ++i) inputs.push_back(data(i));
        if (!na.find("axis")) unsupported(node, "Concat requires an axis");
        attrs = ops::concat_attributes(na.get_int("axis", 0));
        break;
      case OpKind::Pad: {
        inputs.push_back(data(0));
        if (na.get_string("mode", "constant") != "constant") unsupported(node, "only constant padding is supported");
        std::vector<int64_t> pads;
        double value = 0.0;
        if (meta_.opset < 11) {
          pads = na.get_ints("pads", {});
          value = na.get_float("value", 0.0);
        } else {
          pads = int_constant(node, node.input(1));
          if (has_input(node, 2)) {
            const auto v = constant(node, node.input(2));
            if (v->size() != 1) unsupported(node, "constant_value must be a scalar");
            value = (*v)[0];
          }
        }
        attrs = ops::pad_attributes(pads, value);
        break;
      }
      default:
        for (int i = 0; i < node.input_size(); ++i) inputs.push_back(data(i));
        break;
    }

    const NodeId id = builder_.add(*kind, inputs, attrs);
    Operation& op = builder_.op(id);
    ops::validate(op);
    std::vector<Shape> in;
    for (const auto& input : op.inputs) in.push_back(operand_shape(input));
    shapes_[id] = ops::output_shape(op, in);
    if (node.output_size() < 1) malformed("node " + node.name() + " has no outputs");
    values_[node.output(0)] = id;
  }

  static void check_unique(const ModelMetadata& meta) {
    std::set<std::string> seen;
    for (const auto* list : {&meta.inputs, &meta.outputs}) {
      for (const auto& info : *list) {
        // The same value may legitimately be listed as both input and output.
        if (list == &meta.outputs && std::any_of(meta.inputs.begin(), meta.inputs.end(),
                                                 [&](const TensorInfo& i) { return i.name == info.name; })) {
          continue;
        }
        if (!seen.insert(info.name).second) malformed("duplicate graph input/output name '" + info.name + "'");
      }
    }
  }

  const onnx::ModelProto& model_;
  ModelMetadata meta_;
  GraphBuilder builder_;
  std::map<std::string, const onnx::TensorProto*> initializers_;
  std::map<std::string, ConstantPtr> constants_;
  std::map<std::string, std::vector<int64_t>> int_constants_;
  std::map<std::string, NodeId> values_;
  std::map<NodeId, Shape> shapes_;
};

// ---------------------------------------------------------------------------

void set_shape(onnx::ValueInfoProto* vi, const std::string& name, const Shape& shape, int32_t elem) {
  vi->set_name(name);
  auto* tt = vi->mutable_type()->mutable_tensor_type();
  tt->set_elem_type(elem);
  auto* s = tt->mutable_shape();
  for (int64_t d : shape) s->add_dim()->set_dim_value(d);
}

void add_ints(onnx::NodeProto* node, const std::string& name, const std::vector<int64_t>& values) {
  auto* a = node->add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::INTS);
  for (int64_t v : values) a->add_ints(v);
}

void add_int(onnx::NodeProto* node, const std::string& name, int64_t value) {
  auto* a = node->add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::INT);
  a->set_i(value);
}

void add_float(onnx::NodeProto* node, const std::string& name, double value) {
  auto* a = node->add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::FLOAT);
  a->set_f(static_cast<float>(value));
}

void add_string(onnx::NodeProto* node, const std::string& name, const std::string& value) {
  auto* a = node->add_attribute();
  a->set_name(name);
  a->set_type(onnx::AttributeProto::STRING);
  a->set_s(value);
}

class Exporter {
 public:
  Exporter(const OperationGraph& graph, const ModelMetadata& meta) : graph_(graph), meta_(meta) {}

  std::string run() {
    if (graph_.outputs().empty()) throw Error(ErrorCode::InvalidGraph, "graph has no outputs");
    if (graph_.inputs().empty()) throw Error(ErrorCode::InvalidGraph, "graph has no inputs");
    if (meta_.inputs.size() != graph_.inputs().size() || meta_.outputs.size() != graph_.outputs().size()) {
      throw Error(ErrorCode::InvalidGraph, "metadata does not match graph inputs/outputs");
    }
    elem_ = graph_.op(graph_.inputs().front()).dtype == DType::Float32 ? onnx::TensorProto::FLOAT
                                                                        : onnx::TensorProto::DOUBLE;
    onnx::ModelProto model;
    model.set_ir_version(7);
    model.set_producer_name(meta_.producer.empty() ? "verif" : meta_.producer);
    auto* opset = model.add_opset_import();
    opset->set_domain("");
    opset->set_version(meta_.opset);
    auto* g = model.mutable_graph();
    g->set_name("graph");

    for (size_t i = 0; i < graph_.inputs().size(); ++i) {
      names_[graph_.inputs()[i]] = meta_.inputs[i].name;
      set_shape(g->add_input(), meta_.inputs[i].name, graph_.op(graph_.inputs()[i]).shape, elem_);
    }
    std::set<NodeId> named_outputs;
    for (size_t i = 0; i < graph_.outputs().size(); ++i) {
      const NodeId id = graph_.outputs()[i];
      if (graph_.op(id).kind == OpKind::Input) continue;
      if (!named_outputs.insert(id).second) throw Error(ErrorCode::InvalidGraph, "operation listed twice as output");
      names_[id] = meta_.outputs[i].name;
    }
    for (NodeId id : topological_order(graph_)) {
      const Operation& op = graph_.op(id);
      if (op.kind == OpKind::Input) continue;
      if (!names_.count(id)) names_[id] = "v" + std::to_string(id);
      emit(g, op);
    }
    for (size_t i = 0; i < graph_.outputs().size(); ++i) {
      const NodeId id = graph_.outputs()[i];
      set_shape(g->add_output(), names_.at(id), graph_.op(id).shape, elem_);
    }
    std::string bytes;
    {
      google::protobuf::io::StringOutputStream stream(&bytes);
      google::protobuf::io::CodedOutputStream coded(&stream);
      coded.SetSerializationDeterministic(true);
      if (!model.SerializeToCodedStream(&coded)) throw Error(ErrorCode::IoError, "failed to encode ONNX model");
    }
    return bytes;
  }

 private:
  std::string constant_name(onnx::GraphProto* g, const ConstantPtr& value) {
    if (auto it = constant_names_.find(value.get()); it != constant_names_.end()) return it->second;
    const std::string name = "c" + std::to_string(constant_names_.size());
    constant_names_[value.get()] = name;
    auto* t = g->add_initializer();
    t->set_name(name);
    for (int64_t d : value->shape()) t->add_dims(d);
    t->set_data_type(elem_);
    std::string raw;
    if (elem_ == onnx::TensorProto::FLOAT) {
      for (double v : value->data()) {
        const auto f = static_cast<float>(v);
        raw.append(reinterpret_cast<const char*>(&f), sizeof f);
      }
    } else {
      raw.append(reinterpret_cast<const char*>(value->data().data()), value->data().size_bytes());
    }
    t->set_raw_data(raw);
    return name;
  }

  std::string int_initializer(onnx::GraphProto* g, const std::vector<int64_t>& values) {
    const std::string name = "i" + std::to_string(int_count_++);
    auto* t = g->add_initializer();
    t->set_name(name);
    t->add_dims(static_cast<int64_t>(values.size()));
    t->set_data_type(onnx::TensorProto::INT64);
    t->set_raw_data(std::string(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(int64_t)));
    return name;
  }

  std::string scalar_initializer(onnx::GraphProto* g, double value) {
    return constant_name(g, scalars_.emplace_back(std::make_shared<const Tensor>(Shape{}, std::vector<double>{value})));
  }

  void emit(onnx::GraphProto* g, const Operation& op) {
    auto* node = g->add_node();
    node->set_name("n" + std::to_string(op.id));
    node->set_op_type(std::string(to_string(op.kind)));
    for (const auto& input : op.inputs) {
      node->add_input(input.is_node() ? names_.at(input.producer()) : constant_name(g, input.shared_value()));
    }
    node->add_output(names_.at(op.id));
    const auto& a = op.attrs;
    switch (op.kind) {
      case OpKind::Gemm:
        add_int(node, "transA", a.get_int("transA"));
        add_int(node, "transB", a.get_int("transB"));
        break;
      case OpKind::Conv:
        add_ints(node, "dilations", a.get_ints("dilations"));
        add_int(node, "group", a.get_int("group"));
        add_ints(node, "kernel_shape", a.get_ints("kernel_shape"));
        add_ints(node, "pads", a.get_ints("pads"));
        add_ints(node, "strides", a.get_ints("strides"));
        break;
      case OpKind::BatchNormalization:
        add_float(node, "epsilon", a.get_float("epsilon"));
        break;
      case OpKind::AveragePool:
        add_int(node, "count_include_pad", a.get_int("count_include_pad"));
        [[fallthrough]];
      case OpKind::MaxPool:
        add_ints(node, "kernel_shape", a.get_ints("kernel_shape"));
        add_ints(node, "pads", a.get_ints("pads"));
        add_ints(node, "strides", a.get_ints("strides"));
        break;
      case OpKind::Flatten:
      case OpKind::Concat:
        add_int(node, "axis", a.get_int("axis"));
        break;
      case OpKind::Reshape:
        node->add_input(int_initializer(g, a.get_ints("shape")));
        break;
      case OpKind::Transpose:
        add_ints(node, "perm", a.get_ints("perm"));
        break;
      case OpKind::Pad:
        add_string(node, "mode", "constant");
        if (meta_.opset < 11) {
          add_ints(node, "pads", a.get_ints("pads"));
          add_float(node, "value", a.get_float("value"));
        } else {
          node->add_input(int_initializer(g, a.get_ints("pads")));
          node->add_input(scalar_initializer(g, a.get_float("value")));
        }
        break;
      default:
        break;
    }
  }

  const OperationGraph& graph_;
  const ModelMetadata& meta_;
  int32_t elem_ = onnx::TensorProto::DOUBLE;
  std::map<NodeId, std::string> names_;
  std::map<const Tensor*, std::string> constant_names_;
  std::vector<ConstantPtr> scalars_;
  int int_count_ = 0;
};

}  // namespace

OnnxModel parse_onnx_bytes(std::string_view bytes) {
  onnx::ModelProto model;
  if (!model.ParseFromArray(bytes.data(), static_cast<int>(bytes.size()))) {
    malformed("input is not a decodable ONNX protocol-buffers model");
  }
  if (!model.has_graph()) malformed("model has no graph");
  return Importer(model).run();
}

OnnxModel parse_onnx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_onnx_bytes(buffer.str());
}

std::string serialize_onnx_bytes(const OperationGraph& graph, const ModelMetadata& meta) {
  return Exporter(graph, meta).run();
}

void serialize_onnx(const OperationGraph& graph, const ModelMetadata& meta, const std::filesystem::path& path) {
  const std::string bytes = serialize_onnx_bytes(graph, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

ModelMetadata default_metadata(const OperationGraph& graph, int64_t opset) {
  ModelMetadata meta;
  meta.opset = opset;
  for (size_t i = 0; i < graph.inputs().size(); ++i) {
    const Operation& op = graph.op(graph.inputs()[i]);
    meta.inputs.push_back({"input_" + std::to_string(i), op.shape, op.dtype});
  }
  for (size_t i = 0; i < graph.outputs().size(); ++i) {
    const NodeId id = graph.outputs()[i];
    const Operation& op = graph.op(id);
    std::string name = op.kind == OpKind::Input ? meta.inputs[static_cast<size_t>(
                                                      std::find(graph.inputs().begin(), graph.inputs().end(), id) -
                                                      graph.inputs().begin())]
                                                      .name
                                                : "output_" + std::to_string(i);
    meta.outputs.push_back({std::move(name), op.shape, DType::Float64});
  }
  return meta;
}

ModelMetadata refresh_metadata(const OperationGraph& graph, const ModelMetadata& meta) {
  ModelMetadata fresh = default_metadata(graph, meta.opset);
  fresh.producer = meta.producer;
  if (meta.inputs.size() == fresh.inputs.size()) {
    for (size_t i = 0; i < fresh.inputs.size(); ++i) fresh.inputs[i].name = meta.inputs[i].name;
  }
  if (meta.outputs.size() == fresh.outputs.size()) {
    for (size_t i = 0; i < fresh.outputs.size(); ++i) {
      if (graph.op(graph.outputs()[i]).kind != OpKind::Input) fresh.outputs[i].name = meta.outputs[i].name;
    }
  }
  return fresh;
}

}  // namespace verif

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "verif/graph.hpp"

namespace verif {

struct TensorInfo {
  std::string name;
  Shape shape;
  DType dtype = DType::Float64;
};

struct ModelMetadata {
  std::string producer = "verif";
  int64_t opset = 13;
  std::vector<TensorInfo> inputs;
  std::vector<TensorInfo> outputs;
};

struct OnnxModel {
  OperationGraph graph;
  ModelMetadata meta;
};

inline constexpr int64_t kMinOpset = 9;
inline constexpr int64_t kMaxOpset = 13;

OnnxModel parse_onnx(const std::filesystem::path& path);
OnnxModel parse_onnx_bytes(std::string_view bytes);

/// Writes `graph` as an ONNX model. Every tensor is stored in the element type
/// of the first graph input. Output is byte-deterministic.
void serialize_onnx(const OperationGraph& graph, const ModelMetadata& meta, const std::filesystem::path& path);
std::string serialize_onnx_bytes(const OperationGraph& graph, const ModelMetadata& meta);

/// Metadata with generated names ("input_0", "output_0", ...) and shapes from the graph.
ModelMetadata default_metadata(const OperationGraph& graph, int64_t opset = kMaxOpset);

/// Keeps names from `meta` where the graph still matches them, refreshing shapes.
ModelMetadata refresh_metadata(const OperationGraph& graph, const ModelMetadata& meta);

}  // namespace verif

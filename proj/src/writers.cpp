#include <cstdio>
#include <fstream>
#include <sstream>

#include "verif/backends.hpp"
#include "verif/error.hpp"
#include "verif/onnx.hpp"

namespace verif {
namespace {

std::string num(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string num17(double v) { return num(v, 17); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

// Folds runs of layers without activation into the following layer, since
// NNET applies Relu to every hidden layer.
std::vector<Layer> fold_linear_layers(std::vector<Layer> layers) {
  std::vector<Layer> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    Layer cur = std::move(layers[i]);
    while (!cur.relu && i + 1 < layers.size()) {
      const Layer& next = layers[++i];
      const int64_t in = cur.inputs(), mid = cur.outputs(), n_out = next.outputs();
      Layer merged;
      merged.weights = Tensor({n_out, in});
      merged.bias = Tensor({n_out});
      for (int64_t r = 0; r < n_out; ++r) {
        for (int64_t c = 0; c < in; ++c) {
          double acc = 0.0;
          for (int64_t k = 0; k < mid; ++k) acc += next.weights[r * mid + k] * cur.weights[k * in + c];
          merged.weights[r * in + c] = acc;
        }
        double acc = 0.0;
        for (int64_t k = 0; k < mid; ++k) acc += next.weights[r * mid + k] * cur.bias[k];
        merged.bias[r] = acc + next.bias[r];
      }
      merged.relu = next.relu;
      merged.in_shape = cur.in_shape;
      merged.out_shape = next.out_shape;
      cur = std::move(merged);
    }
    out.push_back(std::move(cur));
  }
  return out;
}

// Linear form sum(coef * names[i]) with zero coefficients dropped.
std::vector<std::pair<double, int64_t>> terms(std::span<const double> row) {
  std::vector<std::pair<double, int64_t>> out;
  for (size_t i = 0; i < row.size(); ++i) {
    if (row[i] != 0.0) out.emplace_back(row[i], static_cast<int64_t>(i));
  }
  return out;
}

}  // namespace

std::string nnet_text(const ReducedProblem& rp) {
  const auto layers = fold_linear_layers(dense_layers(to_layers(*rp.network)));
  if (layers.back().relu) throw Error(ErrorCode::NotSequential, "nnet output layer cannot have an activation");
  if (!is_axis_aligned(rp.input)) throw Error(ErrorCode::UnsupportedInput, "nnet needs a box input region");
  const Box box = bounding_box(rp.input);
  if (!box.bounded()) throw Error(ErrorCode::UnboundedInput, "nnet needs every input bounded");

  const int64_t n_in = layers.front().inputs();
  const int64_t n_out = layers.back().outputs();
  int64_t widest = n_in;
  for (const auto& l : layers) widest = std::max(widest, l.outputs());

  std::ostringstream s;
  auto row = [&](auto begin, auto end) {
    for (auto it = begin; it != end; ++it) s << num(*it, 9) << ',';
    s << '\n';
  };
  s << "// verif reduced problem: violation when output 0 <= output 1\n";
  s << "// input region is the box given by the minimum and maximum lines\n";
  s << layers.size() << ',' << n_in << ',' << n_out << ',' << widest << ",\n";
  s << n_in << ',';
  for (const auto& l : layers) s << l.outputs() << ',';
  s << "\n0,\n";
  row(box.lower.begin(), box.lower.end());
  row(box.upper.begin(), box.upper.end());
  const std::vector<double> means(static_cast<size_t>(n_in + 1), 0.0), ranges(static_cast<size_t>(n_in + 1), 1.0);
  row(means.begin(), means.end());
  row(ranges.begin(), ranges.end());
  for (const auto& l : layers) {
    const int64_t in = l.inputs();
    for (int64_t j = 0; j < l.outputs(); ++j) {
      const auto w = l.weights.data().subspan(static_cast<size_t>(j * in), static_cast<size_t>(in));
      row(w.begin(), w.end());
    }
    for (int64_t j = 0; j < l.outputs(); ++j) s << num(l.bias[j], 9) << ",\n";
  }
  return s.str();
}

void write_nnet(const ReducedProblem& rp, const std::filesystem::path& path) { write_text(path, nnet_text(rp)); }

std::string rlv_text(const ReducedProblem& rp) {
  const auto layers = dense_layers(to_layers(*rp.network));
  std::ostringstream s;
  std::vector<std::string> prev;
  for (int64_t i = 0; i < layers.front().inputs(); ++i) {
    prev.push_back("inX" + std::to_string(i));
    s << "Input " << prev.back() << '\n';
  }
  for (size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    const bool last = l + 1 == layers.size();
    std::vector<std::string> names;
    for (int64_t j = 0; j < layer.outputs(); ++j) {
      names.push_back(last ? "outY" + std::to_string(j) : "n" + std::to_string(l) + "_" + std::to_string(j));
      s << (layer.relu ? "ReLU " : "Linear ") << names.back() << ' ' << num17(layer.bias[j]);
      for (int64_t i = 0; i < layer.inputs(); ++i) {
        s << ' ' << num17(layer.weights[j * layer.inputs() + i]) << ' ' << prev[static_cast<size_t>(i)];
      }
      s << '\n';
    }
    prev = std::move(names);
  }
  // "Assert >= c a1 v1 ..." states c >= a1*v1 + ...
  for (int64_t r = 0; r < rp.input.rows(); ++r) {
    s << "Assert >= " << num17(rp.input.bound(r));
    for (const auto& [a, i] : terms(rp.input.row(r))) s << ' ' << num17(a) << " inX" << i;
    s << '\n';
  }
  s << "Assert >= 0 1 outY0 -1 outY1\n";
  return s.str();
}

void write_rlv(const ReducedProblem& rp, const std::filesystem::path& path) { write_text(path, rlv_text(rp)); }

namespace {

bool is_flat(const Shape& shape) { return shape.size() == 1 || (shape.size() == 2 && shape[0] == 1); }

void require_flat(const ReducedProblem& rp) {
  const auto& g = *rp.network;
  if (g.inputs().size() != 1 || g.outputs().size() != 1) {
    throw Error(ErrorCode::NonFlatTensors, "vnnlib needs a single input and a single output tensor");
  }
  const Shape& in = g.op(g.inputs()[0]).shape;
  const Shape& out = g.op(g.outputs()[0]).shape;
  if (!is_flat(in)) throw Error(ErrorCode::NonFlatTensors, "input shape " + shape_to_string(in) + " is not flat");
  if (!is_flat(out)) throw Error(ErrorCode::NonFlatTensors, "output shape " + shape_to_string(out) + " is not flat");
}

}  // namespace

std::string vnnlib_text(const ReducedProblem& rp) {
  require_flat(rp);
  const auto& g = *rp.network;
  const int64_t n = element_count(g.op(g.inputs()[0]).shape);
  const int64_t m = element_count(g.op(g.outputs()[0]).shape);
  std::ostringstream s;
  s << "; verif reduced problem: sat means the original property is violated\n\n";
  for (int64_t i = 0; i < n; ++i) s << "(declare-const X_" << i << " Real)\n";
  s << '\n';
  for (int64_t j = 0; j < m; ++j) s << "(declare-const Y_" << j << " Real)\n";
  s << "\n; input region\n";
  for (int64_t r = 0; r < rp.input.rows(); ++r) {
    const auto t = terms(rp.input.row(r));
    const double b = rp.input.bound(r);
    if (t.size() == 1 && t[0].first == 1.0) {
      s << "(assert (<= X_" << t[0].second << ' ' << num17(b) << "))\n";
    } else if (t.size() == 1 && t[0].first == -1.0) {
      s << "(assert (>= X_" << t[0].second << ' ' << num17(-b) << "))\n";
    } else {
      s << "(assert (<= (+";
      for (const auto& [a, i] : t) s << " (* " << num17(a) << " X_" << i << ')';
      if (t.empty()) s << " 0";
      s << ") " << num17(b) << "))\n";
    }
  }
  s << "\n; violation\n(assert (<= Y_0 Y_1))\n";
  return s.str();
}

void write_vnnlib(const ReducedProblem& rp, const std::filesystem::path& onnx_path, const std::filesystem::path& path) {
  const std::string text = vnnlib_text(rp);
  serialize_onnx(*rp.network, default_metadata(*rp.network), onnx_path);
  write_text(path, text);
}

}  // namespace verif

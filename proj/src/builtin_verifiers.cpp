// Compiled with -frounding-math: interval bounds are computed under directed
// rounding, so the compiler must not fold or reorder float operations here.
#include <cfenv>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "verif/backends.hpp"
#include "verif/error.hpp"
#include "verif/infer.hpp"

namespace verif {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class RoundingGuard {
 public:
  explicit RoundingGuard(int mode) : saved_(std::fegetround()) { std::fesetround(mode); }
  ~RoundingGuard() { std::fesetround(saved_); }
  RoundingGuard(const RoundingGuard&) = delete;
  RoundingGuard& operator=(const RoundingGuard&) = delete;

 private:
  int saved_;
};

struct Bounds {
  Tensor lo;
  Tensor hi;
};

// Products and quotients of intervals under the current rounding mode; `upper`
// selects which end is wanted.
double mul_end(double al, double ah, double bl, double bh, bool upper) {
  if (al == ah && bl == bh) return al * bl;
  const double p[] = {al * bl, al * bh, ah * bl, ah * bh};
  double r = p[0];
  for (double v : p) r = upper ? std::max(r, v) : std::min(r, v);
  return r;
}

double div_end(double al, double ah, double bl, double bh, bool upper) {
  if (bl <= 0.0 && bh >= 0.0) return upper ? kInf : -kInf;
  const double p[] = {al / bl, al / bh, ah / bl, ah / bh};
  double r = p[0];
  for (double v : p) r = upper ? std::max(r, v) : std::min(r, v);
  return r;
}

// One end of the output interval of `op`. Operand bounds are given as
// (lo, hi) pairs; constants have lo == hi.
Tensor bound_end(const Operation& op, const std::vector<const Tensor*>& lo, const std::vector<const Tensor*>& hi,
                 bool upper) {
  Tensor out(op.shape);
  switch (op.kind) {
    case OpKind::Gemm: {
      const bool ta = op.attrs.get_int("transA") != 0;
      const bool tb = op.attrs.get_int("transB") != 0;
      const Tensor &al = *lo[0], &ah = *hi[0], &bl = *lo[1], &bh = *hi[1];
      const int64_t m = op.shape[0], n = op.shape[1];
      const int64_t k = ta ? al.shape()[0] : al.shape()[1];
      const int64_t a_cols = al.shape()[1], b_cols = bl.shape()[1];
      BroadcastIndexer bias(lo[2]->shape(), op.shape);
      const Tensor& c = upper ? *hi[2] : *lo[2];
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int64_t p = 0; p < k; ++p) {
            const int64_t ai = ta ? p * a_cols + i : i * a_cols + p;
            const int64_t bi = tb ? j * b_cols + p : p * b_cols + j;
            acc += mul_end(al[ai], ah[ai], bl[bi], bh[bi], upper);
          }
          out[i * n + j] = acc + c[bias(i * n + j)];
        }
      }
      return out;
    }
    case OpKind::MatMul: {
      const Tensor &al = *lo[0], &ah = *hi[0], &bl = *lo[1], &bh = *hi[1];
      const int64_t k = al.shape().back();
      const int64_t n = bl.rank() == 2 ? bl.shape()[1] : 1;
      const int64_t rows = al.size() / k;
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int64_t p = 0; p < k; ++p) acc += mul_end(al[r * k + p], ah[r * k + p], bl[p * n + j], bh[p * n + j], upper);
          out[r * n + j] = acc;
        }
      }
      return out;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: {
      BroadcastIndexer ia(lo[0]->shape(), op.shape), ib(lo[1]->shape(), op.shape);
      for (int64_t i = 0; i < out.size(); ++i) {
        const double al = (*lo[0])[ia(i)], ah = (*hi[0])[ia(i)];
        const double bl = (*lo[1])[ib(i)], bh = (*hi[1])[ib(i)];
        switch (op.kind) {
          case OpKind::Add: out[i] = upper ? ah + bh : al + bl; break;
          case OpKind::Sub: out[i] = upper ? ah - bl : al - bh; break;
          case OpKind::Mul: out[i] = mul_end(al, ah, bl, bh, upper); break;
          default: out[i] = div_end(al, ah, bl, bh, upper); break;
        }
      }
      return out;
    }
    case OpKind::Conv: {
      const auto& strides = op.attrs.get_ints("strides");
      const auto& pads = op.attrs.get_ints("pads");
      const Tensor &xl = *lo[0], &xh = *hi[0], &wl = *lo[1], &wh = *hi[1];
      const Tensor& bias = upper ? *hi[2] : *lo[2];
      const int64_t batch = xl.shape()[0], channels = xl.shape()[1], height = xl.shape()[2], width = xl.shape()[3];
      const int64_t filters = wl.shape()[0], kh = wl.shape()[2], kw = wl.shape()[3];
      const int64_t out_h = op.shape[2], out_w = op.shape[3];
      for (int64_t nb = 0; nb < batch; ++nb) {
        for (int64_t f = 0; f < filters; ++f) {
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
                    const int64_t xi = ((nb * channels + c) * height + ih) * width + iw;
                    const int64_t wi = ((f * channels + c) * kh + i) * kw + j;
                    acc += mul_end(xl[xi], xh[xi], wl[wi], wh[wi], upper);
                  }
                }
              }
              out[((nb * filters + f) * out_h + oh) * out_w + ow] = acc + bias[f];
            }
          }
        }
      }
      return out;
    }
    case OpKind::BatchNormalization: {
      // ((x - mean) / sqrt(var + eps)) * scale + shift needs both ends of each
      // intermediate, so this case switches rounding itself.
      const double eps = op.attrs.get_float("epsilon");
      const int64_t channels = lo[0]->shape()[1];
      const int64_t inner = lo[0]->size() / (lo[0]->shape()[0] * channels);
      auto down = [](auto f) { RoundingGuard g(FE_DOWNWARD); return f(); };
      auto up = [](auto f) { RoundingGuard g(FE_UPWARD); return f(); };
      for (int64_t i = 0; i < out.size(); ++i) {
        const int64_t c = (i / inner) % channels;
        const double dl = down([&] { return (*lo[0])[i] - (*hi[3])[c]; });
        const double dh = up([&] { return (*hi[0])[i] - (*lo[3])[c]; });
        const double sl = down([&] { return std::sqrt((*lo[4])[c] + eps); });
        const double sh = up([&] { return std::sqrt((*hi[4])[c] + eps); });
        const double ql = down([&] { return div_end(dl, dh, sl, sh, false); });
        const double qh = up([&] { return div_end(dl, dh, sl, sh, true); });
        out[i] = upper ? up([&] { return mul_end(ql, qh, (*lo[1])[c], (*hi[1])[c], true) + (*hi[2])[c]; })
                       : down([&] { return mul_end(ql, qh, (*lo[1])[c], (*hi[1])[c], false) + (*lo[2])[c]; });
      }
      return out;
    }
    default: {
      // Relu, Sigmoid, Tanh, the pools and the structural operations are monotone
      // in every input, so each end is the executor applied to that end under the
      // matching rounding mode.
      const auto& args = upper ? hi : lo;
      return evaluate_operation(op, args);
    }
  }
}

}  // namespace

std::optional<Interval> propagate_intervals(const OperationGraph& graph, const Box& input, Deadline deadline) {
  if (graph.inputs().size() != 1 || graph.outputs().size() != 1) {
    throw Error(ErrorCode::InvalidGraph, "interval propagation needs one input and one output");
  }
  const Shape& in_shape = graph.op(graph.inputs()[0]).shape;
  if (static_cast<int64_t>(input.lower.size()) != element_count(in_shape)) {
    throw Error(ErrorCode::ShapeMismatch, "box dimension differs from network input size");
  }
  std::unordered_map<NodeId, Bounds> values;
  values[graph.inputs()[0]] = Bounds{Tensor(in_shape, input.lower), Tensor(in_shape, input.upper)};
  std::vector<const Tensor*> lo, hi;
  for (NodeId id : topological_order(graph)) {
    if (deadline && std::chrono::steady_clock::now() > *deadline) return std::nullopt;
    const Operation& op = graph.op(id);
    if (op.kind == OpKind::Input) continue;
    lo.clear();
    hi.clear();
    for (const Operand& in : op.inputs) {
      if (in.is_constant()) {
        lo.push_back(&in.value());
        hi.push_back(&in.value());
      } else {
        const Bounds& b = values.at(in.producer());
        lo.push_back(&b.lo);
        hi.push_back(&b.hi);
      }
    }
    Bounds out;
    {
      RoundingGuard down(FE_DOWNWARD);
      out.lo = bound_end(op, lo, hi, false);
    }
    {
      RoundingGuard up(FE_UPWARD);
      out.hi = bound_end(op, lo, hi, true);
    }
    if (op.kind == OpKind::Sigmoid || op.kind == OpKind::Tanh) {
      // libm is not guaranteed to honour the rounding mode; widen and clamp.
      const double floor = op.kind == OpKind::Sigmoid ? 0.0 : -1.0;
      for (auto& v : out.lo.data()) v = std::max(floor, std::nextafter(std::nextafter(v, -kInf), -kInf));
      for (auto& v : out.hi.data()) v = std::min(1.0, std::nextafter(std::nextafter(v, kInf), kInf));
    }
    values[id] = std::move(out);
  }
  const Bounds& result = values.at(graph.outputs()[0]);
  return Interval{{result.lo.data().begin(), result.lo.data().end()}, {result.hi.data().begin(), result.hi.data().end()}};
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::optional<VerifierOutcome> require_bounded(const Box& box) {
  if (!box.bounded()) return VerifierOutcome::error("UnboundedInput: input region has no finite bounding box");
  return std::nullopt;
}

}  // namespace

VerifierOutcome ibp_verify(const ReducedProblem& rp, double timeout_seconds) {
  const auto start = std::chrono::steady_clock::now();
  const Box box = bounding_box(rp.input);
  if (auto bad = require_bounded(box)) return *bad;
  VerifierOutcome result = VerifierOutcome::unknown();
  bool empty = false;
  for (size_t i = 0; i < box.lower.size(); ++i) empty = empty || box.lower[i] > box.upper[i];
  if (empty) {
    result = VerifierOutcome::unsat();
  } else {
    Deadline deadline;
    if (timeout_seconds > 0) {
      deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                             std::chrono::duration<double>(timeout_seconds));
    }
    const auto bounds = propagate_intervals(*rp.network, box, deadline);
    if (bounds && bounds->lower.at(0) > bounds->upper.at(1)) result = VerifierOutcome::unsat();
  }
  result.verification_time = seconds_since(start);
  return result;
}

VerifierOutcome sample_falsify(const ReducedProblem& rp, uint64_t budget, uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const Box box = bounding_box(rp.input);
  if (auto bad = require_bounded(box)) return *bad;
  std::mt19937_64 rng(seed);
  const Executor exec(*rp.network);
  Tensor x(rp.input_shape);
  VerifierOutcome result = VerifierOutcome::unknown();
  for (uint64_t s = 0; s < budget; ++s) {
    for (size_t i = 0; i < box.lower.size(); ++i) {
      const double lo = box.lower[i], hi = box.upper[i];
      x[static_cast<int64_t>(i)] = lo < hi ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;
    }
    if (!rp.input.contains(x.data())) continue;
    const Tensor y = exec.run(std::span<const Tensor>(&x, 1)).at(0);
    if (y[0] <= y[1]) {
      result = VerifierOutcome::sat(x);
      break;
    }
  }
  result.verification_time = seconds_since(start);
  return result;
}

}  // namespace verif

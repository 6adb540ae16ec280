#include "verif/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "verif/error.hpp"
#include "verif/infer.hpp"
#include "verif/ops.hpp"

namespace verif {
namespace {

using Dnf = std::vector<Conjunction>;

Dnf conjoin(const Dnf& a, const Dnf& b) {
  if (a.size() * b.size() > kMaxDisjuncts) {
    throw Error(ErrorCode::DnfTooLarge, "negated property exceeds " + std::to_string(kMaxDisjuncts) + " disjuncts");
  }
  Dnf out;
  out.reserve(a.size() * b.size());
  for (const auto& x : a) {
    for (const auto& y : b) {
      Conjunction c = x;
      c.insert(c.end(), y.begin(), y.end());
      out.push_back(std::move(c));
    }
  }
  return out;
}

Dnf disjoin(Dnf a, const Dnf& b) {
  if (a.size() + b.size() > kMaxDisjuncts) {
    throw Error(ErrorCode::DnfTooLarge, "negated property exceeds " + std::to_string(kMaxDisjuncts) + " disjuncts");
  }
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// DNF of e (or of not e when `negated`), pushing negation down to atoms.
Dnf dnf(const Expr& e, bool negated) {
  switch (e.kind) {
    case ExprKind::Constant: {
      if (!e.truth) break;
      const bool value = *e.truth != negated;
      return value ? Dnf{Conjunction{}} : Dnf{};
    }
    case ExprKind::Atom: return Dnf{Conjunction{negated ? e.atom.negated() : e.atom}};
    case ExprKind::Not: return dnf(*e.children[0], !negated);
    case ExprKind::And:
    case ExprKind::Or: {
      // Under negation And and Or trade places.
      const bool conjunctive = (e.kind == ExprKind::And) != negated;
      Dnf acc = conjunctive ? Dnf{Conjunction{}} : Dnf{};
      for (const auto& c : e.children) {
        const Dnf part = dnf(*c, negated);
        acc = conjunctive ? conjoin(acc, part) : disjoin(std::move(acc), part);
      }
      return acc;
    }
    case ExprKind::Implies: {
      // a -> b is (not a) or b; its negation is a and (not b).
      if (negated) return conjoin(dnf(*e.children[0], false), dnf(*e.children[1], true));
      return disjoin(dnf(*e.children[0], true), dnf(*e.children[1], false));
    }
    default: break;
  }
  throw Error(ErrorCode::TypeError, std::string(to_string(e.kind)) + " is not in canonical form");
}

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

std::vector<Conjunction> negate_and_dnf(const ExprPtr& body) { return dnf(*body, true); }

HalfspacePolytope disjunct_to_hpolytope(const Conjunction& atoms, int64_t dimension) {
  HalfspacePolytope h(dimension);
  std::vector<double> row;
  for (const auto& atom : atoms) {
    if (static_cast<int64_t>(atom.coefficients.size()) != dimension) {
      throw Error(ErrorCode::ShapeMismatch, "atom has " + std::to_string(atom.coefficients.size()) +
                                                " coefficients, polytope dimension is " + std::to_string(dimension));
    }
    const bool flip = atom.cmp == Comparator::Ge || atom.cmp == Comparator::Gt;
    row = atom.coefficients;
    double bound = atom.constant;
    if (flip) {
      for (auto& v : row) v = -v;
      bound = -bound;
    }
    // v < c over doubles is v <= (largest double below c).
    if (atom.cmp == Comparator::Lt || atom.cmp == Comparator::Gt) bound = std::nextafter(bound, kNegInf);
    h.add_row(row, bound);
  }
  return h;
}

OperationGraph construct_suffix(const HalfspacePolytope& h) {
  if (h.rows() == 0) throw Error(ErrorCode::EmptyPolytope, "suffix needs at least one constraint");
  GraphBuilder b;
  const NodeId y = b.add_input({1, h.dimension()});
  std::vector<double> neg_b(h.b().size());
  for (size_t i = 0; i < neg_b.size(); ++i) neg_b[i] = -h.b()[i];
  const NodeId hidden = b.add(OpKind::Gemm,
                              {Operand::node(y), Operand::constant(Tensor({h.rows(), h.dimension()}, h.a())),
                               Operand::constant(Tensor::vector(neg_b))},
                              ops::gemm_attributes(false, true));
  const NodeId relu = b.add(OpKind::Relu, {Operand::node(hidden)});
  std::vector<double> w(static_cast<size_t>(2 * h.rows()), 0.0);
  std::fill(w.begin(), w.begin() + h.rows(), 1.0);
  const NodeId out = b.add(OpKind::Gemm,
                           {Operand::node(relu), Operand::constant(Tensor({2, h.rows()}, w)),
                            Operand::constant(Tensor::vector({0.0, 0.0}))},
                           ops::gemm_attributes(false, true));
  b.set_outputs({out});
  return b.build();
}

OperationGraph compose_suffix(const OperationGraph& network, const HalfspacePolytope& h) {
  if (network.outputs().size() != 1) throw Error(ErrorCode::InvalidGraph, "network must have exactly one output");
  const OperationGraph suffix = construct_suffix(h);
  GraphBuilder b(network);
  NodeId cur = network.outputs()[0];
  const Shape& out_shape = network.op(cur).shape;
  if (element_count(out_shape) != h.dimension()) {
    throw Error(ErrorCode::ShapeMismatch, "output polytope dimension differs from network output size");
  }
  if (out_shape != Shape{1, h.dimension()}) {
    cur = b.add(OpKind::Reshape, {Operand::node(cur)}, ops::reshape_attributes({1, h.dimension()}));
  }
  // Splice the suffix's operations in after the network output.
  std::map<NodeId, NodeId> remap;
  for (NodeId id : topological_order(suffix)) {
    const Operation& op = suffix.op(id);
    if (op.kind == OpKind::Input) {
      remap[id] = cur;
      continue;
    }
    std::vector<Operand> inputs = op.inputs;
    for (auto& in : inputs) {
      if (in.is_node()) in.rewire(remap.at(in.producer()));
    }
    remap[id] = b.add(op.kind, std::move(inputs), op.attrs);
  }
  b.set_outputs({remap.at(suffix.outputs()[0])});
  return b.build();
}

bool ReducedProblem::is_violation(const Tensor& x) const {
  if (x.shape() != input_shape || !input.contains(x.data())) return false;
  const Tensor y = infer(*network, std::span<const Tensor>(&x, 1)).at(0);
  return y[0] <= y[1];
}

std::vector<ReducedProblem> reduce(const ExprPtr& canonical) {
  if (!canonical || canonical->kind != ExprKind::Forall || !canonical->network) {
    throw Error(ErrorCode::TypeError, "reduce expects a canonical property");
  }
  const NetworkPtr& net = canonical->network;
  const int64_t n = element_count(canonical->shape);
  const int64_t m = element_count(net->op(net->outputs().at(0)).shape);
  const auto disjuncts = negate_and_dnf(canonical->children[0]);

  std::vector<ReducedProblem> out;
  out.reserve(disjuncts.size());
  for (size_t i = 0; i < disjuncts.size(); ++i) {
    Conjunction in_atoms, out_atoms;
    for (const auto& atom : disjuncts[i]) (atom.space == VarSpace::Input ? in_atoms : out_atoms).push_back(atom);
    ReducedProblem rp;
    rp.input = disjunct_to_hpolytope(in_atoms, n);
    rp.output = disjunct_to_hpolytope(out_atoms, m);
    // No output constraint: every output is a violation. A single all-zero row
    // keeps the suffix well formed and always reports membership.
    const HalfspacePolytope h =
        out_atoms.empty() ? HalfspacePolytope(m, std::vector<double>(static_cast<size_t>(m), 0.0), {0.0}) : rp.output;
    rp.network = std::make_shared<const OperationGraph>(compose_suffix(*net, h));
    rp.input_shape = canonical->shape;
    rp.disjunct = i;
    rp.atoms = disjuncts[i];
    out.push_back(std::move(rp));
  }
  return out;
}

Tensor map_counterexample(const ReducedProblem& problem, const Tensor& x) {
  if (x.shape() != problem.input_shape) {
    throw Error(ErrorCode::NotAViolation, "counterexample has shape " + shape_to_string(x.shape()) + ", expected " +
                                              shape_to_string(problem.input_shape));
  }
  if (!problem.input.contains(x.data())) throw Error(ErrorCode::NotAViolation, "point lies outside the input polytope");
  const Tensor y = infer(*problem.network, std::span<const Tensor>(&x, 1)).at(0);
  if (!(y[0] <= y[1])) throw Error(ErrorCode::NotAViolation, "suffix output does not satisfy N'(x)_0 <= N'(x)_1");
  return x;
}

}  // namespace verif

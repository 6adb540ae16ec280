#pragma once

#include <cstddef>
#include <vector>

#include "verif/linear.hpp"
#include "verif/property.hpp"

namespace verif {

inline constexpr size_t kMaxDisjuncts = 4096;

using Conjunction = std::vector<LinearAtom>;

/// DNF of the negation of a quantifier-free canonical body. An empty result is
/// an unsatisfiable negation; an empty conjunction is the constant true.
/// Throws DnfTooLarge past kMaxDisjuncts.
std::vector<Conjunction> negate_and_dnf(const ExprPtr& body);

/// { v : A v <= b } with one row per atom. Strict comparisons use the largest
/// double below the bound. All atoms must share `space`; `dimension` is used
/// when `atoms` is empty.
HalfspacePolytope disjunct_to_hpolytope(const Conjunction& atoms, int64_t dimension);

/// Two fully connected layers: Relu(A y - b), then [1..1; 0..0]. For every y,
/// y is in H exactly when output 0 <= output 1. Input shape [1, m], output [1, 2].
/// Throws EmptyPolytope for a polytope without rows.
OperationGraph construct_suffix(const HalfspacePolytope& h);

/// suffix applied to the (flattened) output of `network`.
OperationGraph compose_suffix(const OperationGraph& network, const HalfspacePolytope& h);

struct ReducedProblem {
  NetworkPtr network;         // N' = suffix o N, output [1, 2]
  HalfspacePolytope input;    // H_in over the flattened input
  HalfspacePolytope output;   // H over the flattened output of N
  Shape input_shape;
  size_t disjunct = 0;        // index into negate_and_dnf of the property body
  Conjunction atoms;

  /// x in H_in and N'(x)_0 <= N'(x)_1.
  bool is_violation(const Tensor& x) const;
};

/// One reduced problem per disjunct of the negated property, in DNF order.
std::vector<ReducedProblem> reduce(const ExprPtr& canonical);

/// Returns x unchanged after checking that it violates the reduced problem.
Tensor map_counterexample(const ReducedProblem& problem, const Tensor& x);

}  // namespace verif

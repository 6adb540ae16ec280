#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace verif {

enum class Comparator { Le, Lt, Ge, Gt };

std::string_view to_string(Comparator cmp);
Comparator negate(Comparator cmp);

/// Which quantity an atom constrains: components of the network input x, or of its output N(x).
enum class VarSpace { Input, Output };

/// coefficients . v  (cmp)  constant, with v ranging over one variable space.
struct LinearAtom {
  VarSpace space = VarSpace::Output;
  std::vector<double> coefficients;
  Comparator cmp = Comparator::Le;
  double constant = 0.0;

  /// Evaluates the atom with the original comparator.
  bool holds(std::span<const double> values) const;
  /// Logical negation, e.g. a <= c becomes a > c.
  LinearAtom negated() const;
  std::string to_string() const;

  bool operator==(const LinearAtom&) const = default;
};

/// Dot product accumulated left to right from 0.0. Shared with the Gemm kernel
/// so membership tests and suffix networks agree bit-for-bit.
double dot(std::span<const double> a, std::span<const double> b);

/// { v : A v <= b } with A stored row-major.
class HalfspacePolytope {
 public:
  HalfspacePolytope() = default;
  explicit HalfspacePolytope(int64_t dimension) : dimension_(dimension) {}
  HalfspacePolytope(int64_t dimension, std::vector<double> a, std::vector<double> b);

  int64_t dimension() const noexcept { return dimension_; }
  int64_t rows() const noexcept { return static_cast<int64_t>(b_.size()); }
  std::span<const double> row(int64_t i) const;
  double bound(int64_t i) const { return b_[static_cast<size_t>(i)]; }
  const std::vector<double>& a() const noexcept { return a_; }
  const std::vector<double>& b() const noexcept { return b_; }

  void add_row(std::span<const double> coefficients, double bound);
  bool contains(std::span<const double> point) const;

  bool operator==(const HalfspacePolytope&) const = default;

 private:
  int64_t dimension_ = 0;
  std::vector<double> a_;
  std::vector<double> b_;
};

/// Axis-aligned bounds implied by the single-variable rows of a polytope.
/// Entries are +-infinity where no such row bounds the axis.
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  bool bounded() const;
};

Box bounding_box(const HalfspacePolytope& polytope);
/// True when every row has exactly one nonzero coefficient.
bool is_axis_aligned(const HalfspacePolytope& polytope);

}  // namespace verif

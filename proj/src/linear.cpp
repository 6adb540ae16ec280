#include "verif/linear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "verif/error.hpp"

namespace verif {

std::string_view to_string(Comparator cmp) {
  switch (cmp) {
    case Comparator::Le: return "<=";
    case Comparator::Lt: return "<";
    case Comparator::Ge: return ">=";
    case Comparator::Gt: return ">";
  }
  return "?";
}

Comparator negate(Comparator cmp) {
  switch (cmp) {
    case Comparator::Le: return Comparator::Gt;
    case Comparator::Lt: return Comparator::Ge;
    case Comparator::Ge: return Comparator::Lt;
    case Comparator::Gt: return Comparator::Le;
  }
  return cmp;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

bool LinearAtom::holds(std::span<const double> values) const {
  if (values.size() != coefficients.size()) throw Error(ErrorCode::ShapeMismatch, "atom dimension mismatch");
  const double lhs = dot(coefficients, values);
  switch (cmp) {
    case Comparator::Le: return lhs <= constant;
    case Comparator::Lt: return lhs < constant;
    case Comparator::Ge: return lhs >= constant;
    case Comparator::Gt: return lhs > constant;
  }
  return false;
}

LinearAtom LinearAtom::negated() const {
  LinearAtom out = *this;
  out.cmp = negate(cmp);
  return out;
}

std::string LinearAtom::to_string() const {
  std::ostringstream out;
  out.precision(17);
  const char var = space == VarSpace::Input ? 'x' : 'y';
  bool first = true;
  for (size_t i = 0; i < coefficients.size(); ++i) {
    if (coefficients[i] == 0.0) continue;
    out << (first ? "" : " + ") << coefficients[i] << '*' << var << i;
    first = false;
  }
  if (first) out << '0';
  out << ' ' << verif::to_string(cmp) << ' ' << constant;
  return out.str();
}

HalfspacePolytope::HalfspacePolytope(int64_t dimension, std::vector<double> a, std::vector<double> b)
    : dimension_(dimension), a_(std::move(a)), b_(std::move(b)) {
  if (static_cast<int64_t>(a_.size()) != dimension_ * rows()) {
    throw Error(ErrorCode::ShapeMismatch, "polytope matrix does not have one row per bound");
  }
}

std::span<const double> HalfspacePolytope::row(int64_t i) const {
  return std::span<const double>(a_).subspan(static_cast<size_t>(i * dimension_), static_cast<size_t>(dimension_));
}

void HalfspacePolytope::add_row(std::span<const double> coefficients, double bound) {
  if (static_cast<int64_t>(coefficients.size()) != dimension_) {
    throw Error(ErrorCode::ShapeMismatch, "row length differs from polytope dimension");
  }
  a_.insert(a_.end(), coefficients.begin(), coefficients.end());
  b_.push_back(bound);
}

bool HalfspacePolytope::contains(std::span<const double> point) const {
  if (static_cast<int64_t>(point.size()) != dimension_) throw Error(ErrorCode::ShapeMismatch, "point dimension mismatch");
  for (int64_t i = 0; i < rows(); ++i) {
    if (!(dot(row(i), point) <= bound(i))) return false;
  }
  return true;
}

bool Box::bounded() const {
  for (size_t i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i])) return false;
  }
  return true;
}

Box bounding_box(const HalfspacePolytope& polytope) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto n = static_cast<size_t>(polytope.dimension());
  Box box{std::vector<double>(n, -inf), std::vector<double>(n, inf)};
  for (int64_t r = 0; r < polytope.rows(); ++r) {
    const auto row = polytope.row(r);
    size_t nonzero = 0;
    size_t axis = 0;
    for (size_t i = 0; i < n; ++i) {
      if (row[i] != 0.0) {
        ++nonzero;
        axis = i;
      }
    }
    if (nonzero != 1) continue;
    const double a = row[axis];
    const double b = polytope.bound(r);
    // Round outward so the box always contains the polytope.
    double limit = b / a;
    if (a > 0) {
      if (a != 1.0) limit = std::nextafter(limit, inf);
      box.upper[axis] = std::min(box.upper[axis], limit);
    } else {
      if (a != -1.0) limit = std::nextafter(limit, -inf);
      box.lower[axis] = std::max(box.lower[axis], limit);
    }
  }
  return box;
}

bool is_axis_aligned(const HalfspacePolytope& polytope) {
  for (int64_t r = 0; r < polytope.rows(); ++r) {
    const auto row = polytope.row(r);
    if (std::count_if(row.begin(), row.end(), [](double v) { return v != 0.0; }) != 1) return false;
  }
  return true;
}

}  // namespace verif

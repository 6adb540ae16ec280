#pragma once

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/properties.hpp"
#include "support/testing.hpp"
#include "verif/dnnp.hpp"
#include "verif/reduce.hpp"

namespace verif::testing {

/// Tiny integer-weight network [1, sizes[0]] -> ... -> [1, sizes.back()] with Relu
/// between Gemm layers. Integer weights keep outputs on a half-integer grid exact,
/// so grid samples land on comparison boundaries.
inline NetworkPtr integer_network(const std::vector<int64_t>& sizes, std::mt19937_64& rng) {
  GraphBuilder b;
  NodeId cur = b.add_input({1, sizes[0]});
  for (size_t i = 1; i < sizes.size(); ++i) {
    cur = b.add(OpKind::Gemm,
                {Operand::node(cur), Operand::constant(random_integers({sizes[i], sizes[i - 1]}, rng, -2, 2)),
                 Operand::constant(random_integers({sizes[i]}, rng, -1, 1))},
                ops::gemm_attributes(false, true));
    if (i + 1 < sizes.size()) cur = b.add(OpKind::Relu, {Operand::node(cur)});
  }
  b.set_outputs({cur});
  return share(b.build());
}

/// Random property text over an [1, n] input and [1, m] output.
class PropertyGen {
 public:
  PropertyGen(std::mt19937_64& rng, int64_t n, int64_t m) : rng_(rng), n_(n), m_(m) {}

  int pick(int64_t k) { return static_cast<int>(rng_() % static_cast<uint64_t>(k)); }

  std::string half() {
    std::ostringstream s;
    s << (pick(9) - 4) / 2.0;
    return s.str();
  }

  std::string cmp() {
    static const char* cmps[] = {"<", "<=", ">", ">=", "==", "!="};
    return cmps[pick(6)];
  }

  std::string x(int64_t i) { return "x[0, " + std::to_string(i) + "]"; }
  std::string y(int64_t j) { return "N(x)[0, " + std::to_string(j) + "]"; }

  std::string input_atom() {
    switch (pick(3)) {
      case 0: return x(pick(n_)) + " " + cmp() + " " + half();
      case 1: return x(pick(n_)) + " - " + x(pick(n_)) + " " + cmp() + " " + half();
      default: return half() + " <= x <= " + half();
    }
  }

  std::string output_atom() {
    switch (pick(5)) {
      case 0: return y(pick(m_)) + " " + cmp() + " " + half();
      case 1: return y(pick(m_)) + " " + cmp() + " " + y(pick(m_));
      case 2: return "2 * " + y(pick(m_)) + " - " + y(pick(m_)) + " " + cmp() + " " + half();
      case 3: return "argmax(N(x)) == " + std::to_string(pick(m_));
      default: return "argmin(N(x)) != " + std::to_string(pick(m_));
    }
  }

  std::string formula(int depth, bool outputs) {
    if (depth <= 0 || pick(3) == 0) return outputs ? output_atom() : input_atom();
    const std::string a = formula(depth - 1, outputs), b = formula(depth - 1, outputs);
    switch (pick(4)) {
      case 0: return "And(" + a + ", " + b + ")";
      case 1: return "Or(" + a + ", " + b + ")";
      case 2: return "Implies(" + a + ", " + b + ")";
      default: return "Not(" + a + ")";
    }
  }

 private:
  std::mt19937_64& rng_;
  int64_t n_, m_;
};

inline std::string property_text(const std::string& body) {
  return "from properties import *\nN = Network(\"N\")\nForall(x, " + body + ")\n";
}

/// A random property "Implies(box & extra, post)" over a tiny network, with
/// everything needed to compare the reference interpreter against the reduction.
struct ReductionCase {
  NetworkPtr network;
  std::string text;
  ParsedProperty parsed;
  ParsedProperty precondition;
  EvalContext context;
  std::vector<ReducedProblem> problems;
  std::vector<double> lo, hi;

  bool violated_at(const Tensor& x) const { return !holds_at(parsed.expr, x, context); }
  bool in_region(const Tensor& x) const { return holds_at(precondition.expr, x, context); }

  bool continuous = true;  // false when the region has measure zero, e.g. an input equality

  /// Draws from the box, on the half-integer grid or continuous, filtered by the
  /// precondition. Returns false if no point was found.
  bool sample(std::mt19937_64& rng, Tensor& x, bool grid) const {
    grid = grid || !continuous;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      x = Tensor({1, static_cast<int64_t>(lo.size())});
      for (size_t i = 0; i < lo.size(); ++i) {
        const auto k = static_cast<int64_t>(i);
        if (grid) {
          const auto steps = static_cast<int>((hi[i] - lo[i]) * 2);
          x[k] = lo[i] + std::uniform_int_distribution<int>(0, steps)(rng) / 2.0;
        } else {
          x[k] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
        }
      }
      if (in_region(x)) return true;
    }
    return false;
  }
};

/// Networks with at most two layers and n, m <= 3; properties whose negation has
/// at most `max_disjuncts` disjuncts. Properties with an empty region are redrawn.
inline std::vector<ReductionCase> reduction_corpus(size_t count, uint64_t seed, size_t max_disjuncts = 3) {
  std::mt19937_64 rng(seed);
  std::vector<ReductionCase> corpus;
  while (corpus.size() < count) {
    const int64_t n = 1 + static_cast<int64_t>(rng() % 3);
    const int64_t m = 1 + static_cast<int64_t>(rng() % 3);
    std::vector<int64_t> sizes{n};
    if (rng() % 2) sizes.push_back(1 + static_cast<int64_t>(rng() % 3));
    sizes.push_back(m);
    ReductionCase c;
    c.network = integer_network(sizes, rng);

    PropertyGen gen(rng, n, m);
    std::string pre = "And(";
    for (int64_t i = 0; i < n; ++i) {
      c.lo.push_back(gen.pick(5) / -2.0);
      c.hi.push_back(c.lo.back() + (1 + gen.pick(4)) / 2.0);
      std::ostringstream s;
      s << c.lo.back() << " <= " << gen.x(i) << " <= " << c.hi.back() << ", ";
      pre += s.str();
    }
    pre += gen.pick(2) ? gen.input_atom() + ")" : "True)";
    const std::string post = gen.formula(2, true);
    c.text = property_text("Implies(" + pre + ", " + post + ")");

    const NetworkMap nets{{"N", c.network}};
    c.parsed = parse_dnnp(c.text);
    c.precondition = parse_dnnp(property_text(pre));
    c.context = make_context(c.parsed, {}, nets);
    c.problems = reduce(canonicalize(bind(c.parsed, {}, nets)));
    if (c.problems.size() > max_disjuncts) continue;
    Tensor probe;
    if (!c.sample(rng, probe, true)) continue;
    c.continuous = c.sample(rng, probe, false);
    corpus.push_back(std::move(c));
  }
  return corpus;
}

}  // namespace verif::testing

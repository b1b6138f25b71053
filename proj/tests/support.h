#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ctxfeat/gridcore/grid.h"
#include "ctxfeat/gridcore/ops.h"
#include "ctxfeat/gridcore/random.h"

namespace ctxfeat::testing {

inline Grid RandomGrid(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                       bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  Grid g(shape);
  for (double& v : g.mutable_data()) v = UniformRange(rng, lo, hi);
  g.set_requires_grad(requires_grad);
  return g;
}

// sum(out * W) for a fixed random W, so every output element carries a
// distinct non-trivial weight.
inline Grid WeightedSum(Tape& tape, const Grid& out, std::uint64_t seed = 1234) {
  return Sum(tape, Multiply(tape, out, RandomGrid(out.shape(), seed, 0.5, 1.5)));
}

using LossBuilder = std::function<Grid(Tape&)>;

struct GradientComparison {
  std::vector<std::vector<double>> analytic;
  std::vector<std::vector<double>> numeric;
};

// Analytic gradients of build() w.r.t. each leaf, next to central finite
// differences with step eps.
inline GradientComparison CompareGradients(const std::vector<Grid>& leaves,
                                           const LossBuilder& build, double eps = 1e-5) {
  GradientComparison out;
  for (const Grid& leaf : leaves) leaf.clear_grad();
  {
    Tape tape;
    tape.backward(build(tape));
  }
  for (const Grid& leaf : leaves) {
    const auto g = leaf.grad();
    out.analytic.emplace_back(g.begin(), g.end());
  }
  for (Grid leaf : leaves) {
    std::vector<double> numeric(leaf.size());
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      const double saved = leaf.mutable_data()[i];
      leaf.mutable_data()[i] = saved + eps;
      Tape plus_tape;
      const double plus = build(plus_tape).item();
      leaf.mutable_data()[i] = saved - eps;
      Tape minus_tape;
      const double minus = build(minus_tape).item();
      leaf.mutable_data()[i] = saved;
      numeric[i] = (plus - minus) / (2.0 * eps);
    }
    out.numeric.push_back(std::move(numeric));
  }
  return out;
}

// max_i |a_i - n_i| / max(|n_i|, floor).
inline double MaxRelativeError(const GradientComparison& c, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t l = 0; l < c.analytic.size(); ++l) {
    for (std::size_t i = 0; i < c.analytic[l].size(); ++i) {
      const double a = c.analytic[l][i], n = c.numeric[l][i];
      worst = std::max(worst, std::abs(a - n) / std::max(std::abs(n), floor));
    }
  }
  return worst;
}

// max over leaves of ||a - n|| / max(||n||, floor).
inline double MaxTensorRelativeError(const GradientComparison& c, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t l = 0; l < c.analytic.size(); ++l) {
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < c.analytic[l].size(); ++i) {
      const double d = c.analytic[l][i] - c.numeric[l][i];
      diff += d * d;
      norm += c.numeric[l][i] * c.numeric[l][i];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(norm), floor));
  }
  return worst;
}

inline double GradCheck(const std::vector<Grid>& leaves, const LossBuilder& build,
                        double eps = 1e-5) {
  return MaxRelativeError(CompareGradients(leaves, build, eps));
}

inline bool BitEqual(const Grid& a, const Grid& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data(), y = b.data();
  return std::equal(x.begin(), x.end(), y.begin(), [](double p, double q) {
    return std::memcmp(&p, &q, sizeof(double)) == 0;
  });
}

}  // namespace ctxfeat::testing

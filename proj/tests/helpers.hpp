// Shared test fixtures: field construction from lambdas, random fields,
// comparison utilities.

#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "adpde/fields.hpp"
#include "adpde/repr.hpp"
#include "adpde/rng.hpp"

namespace testutil {

using namespace adpde;

// f(x, y[, z]) sampled at cell centers x = i * dx.
template <class F>
ScalarField sample_scalar(const Grid& g, F&& f) {
  Buf data(std::size_t(g.cells()));
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    auto c = g.coords(i);
    double x = c[0] * g.spacing(0);
    double y = c[1] * g.spacing(1);
    double z = g.ndim() == 3 ? c[2] * g.spacing(2) : 0.0;
    data[std::size_t(i)] = g.ndim() == 3 ? f(x, y, z) : f(x, y, 0.0);
  }
  return ScalarField(g, std::move(data));
}

inline ScalarField random_scalar(const Grid& g, Rng& rng, double lo, double hi) {
  Buf data(std::size_t(g.cells()));
  for (double& v : data) v = rng.uniform(lo, hi);
  return ScalarField(g, std::move(data));
}

inline VectorField random_vector(const Grid& g, Rng& rng, double lo, double hi) {
  std::vector<ScalarField> comps;
  for (int a = 0; a < g.ndim(); ++a) comps.push_back(random_scalar(g, rng, lo, hi));
  return VectorField(g, std::move(comps));
}

inline PotentialField random_potential(const Grid& g, Rng& rng, double lo, double hi) {
  std::vector<ScalarField> comps;
  for (int a = 0; a < (g.ndim() == 2 ? 1 : 3); ++a)
    comps.push_back(random_scalar(g, rng, lo, hi));
  return PotentialField(g, std::move(comps));
}

inline TensorParams random_tensor_params(const Grid& g, Rng& rng, double b_lo,
                                         double b_hi, double lam_lo, double lam_hi) {
  std::vector<ScalarField> b, lam;
  for (int i = 0; i < g.ndim() * (g.ndim() - 1) / 2; ++i)
    b.push_back(random_scalar(g, rng, b_lo, b_hi));
  for (int i = 0; i < g.ndim(); ++i)
    lam.push_back(random_scalar(g, rng, lam_lo, lam_hi));
  return TensorParams(g, std::move(b), std::move(lam));
}

inline double max_abs_diff(const Buf& a, const Buf& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline double max_abs(const Buf& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

inline bool bitwise_equal(const Buf& a, const Buf& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace testutil

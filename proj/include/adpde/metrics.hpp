/// @file metrics.hpp
/// @brief Evaluation: RAE, diffusion scalar maps, CbO, and region statistics.

#pragma once

#include "adpde/repr.hpp"

namespace adpde {

// ---------------------------------------------------------------------------
// Mean relative absolute error
// ---------------------------------------------------------------------------
// mean over cells of |F - Fhat| / |F| with the absolute value / 2-norm /
// Frobenius norm per field kind. Cells whose ground-truth norm is below
// 1e-12 are excluded from the mean rather than regularized, so reported
// numbers carry no invented epsilon.

inline constexpr double kRaeDenomFloor = 1e-12;

namespace detail {

inline double rae_from_sums(double sum, std::int64_t used) {
  require(used > 0, "undefined-rae", "all cells excluded: undefined RAE");
  return sum / double(used);
}

}  // namespace detail

inline double rae(const ScalarField& truth, const ScalarField& estimate) {
  require(truth.grid() == estimate.grid(), "grid-mismatch", "RAE grids differ");
  double sum = 0.0;
  std::int64_t used = 0;
  for (std::int64_t i = 0; i < truth.grid().cells(); ++i) {
    double den = std::fabs(truth[i]);
    if (den < kRaeDenomFloor) continue;
    sum += std::fabs(truth[i] - estimate[i]) / den;
    ++used;
  }
  return detail::rae_from_sums(sum, used);
}

inline double rae(const VectorField& truth, const VectorField& estimate) {
  require(truth.grid() == estimate.grid(), "grid-mismatch", "RAE grids differ");
  double sum = 0.0;
  std::int64_t used = 0;
  const int n = truth.ncomp();
  for (std::int64_t i = 0; i < truth.grid().cells(); ++i) {
    double den2 = 0.0, err2 = 0.0;
    for (int a = 0; a < n; ++a) {
      double tv = truth.comp(a)[i];
      double d = tv - estimate.comp(a)[i];
      den2 += tv * tv;
      err2 += d * d;
    }
    double den = std::sqrt(den2);
    if (den < kRaeDenomFloor) continue;
    sum += std::sqrt(err2) / den;
    ++used;
  }
  return detail::rae_from_sums(sum, used);
}

inline double rae(const TensorField& truth, const TensorField& estimate) {
  require(truth.grid() == estimate.grid(), "grid-mismatch", "RAE grids differ");
  const int n = truth.grid().ndim();
  std::vector<double> w = n == 2 ? std::vector<double>{1.0, 2.0, 1.0}
                                 : std::vector<double>{1.0, 2.0, 1.0, 2.0, 2.0, 1.0};
  double sum = 0.0;
  std::int64_t used = 0;
  for (std::int64_t i = 0; i < truth.grid().cells(); ++i) {
    double den2 = 0.0, err2 = 0.0;
    for (int e = 0; e < truth.nentries(); ++e) {
      double tv = truth.entry(e)[i];
      double d = tv - estimate.entry(e)[i];
      den2 += w[std::size_t(e)] * tv * tv;
      err2 += w[std::size_t(e)] * d * d;
    }
    double den = std::sqrt(den2);
    if (den < kRaeDenomFloor) continue;
    sum += std::sqrt(err2) / den;
    ++used;
  }
  return detail::rae_from_sums(sum, used);
}

/// Mean frame RAE across a series; frame 0 is the shared initial state and is
/// skipped by default.
inline double series_rae(const ConcentrationSeries& truth,
                         const ConcentrationSeries& estimate,
                         bool skip_first = true) {
  require(truth.nframes() == estimate.nframes(), "shape",
          "series frame counts differ");
  double sum = 0.0;
  int used = 0;
  for (int f = skip_first ? 1 : 0; f < truth.nframes(); ++f) {
    sum += rae(truth.frame(f), estimate.frame(f));
    ++used;
  }
  require(used > 0, "undefined-rae", "no frames to compare");
  return sum / used;
}

// ---------------------------------------------------------------------------
// Diffusion scalar maps
// ---------------------------------------------------------------------------

inline ScalarField trace_map(const TensorField& d) {
  const Grid& g = d.grid();
  Buf out(std::size_t(g.cells()), 0.0);
  for (int a = 0; a < g.ndim(); ++a) {
    const ScalarField& diag = d.diag(a);
    for (std::int64_t i = 0; i < g.cells(); ++i) out[std::size_t(i)] += diag[i];
  }
  return ScalarField(g, std::move(out));
}

inline ScalarField trace_map(const EigenDecomp& e) {
  const Grid& g = e.eigvals.front().grid();
  Buf out(std::size_t(g.cells()), 0.0);
  for (const auto& lam : e.eigvals)
    for (std::int64_t i = 0; i < g.cells(); ++i) out[std::size_t(i)] += lam[i];
  return ScalarField(g, std::move(out));
}

/// Fractional anisotropy. The formula is the standard 3-eigenvalue one; 2D
/// decompositions are handled by treating the missing third eigenvalue as 0,
/// a desk-scale extension reported as such. All-zero eigenvalues map to 0.
/// FA is in [0, 1] for PSD inputs.
inline ScalarField fa_map(const EigenDecomp& e) {
  const Grid& g = e.eigvals.front().grid();
  const int n = int(e.eigvals.size());
  Buf out(std::size_t(g.cells()));
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    double l[3] = {0.0, 0.0, 0.0};
    for (int k = 0; k < n; ++k) l[k] = e.eigvals[std::size_t(k)][i];
    double den = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
    if (den == 0.0) {
      out[std::size_t(i)] = 0.0;
      continue;
    }
    double num = (l[0] - l[1]) * (l[0] - l[1]) + (l[1] - l[2]) * (l[1] - l[2]) +
                 (l[2] - l[0]) * (l[2] - l[0]);
    out[std::size_t(i)] = std::sqrt(0.5) * std::sqrt(num / den);
  }
  return ScalarField(g, std::move(out));
}

/// Unit eigenvector of the largest eigenvalue (eig_sym sign convention).
inline VectorField principal_orientation(const EigenDecomp& e) {
  return e.eigvecs.front();
}

/// Color-by-orientation: componentwise FA * |u_prin|; channels in [0, 1].
inline VectorField cbo_map(const EigenDecomp& e) {
  ScalarField fa = fa_map(e);
  const VectorField& u = e.eigvecs.front();
  const Grid& g = fa.grid();
  std::vector<ScalarField> chans;
  for (int a = 0; a < u.ncomp(); ++a) {
    Buf c(std::size_t(g.cells()));
    for (std::int64_t i = 0; i < g.cells(); ++i)
      c[std::size_t(i)] = fa[i] * std::fabs(u.comp(a)[i]);
    chans.emplace_back(g, std::move(c));
  }
  return VectorField(g, std::move(chans));
}

inline ScalarField vector_norm_map(const VectorField& v) {
  const Grid& g = v.grid();
  Buf out(std::size_t(g.cells()));
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    double s = 0.0;
    for (int a = 0; a < v.ncomp(); ++a) s += v.comp(a)[i] * v.comp(a)[i];
    out[std::size_t(i)] = std::sqrt(s);
  }
  return ScalarField(g, std::move(out));
}

// ---------------------------------------------------------------------------
// Region statistics (lesion vs mirrored contralateral region)
// ---------------------------------------------------------------------------

struct RegionMask {
  Grid grid;
  std::vector<std::uint8_t> member;

  RegionMask(Grid g, std::vector<std::uint8_t> m)
      : grid(std::move(g)), member(std::move(m)) {
    require(std::int64_t(member.size()) == grid.cells(), "shape",
            "mask length must equal the cell count");
  }
  std::int64_t count() const {
    std::int64_t c = 0;
    for (auto m : member) c += m ? 1 : 0;
    return c;
  }
};

namespace detail {
inline void region_stats(const ScalarField& map, const RegionMask& mask,
                         std::int64_t& n, double& mean, double& var) {
  n = 0;
  double sum = 0.0;
  for (std::int64_t i = 0; i < map.grid().cells(); ++i)
    if (mask.member[std::size_t(i)]) {
      sum += map[i];
      ++n;
    }
  require(n > 0, "empty-region", "region mask selects no cells");
  mean = sum / double(n);
  double ss = 0.0;
  for (std::int64_t i = 0; i < map.grid().cells(); ++i)
    if (mask.member[std::size_t(i)]) {
      double d = map[i] - mean;
      ss += d * d;
    }
  var = n > 1 ? ss / double(n - 1) : 0.0;
}
}  // namespace detail

/// min(mean_lesion/mean_clesion, mean_clesion/mean_lesion), in [0, 1].
/// Means of magnitude maps must be positive.
inline double rel_mean(const ScalarField& map, const RegionMask& lesion,
                       const RegionMask& clesion) {
  std::int64_t n1, n2;
  double m1, m2, v1, v2;
  detail::region_stats(map, lesion, n1, m1, v1);
  detail::region_stats(map, clesion, n2, m2, v2);
  require(m1 > 0.0 && m2 > 0.0, "nonpositive-mean",
          "rel_mean needs positive region means");
  return std::min(m1 / m2, m2 / m1);
}

/// Welch's unpaired t-statistic between the two cell populations, absolute
/// value. Two zero-variance populations with equal means are degenerate; with
/// unequal means the statistic is +inf (flagged to the caller via the value).
inline double abs_t(const ScalarField& map, const RegionMask& lesion,
                    const RegionMask& clesion) {
  std::int64_t n1, n2;
  double m1, m2, v1, v2;
  detail::region_stats(map, lesion, n1, m1, v1);
  detail::region_stats(map, clesion, n2, m2, v2);
  require(n1 >= 2 && n2 >= 2, "degenerate-t", "each region needs >= 2 cells");
  double se2 = v1 / double(n1) + v2 / double(n2);
  if (se2 == 0.0) {
    require(m1 != m2, "degenerate-t",
            "zero variances with equal means: undefined t");
    return std::numeric_limits<double>::infinity();
  }
  return std::fabs((m1 - m2) / std::sqrt(se2));
}

/// Mean principal-orientation deviation in degrees between lesion cells and
/// their mirrored counterparts, sign ambiguity resolved by the +- min, so the
/// result is in [0, 90]. `mirror` maps each cell index to its contralateral
/// cell; it is supplied externally (midline computation is out of scope).
inline double angle_dev(const VectorField& u, const RegionMask& lesion,
                        const std::vector<std::int64_t>& mirror) {
  const Grid& g = u.grid();
  require(std::int64_t(mirror.size()) == g.cells(), "shape",
          "mirror map length must equal the cell count");
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    if (!lesion.member[std::size_t(i)]) continue;
    std::int64_t j = mirror[std::size_t(i)];
    require(j >= 0 && j < g.cells(), "shape", "mirror map points outside the grid");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int a = 0; a < u.ncomp(); ++a) {
      double x = u.comp(a)[i], y = u.comp(a)[j];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    require(na > 0.0 && nb > 0.0, "degenerate-orientation",
            "zero orientation vector in angle_dev");
    double c = std::fabs(dot) / std::sqrt(na * nb);
    c = std::min(1.0, c);
    sum += std::acos(c) * 180.0 / M_PI;
    ++n;
  }
  require(n > 0, "empty-region", "lesion mask selects no cells");
  return sum / double(n);
}

}  // namespace adpde

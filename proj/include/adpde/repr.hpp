/// @file repr.hpp
/// @brief Constraint-free parameterizations of the physics fields.
///
/// Velocity is represented as the curl of a potential, so it is
/// divergence-free by construction; the diffusion tensor is represented as
/// U Lambda U^T with U a Cayley image of a skew-symmetric matrix and Lambda
/// rectified nonnegative, so it is symmetric PSD by construction. Both maps
/// are available as plain field operations and as tape graphs; the plain
/// operations run the same graph in non-recording mode, so values agree
/// bitwise with the differentiated path.

#pragma once

#include <algorithm>
#include <filesystem>

#include "adpde/field_io.hpp"
#include "adpde/fields.hpp"
#include "adpde/tape.hpp"

namespace adpde {

// ---------------------------------------------------------------------------
// Parameter containers
// ---------------------------------------------------------------------------

/// Potential for the divergence-free velocity: one scalar component in 2D,
/// three in 3D. The boundary condition Psi.n = 0 on the domain boundary is
/// enforced at construction: in 3D the normal component is zeroed on each
/// face (Psi_x on x-faces, Psi_y on y-faces, Psi_z on z-faces). In 2D the
/// scalar potential is the out-of-plane component, so Psi.n vanishes
/// identically and no zeroing is applied.
class PotentialField {
 public:
  PotentialField(Grid grid, std::vector<ScalarField> components)
      : grid_(std::move(grid)) {
    int alpha = grid_.ndim() == 2 ? 1 : 3;
    require(int(components.size()) == alpha, "shape",
            "potential needs 1 (2D) or 3 (3D) components");
    for (auto& c : components) {
      require(c.grid() == grid_, "grid-mismatch",
              "potential components must share the grid");
    }
    for (int a = 0; a < alpha; ++a) {
      std::vector<double> data = components[std::size_t(a)].data();
      apply_normal_mask(grid_, a, data);
      comps_.emplace_back(grid_, std::move(data));
    }
  }

  static PotentialField zeros(const Grid& g) {
    std::vector<ScalarField> c;
    for (int a = 0; a < (g.ndim() == 2 ? 1 : 3); ++a)
      c.push_back(ScalarField::zeros(g));
    return PotentialField(g, std::move(c));
  }

  const Grid& grid() const { return grid_; }
  int ncomp() const { return int(comps_.size()); }
  const ScalarField& comp(int a) const { return comps_[std::size_t(a)]; }

  /// Zero the normal component on its faces (3D); identity in 2D.
  static void apply_normal_mask(const Grid& g, int comp, std::vector<double>& data) {
    if (g.ndim() == 2) return;
    for (std::int64_t i = 0; i < g.cells(); ++i) {
      auto c = g.coords(i);
      if (c[std::size_t(comp)] == 0 || c[std::size_t(comp)] == g.dim(comp) - 1)
        data[std::size_t(i)] = 0.0;
    }
  }

 private:
  Grid grid_;
  std::vector<ScalarField> comps_;
};

/// Free parameters of the PSD tensor representation: the strictly upper
/// triangular entries of B (one field in 2D: s; three in 3D: s1, s2, s3) and
/// the pre-rectification eigenvalue fields lam_raw (ndim of them). Effective
/// eigenvalues are max(lam_raw, 0).
class TensorParams {
 public:
  TensorParams(Grid grid, std::vector<ScalarField> b, std::vector<ScalarField> lam_raw)
      : grid_(std::move(grid)), b_(std::move(b)), lam_raw_(std::move(lam_raw)) {
    int n = grid_.ndim();
    require(int(b_.size()) == n * (n - 1) / 2, "shape",
            "B needs ndim*(ndim-1)/2 free entries");
    require(int(lam_raw_.size()) == n, "shape", "lam_raw needs ndim fields");
    for (const auto& f : b_)
      require(f.grid() == grid_, "grid-mismatch", "B fields must share the grid");
    for (const auto& f : lam_raw_)
      require(f.grid() == grid_, "grid-mismatch", "lam fields must share the grid");
  }

  static TensorParams zeros(const Grid& g) {
    int n = g.ndim();
    std::vector<ScalarField> b, lam;
    for (int a = 0; a < n * (n - 1) / 2; ++a) b.push_back(ScalarField::zeros(g));
    for (int a = 0; a < n; ++a) lam.push_back(ScalarField::zeros(g));
    return TensorParams(g, std::move(b), std::move(lam));
  }

  const Grid& grid() const { return grid_; }
  int nb() const { return int(b_.size()); }
  const ScalarField& b(int i) const { return b_[std::size_t(i)]; }
  const ScalarField& lam_raw(int i) const { return lam_raw_[std::size_t(i)]; }

 private:
  Grid grid_;
  std::vector<ScalarField> b_;
  std::vector<ScalarField> lam_raw_;
};

/// The full learnable state: potential plus tensor parameters on one grid.
struct PhysicsParams {
  PotentialField psi;
  TensorParams tensor;

  PhysicsParams(PotentialField p, TensorParams t)
      : psi(std::move(p)), tensor(std::move(t)) {
    require(psi.grid() == tensor.grid(), "grid-mismatch",
            "potential and tensor parameters must share one grid");
  }
  static PhysicsParams zeros(const Grid& g) {
    return PhysicsParams(PotentialField::zeros(g), TensorParams::zeros(g));
  }
  const Grid& grid() const { return psi.grid(); }
};

/// Per-cell eigen decomposition of a symmetric tensor field: eigenvalues
/// sorted descending, unit eigenvectors with the sign convention that the
/// component of largest absolute value (first such index on ties) is
/// non-negative. Deterministic: same input gives bitwise same output.
struct EigenDecomp {
  std::vector<ScalarField> eigvals;   // ndim fields, descending
  std::vector<VectorField> eigvecs;   // ndim unit vector fields
};

// ---------------------------------------------------------------------------
// Cell-level closed forms
// ---------------------------------------------------------------------------

using Mat2 = std::array<std::array<double, 2>, 2>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Cayley image of [[0,s],[-s,0]]: a rotation for every finite s, the
/// denominator s^2+4 never vanishes.
inline Mat2 cayley2(double s) {
  double den = s * s + 4.0;
  return Mat2{{{{(4.0 - s * s) / den, 4.0 * s / den}},
               {{-4.0 * s / den, (4.0 - s * s) / den}}}};
}

/// Cayley image of the skew matrix A = [[0,s1,s2],[-s1,0,s3],[-s2,-s3,0]],
/// evaluated as (I + A/2)(I - A/2)^{-1} = I + (4A + 2A^2)/(4 + s1^2+s2^2+s3^2).
inline Mat3 cayley3(double s1, double s2, double s3) {
  double den = s1 * s1 + s2 * s2 + s3 * s3 + 4.0;
  Mat3 u;
  u[0][0] = (4.0 + s3 * s3 - s1 * s1 - s2 * s2) / den;
  u[0][1] = (4.0 * s1 - 2.0 * s2 * s3) / den;
  u[0][2] = (4.0 * s2 + 2.0 * s1 * s3) / den;
  u[1][0] = (-4.0 * s1 - 2.0 * s2 * s3) / den;
  u[1][1] = (4.0 + s2 * s2 - s1 * s1 - s3 * s3) / den;
  u[1][2] = (4.0 * s3 - 2.0 * s1 * s2) / den;
  u[2][0] = (-4.0 * s2 + 2.0 * s1 * s3) / den;
  u[2][1] = (-4.0 * s3 - 2.0 * s1 * s2) / den;
  u[2][2] = (4.0 + s1 * s1 - s2 * s2 - s3 * s3) / den;
  return u;
}

namespace detail {

inline void sign_convention(double* v, int n) {
  int arg = 0;
  double best = std::fabs(v[0]);
  for (int i = 1; i < n; ++i)
    if (std::fabs(v[i]) > best) {
      best = std::fabs(v[i]);
      arg = i;
    }
  if (v[arg] < 0.0)
    for (int i = 0; i < n; ++i) v[i] = -v[i];
}

inline void eig2_cell(double a, double b, double c, double lam[2], double vec[2][2]) {
  if (b == 0.0) {
    int hi = a >= c ? 0 : 1;
    lam[0] = hi == 0 ? a : c;
    lam[1] = hi == 0 ? c : a;
    vec[0][0] = hi == 0 ? 1.0 : 0.0;
    vec[0][1] = hi == 0 ? 0.0 : 1.0;
    vec[1][0] = hi == 0 ? 0.0 : 1.0;
    vec[1][1] = hi == 0 ? 1.0 : 0.0;
    return;
  }
  double half = 0.5 * (a + c);
  double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  lam[0] = half + disc;
  lam[1] = half - disc;
  // (b, lam-a) and (lam-c, b) are both eigenvectors; take the better
  // conditioned one
  double x0 = b, y0 = lam[0] - a;
  double x1 = lam[0] - c, y1 = b;
  if (x1 * x1 + y1 * y1 > x0 * x0 + y0 * y0) {
    x0 = x1;
    y0 = y1;
  }
  double nrm = std::sqrt(x0 * x0 + y0 * y0);
  vec[0][0] = x0 / nrm;
  vec[0][1] = y0 / nrm;
  vec[1][0] = -vec[0][1];
  vec[1][1] = vec[0][0];
  sign_convention(vec[0], 2);
  sign_convention(vec[1], 2);
}

inline double det3(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline std::array<double, 3> cross(const std::array<double, 3>& a,
                                   const std::array<double, 3>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}
inline double norm3(const std::array<double, 3>& a) {
  return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

/// Cyclic Jacobi for a symmetric 3x3. Deterministic sweep order; used for
/// near-degenerate spectra and as the fallback when the analytic route loses
/// accuracy.
inline void jacobi3(Mat3 a, double lam[3], double vec[3][3]) {
  Mat3 v{{{{1, 0, 0}}, {{0, 1, 0}}, {{0, 0, 1}}}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if (off < 1e-300) break;
    double scale = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) scale = std::max(scale, std::fabs(a[i][j]));
    if (off <= 1e-32 * scale * scale) break;
    static const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& pq : pairs) {
      int p = pq[0], q = pq[1];
      if (a[p][q] == 0.0) continue;
      double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
      double t = (theta >= 0.0 ? 1.0 : -1.0) /
                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
      double c = 1.0 / std::sqrt(t * t + 1.0);
      double s = t * c;
      Mat3 r = a;
      for (int k = 0; k < 3; ++k) {
        r[p][k] = c * a[p][k] - s * a[q][k];
        r[q][k] = s * a[p][k] + c * a[q][k];
      }
      Mat3 r2 = r;
      for (int k = 0; k < 3; ++k) {
        r2[k][p] = c * r[k][p] - s * r[k][q];
        r2[k][q] = s * r[k][p] + c * r[k][q];
      }
      a = r2;
      for (int k = 0; k < 3; ++k) {
        double vp = v[k][p], vq = v[k][q];
        v[k][p] = c * vp - s * vq;
        v[k][q] = s * vp + c * vq;
      }
    }
  }
  int order[3] = {0, 1, 2};
  double d[3] = {a[0][0], a[1][1], a[2][2]};
  std::stable_sort(order, order + 3, [&](int x, int y) { return d[x] > d[y]; });
  for (int k = 0; k < 3; ++k) {
    lam[k] = d[order[k]];
    for (int r = 0; r < 3; ++r) vec[k][r] = v[r][order[k]];
    sign_convention(vec[k], 3);
  }
}

inline void eig3_cell(const Mat3& m, double lam[3], double vec[3][3]) {
  double scale = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) scale = std::max(scale, std::fabs(m[i][j]));
  if (scale == 0.0) {
    for (int k = 0; k < 3; ++k) {
      lam[k] = 0.0;
      for (int r = 0; r < 3; ++r) vec[k][r] = (r == k) ? 1.0 : 0.0;
    }
    return;
  }
  double p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
  if (p1 <= 1e-30 * scale * scale) {
    double d[3] = {m[0][0], m[1][1], m[2][2]};
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int x, int y) { return d[x] > d[y]; });
    for (int k = 0; k < 3; ++k) {
      lam[k] = d[order[k]];
      for (int r = 0; r < 3; ++r) vec[k][r] = (r == order[k]) ? 1.0 : 0.0;
    }
    return;
  }

  // Analytic trigonometric eigenvalues
  double q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
  double p2 = (m[0][0] - q) * (m[0][0] - q) + (m[1][1] - q) * (m[1][1] - q) +
              (m[2][2] - q) * (m[2][2] - q) + 2.0 * p1;
  double p = std::sqrt(p2 / 6.0);
  Mat3 b;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b[i][j] = (m[i][j] - (i == j ? q : 0.0)) / p;
  double r = det3(b) / 2.0;
  r = std::min(1.0, std::max(-1.0, r));
  // |r| -> 1 means a (near-)repeated root; hand off to Jacobi
  if (1.0 - std::fabs(r) < 1e-12) {
    jacobi3(m, lam, vec);
    return;
  }
  double phi = std::acos(r) / 3.0;
  double l0 = q + 2.0 * p * std::cos(phi);
  double l2 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  double l1 = 3.0 * q - l0 - l2;
  double lams[3] = {l0, l1, l2};

  double gap = std::min(l0 - l1, l1 - l2);
  if (gap < 1e-8 * scale) {
    jacobi3(m, lam, vec);
    return;
  }

  // Eigenvectors from the best-conditioned cross product of rows of (M - l I)
  double v[3][3];
  for (int k = 0; k < 2; ++k) {
    Mat3 a = m;
    for (int i = 0; i < 3; ++i) a[i][i] -= lams[k];
    std::array<double, 3> rows[3] = {
        {a[0][0], a[0][1], a[0][2]},
        {a[1][0], a[1][1], a[1][2]},
        {a[2][0], a[2][1], a[2][2]},
    };
    std::array<double, 3> cand[3] = {cross(rows[0], rows[1]),
                                     cross(rows[0], rows[2]),
                                     cross(rows[1], rows[2])};
    int best = 0;
    double bn = norm3(cand[0]);
    for (int i = 1; i < 3; ++i) {
      double nn = norm3(cand[i]);
      if (nn > bn) {
        bn = nn;
        best = i;
      }
    }
    if (bn < 1e-14 * scale * scale) {
      jacobi3(m, lam, vec);
      return;
    }
    for (int i = 0; i < 3; ++i) v[k][i] = cand[best][i] / bn;
  }
  // Re-orthogonalize the second vector and complete the right-handed frame
  double dot = v[0][0] * v[1][0] + v[0][1] * v[1][1] + v[0][2] * v[1][2];
  for (int i = 0; i < 3; ++i) v[1][i] -= dot * v[0][i];
  double n1 = std::sqrt(v[1][0] * v[1][0] + v[1][1] * v[1][1] + v[1][2] * v[1][2]);
  if (n1 < 1e-12) {
    jacobi3(m, lam, vec);
    return;
  }
  for (int i = 0; i < 3; ++i) v[1][i] /= n1;
  std::array<double, 3> v2 = cross({v[0][0], v[0][1], v[0][2]},
                                   {v[1][0], v[1][1], v[1][2]});
  for (int i = 0; i < 3; ++i) v[2][i] = v2[std::size_t(i)];

  // Accept only if the decomposition reproduces the input tightly
  double resid = 0.0, nrm = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double rec = 0.0;
      for (int k = 0; k < 3; ++k) rec += lams[k] * v[k][i] * v[k][j];
      resid += (rec - m[i][j]) * (rec - m[i][j]);
      nrm += m[i][j] * m[i][j];
    }
  if (resid > 1e-24 * nrm) {
    jacobi3(m, lam, vec);
    return;
  }
  for (int k = 0; k < 3; ++k) {
    lam[k] = lams[k];
    for (int i = 0; i < 3; ++i) vec[k][i] = v[k][i];
    sign_convention(vec[k], 3);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Graph builders (shared by the plain operations and the objectives)
// ---------------------------------------------------------------------------

/// Velocity components as tape expressions of the potential components.
/// 2D: V = (dpsi/dy, -dpsi/dx); 3D: V = curl(Psi). Central differences in the
/// interior, first-order one-sided at faces. The 3D normal-component boundary
/// masks are applied inside the graph so optimizer iterates stay admissible.
inline std::vector<Var> curl_graph(Tape& t, const Grid& g, std::vector<Var> psi) {
  if (g.ndim() == 3) {
    for (int a = 0; a < 3; ++a) {
      Buf mask(std::size_t(g.cells()), 1.0);
      PotentialField::apply_normal_mask(g, a, mask);
      bool trivial = true;
      for (double x : mask) trivial = trivial && x == 1.0;
      if (!trivial)
        psi[std::size_t(a)] =
            t.mul(psi[std::size_t(a)], Tape::constant(std::move(mask)));
    }
  }
  std::vector<Var> v;
  const FaceRule r = FaceRule::OneSided;
  if (g.ndim() == 2) {
    v.push_back(t.diffc(psi[0], 1, r));
    v.push_back(t.neg(t.diffc(psi[0], 0, r)));
  } else {
    v.push_back(t.sub(t.diffc(psi[2], 1, r), t.diffc(psi[1], 2, r)));
    v.push_back(t.sub(t.diffc(psi[0], 2, r), t.diffc(psi[2], 0, r)));
    v.push_back(t.sub(t.diffc(psi[1], 0, r), t.diffc(psi[0], 1, r)));
  }
  return v;
}

/// Tensor entries, rotation columns and rectified eigenvalues as tape
/// expressions of (B, lam_raw).
struct TensorGraph {
  std::vector<Var> entries;                // canonical entry order
  std::vector<std::vector<Var>> columns;   // columns[k][r] = U_rk
  std::vector<Var> lam_rect;               // relu(lam_raw), unsorted
};

inline TensorGraph tensor_graph(Tape& t, const Grid& g, const std::vector<Var>& b,
                                const std::vector<Var>& lam_raw) {
  TensorGraph out;
  for (const Var& l : lam_raw) out.lam_rect.push_back(t.relu(l));
  const int n = g.ndim();
  std::vector<std::vector<Var>> u(static_cast<std::size_t>(n),
                                  std::vector<Var>(static_cast<std::size_t>(n)));
  if (n == 2) {
    const Var& s = b[0];
    Var s2 = t.mul(s, s);
    Var den = t.add_const(s2, 4.0);
    Var c = t.div(t.add_const(t.scale(s2, -1.0), 4.0), den);
    Var q = t.div(t.scale(s, 4.0), den);
    u[0][0] = c;
    u[0][1] = q;
    u[1][0] = t.neg(q);
    u[1][1] = c;
  } else {
    const Var &s1 = b[0], &s2 = b[1], &s3 = b[2];
    Var q1 = t.mul(s1, s1), q2 = t.mul(s2, s2), q3 = t.mul(s3, s3);
    Var den = t.add_const(t.add(t.add(q1, q2), q3), 4.0);
    Var p23 = t.scale(t.mul(s2, s3), 2.0);
    Var p13 = t.scale(t.mul(s1, s3), 2.0);
    Var p12 = t.scale(t.mul(s1, s2), 2.0);
    u[0][0] = t.div(t.add_const(t.sub(q3, t.add(q1, q2)), 4.0), den);
    u[0][1] = t.div(t.sub(t.scale(s1, 4.0), p23), den);
    u[0][2] = t.div(t.add(t.scale(s2, 4.0), p13), den);
    u[1][0] = t.div(t.sub(t.scale(s1, -4.0), p23), den);
    u[1][1] = t.div(t.add_const(t.sub(q2, t.add(q1, q3)), 4.0), den);
    u[1][2] = t.div(t.sub(t.scale(s3, 4.0), p12), den);
    u[2][0] = t.div(t.add(t.scale(s2, -4.0), p13), den);
    u[2][1] = t.div(t.sub(t.scale(s3, -4.0), p12), den);
    u[2][2] = t.div(t.add_const(t.sub(q1, t.add(q2, q3)), 4.0), den);
  }
  out.columns.assign(static_cast<std::size_t>(n),
                     std::vector<Var>(static_cast<std::size_t>(n)));
  for (int k = 0; k < n; ++k)
    for (int r = 0; r < n; ++r)
      out.columns[std::size_t(k)][std::size_t(r)] = u[std::size_t(r)][std::size_t(k)];

  // D_rc = sum_k lam_k U_rk U_ck, stored by the canonical entry order
  auto entry = [&](int r, int c) {
    Var acc = t.mul(out.lam_rect[0], t.mul(u[std::size_t(r)][0], u[std::size_t(c)][0]));
    for (int k = 1; k < n; ++k)
      acc = t.add(acc, t.mul(out.lam_rect[std::size_t(k)],
                             t.mul(u[std::size_t(r)][std::size_t(k)],
                                   u[std::size_t(c)][std::size_t(k)])));
    return acc;
  };
  if (n == 2) {
    out.entries = {entry(0, 0), entry(0, 1), entry(1, 1)};
  } else {
    out.entries = {entry(0, 0), entry(0, 1), entry(1, 1),
                   entry(0, 2), entry(1, 2), entry(2, 2)};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain field operations
// ---------------------------------------------------------------------------

inline VectorField curl(const PotentialField& psi) {
  const Grid& g = psi.grid();
  Tape t(Shape(g), /*recording=*/false);
  std::vector<Var> pv;
  for (int a = 0; a < psi.ncomp(); ++a)
    pv.push_back(Tape::constant(psi.comp(a).data()));
  std::vector<Var> v = curl_graph(t, g, std::move(pv));
  std::vector<ScalarField> comps;
  for (auto& c : v) comps.emplace_back(g, Buf(c.val()));
  return VectorField(g, std::move(comps));
}

/// Central-difference divergence at interior cells; boundary cells are 0.
inline ScalarField discrete_divergence(const VectorField& v) {
  const Grid& g = v.grid();
  Shape sh(g);
  Buf div(std::size_t(g.cells()), 0.0);
  for (int a = 0; a < g.ndim(); ++a) {
    Buf d = kernels::diff_central(v.comp(a).data(), sh, a, FaceRule::OneSided);
    for (std::size_t i = 0; i < div.size(); ++i) div[i] += d[i];
  }
  for (std::int64_t i = 0; i < g.cells(); ++i)
    if (g.on_boundary(i)) div[std::size_t(i)] = 0.0;
  return ScalarField(g, std::move(div));
}

inline TensorField build_tensor(const TensorParams& p) {
  const Grid& g = p.grid();
  Tape t(Shape(g), /*recording=*/false);
  std::vector<Var> b, lam;
  for (int i = 0; i < p.nb(); ++i) b.push_back(Tape::constant(p.b(i).data()));
  for (int i = 0; i < g.ndim(); ++i)
    lam.push_back(Tape::constant(p.lam_raw(i).data()));
  TensorGraph tg = tensor_graph(t, g, b, lam);
  std::vector<ScalarField> entries;
  for (auto& e : tg.entries) entries.emplace_back(g, Buf(e.val()));
  return TensorField(g, std::move(entries));
}

inline EigenDecomp eig_sym(const TensorField& d) {
  const Grid& g = d.grid();
  const int n = g.ndim();
  const std::size_t m = std::size_t(g.cells());
  std::vector<Buf> vals(static_cast<std::size_t>(n), Buf(m));
  std::vector<std::vector<Buf>> vecs(
      static_cast<std::size_t>(n),
      std::vector<Buf>(static_cast<std::size_t>(n), Buf(m)));
  for (std::size_t c = 0; c < m; ++c) {
    if (n == 2) {
      double lam[2], vec[2][2];
      detail::eig2_cell(d.entry(0)[std::int64_t(c)], d.entry(1)[std::int64_t(c)],
                        d.entry(2)[std::int64_t(c)], lam, vec);
      for (int k = 0; k < 2; ++k) {
        vals[std::size_t(k)][c] = lam[k];
        for (int r = 0; r < 2; ++r) vecs[std::size_t(k)][std::size_t(r)][c] = vec[k][r];
      }
    } else {
      double lam[3], vec[3][3];
      detail::eig3_cell(d.matrix_at(std::int64_t(c)), lam, vec);
      for (int k = 0; k < 3; ++k) {
        vals[std::size_t(k)][c] = lam[k];
        for (int r = 0; r < 3; ++r) vecs[std::size_t(k)][std::size_t(r)][c] = vec[k][r];
      }
    }
  }
  EigenDecomp out;
  for (int k = 0; k < n; ++k) {
    out.eigvals.emplace_back(g, std::move(vals[std::size_t(k)]));
    std::vector<ScalarField> comps;
    for (int r = 0; r < n; ++r)
      comps.emplace_back(g, std::move(vecs[std::size_t(k)][std::size_t(r)]));
    out.eigvecs.emplace_back(g, std::move(comps));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PhysicsParams directory format: ADGF files plus params.json manifest
// {"psi": [...], "b": [...], "lam_raw": [...]}
// ---------------------------------------------------------------------------

inline void write_params(const PhysicsParams& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  auto dump = [&](const char* key, int count, auto&& getter) {
    auto& list = manifest[key] = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%s_%d.adgf", key, i);
      write_field(getter(i), dir / name);
      list.push_back(name);
    }
  };
  dump("psi", p.psi.ncomp(), [&](int i) -> const ScalarField& { return p.psi.comp(i); });
  dump("b", p.tensor.nb(), [&](int i) -> const ScalarField& { return p.tensor.b(i); });
  dump("lam_raw", p.grid().ndim(),
       [&](int i) -> const ScalarField& { return p.tensor.lam_raw(i); });
  detail::spew(dir / "params.json", manifest.dump(2) + "\n");
}

inline PhysicsParams read_params(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::slurp(dir / "params.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad-manifest", dir.string() + ": " + e.what());
  }
  auto load = [&](const char* key) {
    std::vector<ScalarField> fields;
    for (const auto& name : manifest.at(key))
      fields.push_back(read_scalar(dir / name.get<std::string>()));
    return fields;
  };
  std::vector<ScalarField> psi = load("psi");
  require(!psi.empty(), "bad-manifest", "params manifest lists no psi fields");
  Grid g = psi.front().grid();
  return PhysicsParams(PotentialField(g, std::move(psi)),
                       TensorParams(g, load("b"), load("lam_raw")));
}

}  // namespace adpde

// Independent oracle implementations for cross-checking the library.
//
// Everything here is written from the governing formulas with plain nested
// loops and no shared code with the implementation under test; the point is a
// second route to the same numbers.

#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// 2D advection-diffusion right-hand side, one-sided faces.
// Storage: row-major with j fastest, C[i * ny + j], x index i, y index j.
// ---------------------------------------------------------------------------
struct Field2 {
  int nx, ny;
  double dx, dy;
  const std::vector<double>* c;
  double at(int i, int j) const { return (*c)[std::size_t(i) * std::size_t(ny) + std::size_t(j)]; }
};

inline double central_x(const Field2& f, int i, int j) {
  if (i == 0) return (f.at(1, j) - f.at(0, j)) / f.dx;
  if (i == f.nx - 1) return (f.at(i, j) - f.at(i - 1, j)) / f.dx;
  return (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * f.dx);
}
inline double central_y(const Field2& f, int i, int j) {
  if (j == 0) return (f.at(i, 1) - f.at(i, 0)) / f.dy;
  if (j == f.ny - 1) return (f.at(i, j) - f.at(i, j - 1)) / f.dy;
  return (f.at(i, j + 1) - f.at(i, j - 1)) / (2.0 * f.dy);
}

inline std::vector<double> adv_diff_rhs_2d(
    int nx, int ny, double dx, double dy, const std::vector<double>& C,
    const std::vector<double>& Vx, const std::vector<double>& Vy,
    const std::vector<double>& Dxx, const std::vector<double>& Dxy,
    const std::vector<double>& Dyy) {
  Field2 c{nx, ny, dx, dy, &C};
  Field2 fdxx{nx, ny, dx, dy, &Dxx};
  Field2 fdxy{nx, ny, dx, dy, &Dxy};
  Field2 fdyy{nx, ny, dx, dy, &Dyy};
  std::vector<double> rhs(C.size());
  auto idx = [&](int i, int j) { return std::size_t(i) * std::size_t(ny) + std::size_t(j); };

  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      double vx = Vx[idx(i, j)], vy = Vy[idx(i, j)];

      double dcdx;
      if (vx >= 0.0)
        dcdx = i > 0 ? (c.at(i, j) - c.at(i - 1, j)) / dx
                     : (c.at(i + 1, j) - c.at(i, j)) / dx;
      else
        dcdx = i < nx - 1 ? (c.at(i + 1, j) - c.at(i, j)) / dx
                          : (c.at(i, j) - c.at(i - 1, j)) / dx;
      double dcdy;
      if (vy >= 0.0)
        dcdy = j > 0 ? (c.at(i, j) - c.at(i, j - 1)) / dy
                     : (c.at(i, j + 1) - c.at(i, j)) / dy;
      else
        dcdy = j < ny - 1 ? (c.at(i, j + 1) - c.at(i, j)) / dy
                          : (c.at(i, j) - c.at(i, j - 1)) / dy;
      double adv = -(vx * dcdx + vy * dcdy);

      double term_a = central_x(fdxx, i, j) * central_x(c, i, j) +
                      central_x(fdxy, i, j) * central_y(c, i, j) +
                      central_y(fdxy, i, j) * central_x(c, i, j) +
                      central_y(fdyy, i, j) * central_y(c, i, j);

      // second differences, mirrored ghosts at the faces
      double d2x;
      if (i == 0)
        d2x = (c.at(1, j) - c.at(0, j)) / (dx * dx);
      else if (i == nx - 1)
        d2x = (c.at(i - 1, j) - c.at(i, j)) / (dx * dx);
      else
        d2x = (c.at(i + 1, j) - 2.0 * c.at(i, j) + c.at(i - 1, j)) / (dx * dx);
      double d2y;
      if (j == 0)
        d2y = (c.at(i, 1) - c.at(i, 0)) / (dy * dy);
      else if (j == ny - 1)
        d2y = (c.at(i, j - 1) - c.at(i, j)) / (dy * dy);
      else
        d2y = (c.at(i, j + 1) - 2.0 * c.at(i, j) + c.at(i, j - 1)) / (dy * dy);

      // cross derivative: average of fwd_x(bwd_y) and bwd_x(fwd_y), with the
      // one-sided differences zero where the neighbor is missing
      auto bwd_y = [&](int ii, int jj) {
        return jj > 0 ? (c.at(ii, jj) - c.at(ii, jj - 1)) / dy : 0.0;
      };
      auto fwd_y = [&](int ii, int jj) {
        return jj < ny - 1 ? (c.at(ii, jj + 1) - c.at(ii, jj)) / dy : 0.0;
      };
      double fb = i < nx - 1 ? (bwd_y(i + 1, j) - bwd_y(i, j)) / dx : 0.0;
      double bf = i > 0 ? (fwd_y(i, j) - fwd_y(i - 1, j)) / dx : 0.0;
      double cross = 0.5 * (fb + bf);

      double term_b = Dxx[idx(i, j)] * d2x + 2.0 * Dxy[idx(i, j)] * cross +
                      Dyy[idx(i, j)] * d2y;
      rhs[idx(i, j)] = adv + term_a + term_b;
    }
  return rhs;
}

// ---------------------------------------------------------------------------
// 3D Cayley transform by direct Gaussian elimination of (I - A/2) X = (I + A/2)
// ---------------------------------------------------------------------------
inline std::array<std::array<double, 3>, 3> cayley3_direct(double s1, double s2,
                                                           double s3) {
  double A[3][3] = {{0, s1, s2}, {-s1, 0, s3}, {-s2, -s3, 0}};
  double M[3][6];  // [I - A/2 | I + A/2]
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      M[i][j] = (i == j ? 1.0 : 0.0) - 0.5 * A[i][j];
      M[i][j + 3] = (i == j ? 1.0 : 0.0) + 0.5 * A[i][j];
    }
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(M[r][col]) > std::fabs(M[piv][col])) piv = r;
    for (int k = 0; k < 6; ++k) std::swap(M[col][k], M[piv][k]);
    double p = M[col][col];
    for (int k = 0; k < 6; ++k) M[col][k] /= p;
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      double f = M[r][col];
      for (int k = 0; k < 6; ++k) M[r][k] -= f * M[col][k];
    }
  }
  // Solved X = (I - A/2)^{-1} (I + A/2); the Cayley image is (I + A/2)(I - A/2)^{-1},
  // which equals X because (I + A/2) and (I - A/2)^{-1} commute (both are
  // polynomials in A).
  std::array<std::array<double, 3>, 3> u{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) u[std::size_t(i)][std::size_t(j)] = M[i][j + 3];
  return u;
}

// ---------------------------------------------------------------------------
// Welch's unpaired t-statistic
// ---------------------------------------------------------------------------
inline double welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  auto stats = [](const std::vector<double>& x, double& mean, double& var) {
    double s = 0.0;
    for (double v : x) s += v;
    mean = s / double(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    var = ss / double(x.size() - 1);
  };
  double m1, v1, m2, v2;
  stats(a, m1, v1);
  stats(b, m2, v2);
  return (m1 - m2) / std::sqrt(v1 / double(a.size()) + v2 / double(b.size()));
}

}  // namespace oracle

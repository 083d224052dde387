/// @file fields.hpp
/// @brief Grid descriptor and immutable field containers.
///
/// All fields share one storage convention: C order with the LAST axis
/// fastest (j fastest in 2D, k fastest in 3D). That convention is used
/// everywhere, including the on-disk ADGF format. Values are f64 and must be
/// finite; containers are immutable after construction and safe to share
/// read-only across threads.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace adpde {

/// Error with a stable machine-readable code plus a human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

inline void require(bool ok, const char* code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

/// Rectangular structured grid: per-axis cell counts and physical spacing.
/// Stencils need at least one interior cell, hence dims >= 3.
class Grid {
 public:
  Grid(int ndim, std::array<int, 3> dims, std::array<double, 3> spacing)
      : ndim_(ndim), dims_(dims), spacing_(spacing) {
    require(ndim == 2 || ndim == 3, "grid", "ndim must be 2 or 3");
    for (int a = 0; a < ndim_; ++a) {
      require(dims_[a] >= 3, "grid", "all dims must be >= 3");
      require(std::isfinite(spacing_[a]) && spacing_[a] > 0.0, "grid",
              "all spacings must be > 0");
    }
    for (int a = ndim_; a < 3; ++a) {
      dims_[a] = 1;
      spacing_[a] = 1.0;
    }
  }

  static Grid make2d(int nx, int ny, double dx = 1.0, double dy = 1.0) {
    return Grid(2, {nx, ny, 1}, {dx, dy, 1.0});
  }
  static Grid make3d(int nx, int ny, int nz, double dx = 1.0, double dy = 1.0,
                     double dz = 1.0) {
    return Grid(3, {nx, ny, nz}, {dx, dy, dz});
  }

  int ndim() const { return ndim_; }
  int dim(int axis) const { return dims_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  const std::array<int, 3>& dims() const { return dims_; }
  const std::array<double, 3>& spacings() const { return spacing_; }

  std::int64_t cells() const {
    std::int64_t n = 1;
    for (int a = 0; a < ndim_; ++a) n *= dims_[a];
    return n;
  }

  /// Stride of an axis in the flat array (last axis fastest).
  std::int64_t stride(int axis) const {
    std::int64_t s = 1;
    for (int a = axis + 1; a < ndim_; ++a) s *= dims_[a];
    return s;
  }

  std::int64_t index(int i, int j) const { return std::int64_t(i) * dims_[1] + j; }
  std::int64_t index(int i, int j, int k) const {
    return (std::int64_t(i) * dims_[1] + j) * dims_[2] + k;
  }

  /// Inverse of the flat index; the pair is a bijection over all cells.
  std::array<int, 3> coords(std::int64_t idx) const {
    std::array<int, 3> c{0, 0, 0};
    if (ndim_ == 2) {
      c[0] = int(idx / dims_[1]);
      c[1] = int(idx % dims_[1]);
    } else {
      c[2] = int(idx % dims_[2]);
      std::int64_t r = idx / dims_[2];
      c[1] = int(r % dims_[1]);
      c[0] = int(r / dims_[1]);
    }
    return c;
  }

  /// True for cells on the outermost ring (any coordinate at a face).
  bool on_boundary(std::int64_t idx) const {
    auto c = coords(idx);
    for (int a = 0; a < ndim_; ++a)
      if (c[a] == 0 || c[a] == dims_[a] - 1) return true;
    return false;
  }

  bool operator==(const Grid& o) const {
    if (ndim_ != o.ndim_) return false;
    for (int a = 0; a < ndim_; ++a)
      if (dims_[a] != o.dims_[a] || spacing_[a] != o.spacing_[a]) return false;
    return true;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }

 private:
  int ndim_;
  std::array<int, 3> dims_;
  std::array<double, 3> spacing_;
};

namespace detail {
inline void check_finite(const std::vector<double>& data, const char* what) {
  for (double v : data)
    require(std::isfinite(v), "non-finite",
            std::string(what) + " contains non-finite values");
}
}  // namespace detail

/// One f64 value per cell, canonical storage order.
class ScalarField {
 public:
  ScalarField(Grid grid, std::vector<double> data)
      : grid_(std::move(grid)), data_(std::move(data)) {
    require(std::int64_t(data_.size()) == grid_.cells(), "shape",
            "data length must equal the cell count");
    detail::check_finite(data_, "ScalarField");
  }
  static ScalarField zeros(const Grid& g) {
    return ScalarField(g, std::vector<double>(std::size_t(g.cells()), 0.0));
  }

  const Grid& grid() const { return grid_; }
  const std::vector<double>& data() const { return data_; }
  double operator[](std::int64_t idx) const { return data_[std::size_t(idx)]; }
  double at(int i, int j) const { return data_[std::size_t(grid_.index(i, j))]; }
  double at(int i, int j, int k) const {
    return data_[std::size_t(grid_.index(i, j, k))];
  }

 private:
  Grid grid_;
  std::vector<double> data_;
};

/// ndim ScalarField components (Vx, Vy[, Vz]) on one grid.
class VectorField {
 public:
  VectorField(Grid grid, std::vector<ScalarField> components)
      : grid_(std::move(grid)), comps_(std::move(components)) {
    require(int(comps_.size()) == grid_.ndim(), "shape",
            "VectorField needs ndim components");
    for (const auto& c : comps_)
      require(c.grid() == grid_, "grid-mismatch",
              "VectorField components must share one grid");
  }
  static VectorField zeros(const Grid& g) {
    std::vector<ScalarField> c;
    for (int a = 0; a < g.ndim(); ++a) c.push_back(ScalarField::zeros(g));
    return VectorField(g, std::move(c));
  }

  const Grid& grid() const { return grid_; }
  int ncomp() const { return int(comps_.size()); }
  const ScalarField& comp(int a) const { return comps_[std::size_t(a)]; }

  double max_abs() const {
    double m = 0.0;
    for (const auto& c : comps_)
      for (double v : c.data()) m = std::max(m, std::fabs(v));
    return m;
  }

 private:
  Grid grid_;
  std::vector<ScalarField> comps_;
};

/// Symmetric tensor per cell stored by its independent entries.
/// Entry order (fixed, also used on disk):
///   2D: Dxx, Dxy, Dyy
///   3D: Dxx, Dxy, Dyy, Dxz, Dyz, Dzz
/// Symmetry is guaranteed by storage; PSD-ness is a property of values
/// produced by the (B, Lambda) representation, not of this container.
class TensorField {
 public:
  TensorField(Grid grid, std::vector<ScalarField> entries)
      : grid_(std::move(grid)), entries_(std::move(entries)) {
    int n = grid_.ndim();
    require(int(entries_.size()) == n * (n + 1) / 2, "shape",
            "TensorField needs ndim*(ndim+1)/2 entries");
    for (const auto& e : entries_)
      require(e.grid() == grid_, "grid-mismatch",
              "TensorField entries must share one grid");
  }
  static TensorField zeros(const Grid& g) {
    int n = g.ndim();
    std::vector<ScalarField> e;
    for (int a = 0; a < n * (n + 1) / 2; ++a) e.push_back(ScalarField::zeros(g));
    return TensorField(g, std::move(e));
  }

  const Grid& grid() const { return grid_; }
  int nentries() const { return int(entries_.size()); }
  const ScalarField& entry(int e) const { return entries_[std::size_t(e)]; }

  /// Entry index of matrix element (r, c), r <= c, in the canonical order.
  int entry_index(int r, int c) const {
    if (r > c) std::swap(r, c);
    if (grid_.ndim() == 2) {
      static const int map2[2][2] = {{0, 1}, {1, 2}};
      return map2[r][c];
    }
    static const int map3[3][3] = {{0, 1, 3}, {1, 2, 4}, {3, 4, 5}};
    return map3[r][c];
  }

  /// Full ndim x ndim matrix at one cell.
  std::array<std::array<double, 3>, 3> matrix_at(std::int64_t idx) const {
    std::array<std::array<double, 3>, 3> m{};
    int n = grid_.ndim();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        m[std::size_t(r)][std::size_t(c)] = entries_[std::size_t(entry_index(r, c))][idx];
    return m;
  }

  /// Diagonal entry Daa for axis a (used by the diffusion stability bound).
  const ScalarField& diag(int axis) const {
    return entries_[std::size_t(entry_index(axis, axis))];
  }

 private:
  Grid grid_;
  std::vector<ScalarField> entries_;
};

/// Time-stamped sequence of concentration frames with a uniform interval.
class ConcentrationSeries {
 public:
  ConcentrationSeries(std::vector<ScalarField> frames, double dt, double t0 = 0.0)
      : frames_(std::move(frames)), dt_(dt), t0_(t0) {
    require(frames_.size() >= 2, "series", "a series needs at least 2 frames");
    require(std::isfinite(dt_) && dt_ > 0.0, "series", "dt must be > 0");
    for (const auto& f : frames_)
      require(f.grid() == frames_.front().grid(), "grid-mismatch",
              "all frames must share one grid");
  }

  const Grid& grid() const { return frames_.front().grid(); }
  int nframes() const { return int(frames_.size()); }
  const ScalarField& frame(int i) const { return frames_[std::size_t(i)]; }
  double dt() const { return dt_; }
  double t0() const { return t0_; }
  double time(int i) const { return t0_ + dt_ * i; }

 private:
  std::vector<ScalarField> frames_;
  double dt_;
  double t0_;
};

}  // namespace adpde

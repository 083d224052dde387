/// @file solver.hpp
/// @brief Discrete advection-diffusion right-hand side and time integration.
///
/// Advection uses a first-order upwind scheme, the side picked per cell from
/// the sign of the velocity component (>= 0 selects the backward difference).
/// Diffusion uses the expanded form of div(D grad C): term (a) couples
/// central differences of the tensor entries with central differences of C;
/// term (b) applies nested forward-backward second differences, with the
/// mixed derivatives symmetrized so that the discrete cross operators
/// commute. Time integration is fixed-step Dormand-Prince 4(5); the embedded
/// error is recorded as a diagnostic per frame and never drives step control,
/// which keeps the reverse-mode tape length deterministic.

#pragma once

#include <limits>

#include "adpde/repr.hpp"
#include "adpde/tape.hpp"

namespace adpde {

enum class CrossScheme : std::uint8_t {
  Symmetrized,      // average of fwd_a(bwd_b) and bwd_a(fwd_b)
  ForwardBackward,  // one-sided nesting fwd_a(bwd_b)
};

struct RhsOptions {
  FaceRule face = FaceRule::OneSided;
  CrossScheme cross = CrossScheme::Symmetrized;
};

// ---------------------------------------------------------------------------
// Right-hand side graphs
// ---------------------------------------------------------------------------

/// -sum_ax V_ax * upwind_ax(C). The upwind mask is recorded from the current
/// velocity values; it is a locally constant selection in the backward sweep.
inline Var advection_rhs_graph(Tape& t, const Var& c, const std::vector<Var>& v,
                               const RhsOptions& opt = {}) {
  Var acc;
  for (int ax = 0; ax < int(v.size()); ++ax) {
    Var dc = t.diffu(c, ax, upwind_mask(v[std::size_t(ax)].val()), opt.face);
    Var term = t.mul(v[std::size_t(ax)], dc);
    acc = ax == 0 ? term : t.add(acc, term);
  }
  return t.neg(acc);
}

/// Mixed second derivative d2/(da db), symmetrized by default.
inline Var cross_diff_graph(Tape& t, const Var& c, int a, int b, CrossScheme scheme) {
  Var fb = t.difff(t.diffb(c, b), a);
  if (scheme == CrossScheme::ForwardBackward) return fb;
  Var bf = t.diffb(t.difff(c, b), a);
  return t.scale(t.add(fb, bf), 0.5);
}

inline Var diffusion_rhs_graph(Tape& t, const Var& c, const std::vector<Var>& d,
                               const Grid& g, const RhsOptions& opt = {}) {
  const int n = g.ndim();
  const FaceRule r = opt.face;
  // entry indices in the canonical order
  auto E = [&](int row, int col) {
    if (row > col) std::swap(row, col);
    if (n == 2) {
      static const int map2[2][2] = {{0, 1}, {1, 2}};
      return map2[row][col];
    }
    static const int map3[3][3] = {{0, 1, 3}, {1, 2, 4}, {3, 4, 5}};
    return map3[row][col];
  };

  std::vector<Var> gradc;
  for (int ax = 0; ax < n; ++ax) gradc.push_back(t.diffc(c, ax, r));

  // term (a): (sum_col d D_{ax,col} / d x_col) * dC/dx_ax
  Var term_a;
  for (int ax = 0; ax < n; ++ax) {
    Var coeff;
    for (int col = 0; col < n; ++col) {
      Var dd = t.diffc(d[std::size_t(E(ax, col))], col, r);
      coeff = col == 0 ? dd : t.add(coeff, dd);
    }
    Var term = t.mul(coeff, gradc[std::size_t(ax)]);
    term_a = ax == 0 ? term : t.add(term_a, term);
  }

  // term (b): D_aa d2C/dx_a^2 + 2 D_ab d2C/(dx_a dx_b)
  Var term_b;
  for (int ax = 0; ax < n; ++ax) {
    Var term = t.mul(d[std::size_t(E(ax, ax))], t.diff2(c, ax));
    term_b = ax == 0 ? term : t.add(term_b, term);
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      Var cr = cross_diff_graph(t, c, a, b, opt.cross);
      term_b = t.add(term_b, t.scale(t.mul(d[std::size_t(E(a, b))], cr), 2.0));
    }

  return t.add(term_a, term_b);
}

inline Var adv_diff_rhs_graph(Tape& t, const Var& c, const std::vector<Var>& v,
                              const std::vector<Var>& d, const Grid& g,
                              const RhsOptions& opt = {}) {
  return t.add(advection_rhs_graph(t, c, v, opt),
               diffusion_rhs_graph(t, c, d, g, opt));
}

// ---------------------------------------------------------------------------
// Plain field operations
// ---------------------------------------------------------------------------

namespace detail {
inline std::vector<Var> as_consts_v(const VectorField& v) {
  std::vector<Var> out;
  for (int a = 0; a < v.ncomp(); ++a) out.push_back(Tape::constant(v.comp(a).data()));
  return out;
}
inline std::vector<Var> as_consts_d(const TensorField& d) {
  std::vector<Var> out;
  for (int e = 0; e < d.nentries(); ++e)
    out.push_back(Tape::constant(d.entry(e).data()));
  return out;
}
}  // namespace detail

inline ScalarField advection_rhs(const ScalarField& c, const VectorField& v) {
  require(c.grid() == v.grid(), "grid-mismatch", "advection_rhs grids differ");
  Tape t(Shape(c.grid()), false);
  Var r = advection_rhs_graph(t, Tape::constant(c.data()), detail::as_consts_v(v));
  return ScalarField(c.grid(), Buf(r.val()));
}

inline ScalarField diffusion_rhs(const ScalarField& c, const TensorField& d) {
  require(c.grid() == d.grid(), "grid-mismatch", "diffusion_rhs grids differ");
  Tape t(Shape(c.grid()), false);
  Var r = diffusion_rhs_graph(t, Tape::constant(c.data()), detail::as_consts_d(d),
                              c.grid());
  return ScalarField(c.grid(), Buf(r.val()));
}

inline ScalarField adv_diff_rhs(const ScalarField& c, const VectorField& v,
                                const TensorField& d) {
  require(c.grid() == v.grid() && c.grid() == d.grid(), "grid-mismatch",
          "adv_diff_rhs grids differ");
  Tape t(Shape(c.grid()), false);
  Var r = adv_diff_rhs_graph(t, Tape::constant(c.data()), detail::as_consts_v(v),
                             detail::as_consts_d(d), c.grid());
  return ScalarField(c.grid(), Buf(r.val()));
}

// ---------------------------------------------------------------------------
// Stability
// ---------------------------------------------------------------------------

/// CFL number c (advection), mesh Fourier number F (diffusion), both taken as
/// the max over cells. ok iff c <= 1 and F <= 1/2 exactly; max_stable_dt
/// carries an extra 0.8 safety factor.
struct StabilityReport {
  double cfl_number = 0.0;
  double fourier_number = 0.0;
  double max_stable_dt = std::numeric_limits<double>::infinity();
  bool ok = true;
};

inline StabilityReport stability(const VectorField& v, const TensorField& d,
                                 const Grid& g, double dt) {
  require(v.grid() == g && d.grid() == g, "grid-mismatch", "stability grids differ");
  double adv_rate = 0.0;  // max over cells of sum_ax |V_ax| / dx_ax
  double dif_rate = 0.0;  // max over cells of sum_ax D_axax / dx_ax^2
  const std::int64_t m = g.cells();
  for (std::int64_t i = 0; i < m; ++i) {
    double ra = 0.0, rd = 0.0;
    for (int ax = 0; ax < g.ndim(); ++ax) {
      ra += std::fabs(v.comp(ax)[i]) / g.spacing(ax);
      rd += d.diag(ax)[i] / (g.spacing(ax) * g.spacing(ax));
    }
    adv_rate = std::max(adv_rate, ra);
    dif_rate = std::max(dif_rate, rd);
  }
  StabilityReport rep;
  rep.cfl_number = adv_rate * dt;
  rep.fourier_number = dif_rate * dt;
  rep.ok = rep.cfl_number <= 1.0 && rep.fourier_number <= 0.5;
  double lim = std::numeric_limits<double>::infinity();
  if (adv_rate > 0.0) lim = std::min(lim, 1.0 / adv_rate);
  if (dif_rate > 0.0) lim = std::min(lim, 0.5 / dif_rate);
  rep.max_stable_dt = 0.8 * lim;
  return rep;
}

/// Largest dt_sub = frame_dt / n with dt_sub <= max_stable_dt.
inline int auto_substeps(const StabilityReport& rep, double frame_dt) {
  if (!std::isfinite(rep.max_stable_dt)) return 1;
  double n = std::ceil(frame_dt / rep.max_stable_dt - 1e-12);
  if (n < 1.0) n = 1.0;
  require(n <= 1e6, "unstable", "stability would require over 1e6 substeps");
  return int(n);
}

// ---------------------------------------------------------------------------
// Boundary conditions
// ---------------------------------------------------------------------------

struct BoundarySpec {
  enum class Kind { ZeroNeumann, CauchyVirtual };
  Kind kind = Kind::ZeroNeumann;
  /// Dirichlet source for CauchyVirtual; one frame per evaluated output time.
  const ConcentrationSeries* observed = nullptr;

  static BoundarySpec zero_neumann() { return BoundarySpec{}; }
  static BoundarySpec cauchy_virtual(const ConcentrationSeries& obs) {
    return BoundarySpec{Kind::CauchyVirtual, &obs};
  }
};

/// 1 on the outermost ring, 0 inside.
inline MaskPtr boundary_ring_mask(const Grid& g) {
  std::vector<std::int8_t> m(std::size_t(g.cells()));
  for (std::int64_t i = 0; i < g.cells(); ++i)
    m[std::size_t(i)] = g.on_boundary(i) ? 1 : 0;
  return std::make_shared<const std::vector<std::int8_t>>(std::move(m));
}

/// CauchyVirtual overwrites the boundary ring with observed values; the
/// zero-Neumann half of the condition is the mirrored-ghost stencil rule and
/// needs no field mutation. Interior cells are never touched.
inline ScalarField apply_bc(const ScalarField& c_pred, const BoundarySpec& spec,
                            const ScalarField* observed_frame = nullptr) {
  if (spec.kind == BoundarySpec::Kind::ZeroNeumann) return c_pred;
  require(observed_frame != nullptr, "missing-frame",
          "CauchyVirtual boundary needs an observed frame");
  require(observed_frame->grid() == c_pred.grid(), "grid-mismatch",
          "observed frame grid differs");
  const Grid& g = c_pred.grid();
  Buf out = c_pred.data();
  for (std::int64_t i = 0; i < g.cells(); ++i)
    if (g.on_boundary(i)) out[std::size_t(i)] = (*observed_frame)[i];
  return ScalarField(g, std::move(out));
}

// ---------------------------------------------------------------------------
// Fixed-step Dormand-Prince 4(5)
// ---------------------------------------------------------------------------

namespace dopri {
// Butcher tableau, classic DP5(4) coefficients.
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                        a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                        a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                        a65 = -5103.0 / 18656.0;
inline constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                        b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
// embedded 4th-order weights
inline constexpr double e1 = 5179.0 / 57600.0, e3 = 7571.0 / 16695.0,
                        e4 = 393.0 / 640.0, e5 = -92097.0 / 339200.0,
                        e6 = 187.0 / 2100.0, e7 = 1.0 / 40.0;
}  // namespace dopri

struct TimeSpan {
  double t0 = 0.0;
  double frame_dt = 0.0;
  int n_frames = 0;
};

struct IntegrateOptions {
  // Integration evaluates stencils with mirrored ghosts at the domain faces
  // (the zero-normal-derivative half of the boundary treatment).
  RhsOptions rhs{FaceRule::Mirror, CrossScheme::Symmetrized};
  bool want_diagnostics = false;
};

/// Core stepping loop shared by simulation (non-recording tape) and the
/// latent objective (recording tape). Returns the n_frames frame states;
/// frames[0] is the initial state. The Dirichlet overwrite for CauchyVirtual
/// runs after every substep with boundary values interpolated linearly in
/// time between the bracketing observed frames; at collocation times this is
/// exactly the observed frame.
inline std::vector<Var> integrate_graph(Tape& t, const Var& c0,
                                        const std::vector<Var>& v,
                                        const std::vector<Var>& d, const Grid& g,
                                        const BoundarySpec& spec, int n_frames,
                                        int n_sub, double dt_sub,
                                        const IntegrateOptions& opt = {},
                                        std::vector<double>* frame_err = nullptr) {
  require(n_frames >= 1, "series", "need at least one frame");
  if (spec.kind == BoundarySpec::Kind::CauchyVirtual) {
    require(spec.observed != nullptr, "missing-frame",
            "CauchyVirtual boundary needs observed frames");
    require(spec.observed->nframes() >= n_frames, "missing-frame",
            "CauchyVirtual needs an observed frame per evaluated output time");
  }
  MaskPtr ring = boundary_ring_mask(g);
  std::vector<Var> frames;
  frames.push_back(c0);
  if (frame_err) frame_err->assign(std::size_t(n_frames), 0.0);

  Var y = c0;
  for (int f = 1; f < n_frames; ++f) {
    double emax = 0.0;
    for (int s = 0; s < n_sub; ++s) {
      using namespace dopri;
      const double h = dt_sub;
      Var k1 = adv_diff_rhs_graph(t, y, v, d, g, opt.rhs);
      Var y2 = t.add(y, t.scale(k1, h * a21));
      Var k2 = adv_diff_rhs_graph(t, y2, v, d, g, opt.rhs);
      Var y3 = t.add(y, t.add(t.scale(k1, h * a31), t.scale(k2, h * a32)));
      Var k3 = adv_diff_rhs_graph(t, y3, v, d, g, opt.rhs);
      Var y4 = t.add(
          y, t.add(t.add(t.scale(k1, h * a41), t.scale(k2, h * a42)),
                   t.scale(k3, h * a43)));
      Var k4 = adv_diff_rhs_graph(t, y4, v, d, g, opt.rhs);
      Var y5 = t.add(
          y, t.add(t.add(t.scale(k1, h * a51), t.scale(k2, h * a52)),
                   t.add(t.scale(k3, h * a53), t.scale(k4, h * a54))));
      Var k5 = adv_diff_rhs_graph(t, y5, v, d, g, opt.rhs);
      Var y6 = t.add(
          y, t.add(t.add(t.scale(k1, h * a61), t.scale(k2, h * a62)),
                   t.add(t.add(t.scale(k3, h * a63), t.scale(k4, h * a64)),
                         t.scale(k5, h * a65))));
      Var k6 = adv_diff_rhs_graph(t, y6, v, d, g, opt.rhs);
      Var ynext = t.add(
          y, t.add(t.add(t.scale(k1, h * b1), t.scale(k3, h * b3)),
                   t.add(t.add(t.scale(k4, h * b4), t.scale(k5, h * b5)),
                         t.scale(k6, h * b6))));

      if (opt.want_diagnostics && frame_err) {
        // Embedded 4th/5th-order discrepancy; values only, never on the tape.
        Tape scratch(t.shape(), false);
        Var k7 = adv_diff_rhs_graph(scratch, Tape::constant(ynext.v),
                                    v, d, g, opt.rhs);
        const Buf &K1 = k1.val(), &K3 = k3.val(), &K4 = k4.val(), &K5 = k5.val(),
                  &K6 = k6.val(), &K7 = k7.val();
        for (std::size_t i = 0; i < K1.size(); ++i) {
          double err = h * ((b1 - e1) * K1[i] + (b3 - e3) * K3[i] +
                            (b4 - e4) * K4[i] + (b5 - e5) * K5[i] +
                            (b6 - e6) * K6[i] - e7 * K7[i]);
          emax = std::max(emax, std::fabs(err));
        }
      }

      if (spec.kind == BoundarySpec::Kind::CauchyVirtual) {
        double tau = double(s + 1) / double(n_sub);
        const Buf& lo = spec.observed->frame(f - 1).data();
        const Buf& hi = spec.observed->frame(f).data();
        Buf vals(lo.size());
        for (std::size_t i = 0; i < vals.size(); ++i)
          vals[i] = (1.0 - tau) * lo[i] + tau * hi[i];
        ynext = t.overwrite(ynext, make_buf(std::move(vals)), ring);
      }
      for (double x : ynext.val())
        require(std::isfinite(x), "non-finite",
                "non-finite state detected mid-run");
      y = ynext;
    }
    if (frame_err) (*frame_err)[std::size_t(f)] = emax;
    frames.push_back(y);
  }
  return frames;
}

struct IntegrateResult {
  ConcentrationSeries series;
  /// Max-norm embedded error per frame interval (diagnostic only).
  std::vector<double> embedded_error;
};

/// Fixed-step integration of dC/dt = adv_diff_rhs. Refuses to run when the
/// stability report is not ok, and requires dt_sub to divide the frame
/// interval evenly.
inline IntegrateResult integrate(const ScalarField& c0, const VectorField& v,
                                 const TensorField& d, const BoundarySpec& spec,
                                 const TimeSpan& span, double dt_sub,
                                 bool want_diagnostics = true) {
  const Grid& g = c0.grid();
  require(span.n_frames >= 2, "series", "t_span must cover at least 2 frames");
  require(dt_sub > 0.0, "unstable", "dt_sub must be positive");
  StabilityReport rep = stability(v, d, g, dt_sub);
  require(rep.ok, "unstable",
          "stability violation: CFL=" + std::to_string(rep.cfl_number) +
              " Fourier=" + std::to_string(rep.fourier_number));
  double n_real = span.frame_dt / dt_sub;
  int n_sub = int(std::llround(n_real));
  require(n_sub >= 1 && std::fabs(n_real - double(n_sub)) <= 1e-9 * n_real,
          "dt-mismatch", "dt_sub must divide the frame interval evenly");

  Tape t(Shape(g), false);
  IntegrateOptions opt;
  opt.want_diagnostics = want_diagnostics;
  std::vector<double> frame_err;
  std::vector<Var> frames = integrate_graph(
      t, Tape::constant(c0.data()), detail::as_consts_v(v), detail::as_consts_d(d),
      g, spec, span.n_frames, n_sub, dt_sub, opt, &frame_err);
  std::vector<ScalarField> out;
  for (auto& fr : frames) out.emplace_back(g, Buf(fr.val()));
  return IntegrateResult{
      ConcentrationSeries(std::move(out), span.frame_dt, span.t0),
      std::move(frame_err)};
}

/// Forward prediction for the latent objective: integrate observed frame 0
/// through n_out-1 frame intervals under CauchyVirtual boundaries fed by the
/// observed series. The outermost ring of the predicted frames is excluded
/// from losses and evaluation (see boundary_ring_mask).
struct PredictResult {
  ConcentrationSeries series;
  int excluded_ring = 1;
};

inline PredictResult predict_window(const PhysicsParams& params,
                                    const ConcentrationSeries& observed, int n_out,
                                    int n_sub = 0) {
  require(n_out >= 2, "series", "n_out must be at least 2");
  require(n_out <= observed.nframes(), "series",
          "n_out exceeds the available observed frames");
  const Grid& g = observed.grid();
  require(params.grid() == g, "grid-mismatch", "params grid differs from series");
  VectorField v = curl(params.psi);
  TensorField d = build_tensor(params.tensor);
  if (n_sub <= 0)
    n_sub = auto_substeps(stability(v, d, g, observed.dt()), observed.dt());
  double dt_sub = observed.dt() / n_sub;
  StabilityReport rep = stability(v, d, g, dt_sub);
  require(rep.ok, "unstable", "constructed fields violate stability");

  Tape t(Shape(g), false);
  BoundarySpec spec = BoundarySpec::cauchy_virtual(observed);
  std::vector<Var> frames = integrate_graph(
      t, Tape::constant(observed.frame(0).data()), detail::as_consts_v(v),
      detail::as_consts_d(d), g, spec, n_out, n_sub, dt_sub);
  std::vector<ScalarField> out;
  for (auto& fr : frames) out.emplace_back(g, Buf(fr.val()));
  return PredictResult{
      ConcentrationSeries(std::move(out), observed.dt(), observed.t0()), 1};
}

}  // namespace adpde

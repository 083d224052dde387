/// @file estimator.hpp
/// @brief Adam optimization driver, patch sampling/splicing, and the
/// end-to-end estimation pipelines.
///
/// Every iterate lives in the constraint-free parameterization, so the
/// realized velocity is divergence-free and the realized diffusion tensor is
/// PSD at every single iteration, by construction; estimate() spot-checks
/// both on the fly. Reproducibility contract: (seed, inputs, config) fully
/// determine the output bitwise; the iteration loop is sequential and
/// independent patches may run concurrently without shared mutable state.

#pragma once

#include <thread>

#include "adpde/objective.hpp"

namespace adpde {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct OptimConfig {
  double lr = 1e-3;
  double decay_factor = 0.1;  // lr multiplier applied every decay_every iters
  int decay_every = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_iters = 1000;
  std::uint64_t seed = 0;
  double tol = 1e-9;   // stop when best-so-far improves less than this
  int tol_window = 50; // over this many iterations
  bool noise_init = false;
  double noise_scale = 1e-2;

  void validate() const {
    require(lr > 0.0, "config", "lr must be > 0");
    require(decay_factor > 0.0 && decay_factor <= 1.0, "config",
            "decay_factor must be in (0, 1]");
    require(decay_every > 0 && max_iters >= 0 && tol_window > 0, "config",
            "bad optimizer configuration");
  }
};

/// Flat view of the parameter groups in the fixed order psi..., b..., lam...
struct ParamVec {
  std::vector<Buf> groups;

  static ParamVec from(const PhysicsParams& p) {
    ParamVec v;
    for (int a = 0; a < p.psi.ncomp(); ++a) v.groups.push_back(p.psi.comp(a).data());
    for (int i = 0; i < p.tensor.nb(); ++i) v.groups.push_back(p.tensor.b(i).data());
    for (int i = 0; i < p.grid().ndim(); ++i)
      v.groups.push_back(p.tensor.lam_raw(i).data());
    return v;
  }
  static ParamVec from(const GradientBundle& g) {
    ParamVec v;
    for (const Buf& b : g.d_psi) v.groups.push_back(b);
    for (const Buf& b : g.d_b) v.groups.push_back(b);
    for (const Buf& b : g.d_lam_raw) v.groups.push_back(b);
    return v;
  }
  PhysicsParams to_params(const Grid& g) const {
    int alpha = g.ndim() == 2 ? 1 : 3;
    int nb = g.ndim() * (g.ndim() - 1) / 2;
    std::size_t at = 0;
    std::vector<ScalarField> psi, b, lam;
    for (int i = 0; i < alpha; ++i) psi.emplace_back(g, Buf(groups[at++]));
    for (int i = 0; i < nb; ++i) b.emplace_back(g, Buf(groups[at++]));
    for (int i = 0; i < g.ndim(); ++i) lam.emplace_back(g, Buf(groups[at++]));
    return PhysicsParams(PotentialField(g, std::move(psi)),
                         TensorParams(g, std::move(b), std::move(lam)));
  }
};

struct AdamState {
  std::vector<Buf> m, v;

  static AdamState zeros_like(const ParamVec& p) {
    AdamState s;
    for (const Buf& g : p.groups) {
      s.m.emplace_back(g.size(), 0.0);
      s.v.emplace_back(g.size(), 0.0);
    }
    return s;
  }
};

inline double effective_lr(const OptimConfig& cfg, int iter) {
  int steps = iter / cfg.decay_every;
  return cfg.lr * std::pow(cfg.decay_factor, steps);
}

/// One bias-corrected Adam update. iter is 1-based.
inline void adam_step(AdamState& state, ParamVec& params, const ParamVec& grads,
                      int iter, const OptimConfig& cfg) {
  const double lr = effective_lr(cfg, iter);
  const double bc1 = 1.0 - std::pow(cfg.beta1, iter);
  const double bc2 = 1.0 - std::pow(cfg.beta2, iter);
  for (std::size_t g = 0; g < params.groups.size(); ++g) {
    Buf& p = params.groups[g];
    const Buf& gr = grads.groups[g];
    Buf& m = state.m[g];
    Buf& v = state.v[g];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Patches
// ---------------------------------------------------------------------------

struct PatchSpec {
  std::array<int, 3> origin{0, 0, 0};
  int size = 32;  // per axis
  int n_in = 10;
  int n_out = 10;
  int t_start = 0;  // first frame index of the window
};

inline Grid patch_grid(const Grid& full, int size) {
  std::array<int, 3> dims{size, size, size};
  return Grid(full.ndim(), dims, full.spacings());
}

inline ScalarField extract_cells(const ScalarField& f, const Grid& pg,
                                 const std::array<int, 3>& origin) {
  const Grid& g = f.grid();
  Buf out(std::size_t(pg.cells()));
  for (std::int64_t i = 0; i < pg.cells(); ++i) {
    auto c = pg.coords(i);
    std::int64_t src =
        g.ndim() == 2
            ? g.index(c[0] + origin[0], c[1] + origin[1])
            : g.index(c[0] + origin[0], c[1] + origin[1], c[2] + origin[2]);
    out[std::size_t(i)] = f[src];
  }
  return ScalarField(pg, std::move(out));
}

/// Seeded, reproducible patch draws: a contiguous size^d sub-grid at one
/// spatial location across n_in consecutive frames starting at a random
/// t_start in {0, ..., N_T - n_in}.
inline std::vector<std::pair<ConcentrationSeries, PatchSpec>> extract_patches(
    const ConcentrationSeries& s, Rng& rng, int count, int size, int n_in,
    int n_out) {
  const Grid& g = s.grid();
  require(n_in >= 2 && n_in <= s.nframes(), "patch",
          "n_in must be in [2, available frames]");
  require(n_out >= 2 && n_out <= n_in, "patch", "need 2 <= n_out <= n_in");
  for (int a = 0; a < g.ndim(); ++a)
    require(g.dim(a) >= size, "patch", "domain smaller than the patch size");
  Grid pg = patch_grid(g, size);

  std::vector<std::pair<ConcentrationSeries, PatchSpec>> out;
  for (int k = 0; k < count; ++k) {
    PatchSpec spec;
    spec.size = size;
    spec.n_in = n_in;
    spec.n_out = n_out;
    for (int a = 0; a < g.ndim(); ++a)
      spec.origin[std::size_t(a)] = int(rng.below(std::uint64_t(g.dim(a) - size + 1)));
    spec.t_start = int(rng.below(std::uint64_t(s.nframes() - n_in + 1)));
    std::vector<ScalarField> frames;
    for (int f = 0; f < n_in; ++f)
      frames.push_back(extract_cells(s.frame(spec.t_start + f), pg, spec.origin));
    out.emplace_back(ConcentrationSeries(std::move(frames), s.dt(),
                                         s.time(spec.t_start)),
                     spec);
  }
  return out;
}

/// Exact reassembly of non-overlapping tiles. Every cell of the full grid
/// must receive exactly one patch value; gaps and overlaps are errors
/// (overlap averaging is deliberately not implemented).
inline ScalarField splice_patches(
    const std::vector<std::pair<ScalarField, std::array<int, 3>>>& tiles,
    const Grid& full) {
  Buf out(std::size_t(full.cells()), 0.0);
  std::vector<std::uint8_t> hits(std::size_t(full.cells()), 0);
  for (const auto& [field, origin] : tiles) {
    const Grid& pg = field.grid();
    require(pg.ndim() == full.ndim(), "grid-mismatch", "tile dimensionality differs");
    for (std::int64_t i = 0; i < pg.cells(); ++i) {
      auto c = pg.coords(i);
      for (int a = 0; a < full.ndim(); ++a) {
        require(c[std::size_t(a)] + origin[std::size_t(a)] < full.dim(a), "overlap",
                "tile exceeds the full domain");
      }
      std::int64_t dst =
          full.ndim() == 2
              ? full.index(c[0] + origin[0], c[1] + origin[1])
              : full.index(c[0] + origin[0], c[1] + origin[1], c[2] + origin[2]);
      require(hits[std::size_t(dst)] == 0, "overlap", "tiles overlap");
      hits[std::size_t(dst)] = 1;
      out[std::size_t(dst)] = field[i];
    }
  }
  for (std::uint8_t h : hits) require(h == 1, "coverage-gap", "tiles leave a gap");
  return ScalarField(full, std::move(out));
}

inline VectorField splice_patches(
    const std::vector<std::pair<VectorField, std::array<int, 3>>>& tiles,
    const Grid& full) {
  std::vector<ScalarField> comps;
  for (int a = 0; a < full.ndim(); ++a) {
    std::vector<std::pair<ScalarField, std::array<int, 3>>> part;
    for (const auto& [f, o] : tiles) part.emplace_back(f.comp(a), o);
    comps.push_back(splice_patches(part, full));
  }
  return VectorField(full, std::move(comps));
}

inline TensorField splice_patches(
    const std::vector<std::pair<TensorField, std::array<int, 3>>>& tiles,
    const Grid& full) {
  std::vector<ScalarField> entries;
  int ne = full.ndim() * (full.ndim() + 1) / 2;
  for (int e = 0; e < ne; ++e) {
    std::vector<std::pair<ScalarField, std::array<int, 3>>> part;
    for (const auto& [f, o] : tiles) part.emplace_back(f.entry(e), o);
    entries.push_back(splice_patches(part, full));
  }
  return TensorField(full, std::move(entries));
}

// ---------------------------------------------------------------------------
// Estimation pipelines
// ---------------------------------------------------------------------------

struct LossConfig {
  double w_ula = 0.5;
  double w_grad = 0.5;
  double w_ss = 0.1;
  int n_out = 10;
  /// Boundary treatment of the latent forward model. Full-domain estimation
  /// defaults to the domain's own zero-Neumann boundary; patch-mode
  /// estimation always uses the virtual Cauchy conditions.
  BoundarySpec::Kind bc = BoundarySpec::Kind::ZeroNeumann;
  /// When set, the data term averages one n_out-frame prediction window per
  /// admissible start frame instead of a single window from frame 0.
  bool windowed = false;
};

struct HistoryRow {
  int iter;
  double l_cc, l_ss, total, lr;
};

struct EstimateResult {
  PhysicsParams params;
  std::vector<HistoryRow> history;
  std::vector<double> best_history;  // non-increasing by construction
  double best_loss = 0.0;
  int iters_run = 0;
  bool stopped_by_tolerance = false;
};

namespace detail {

/// Default optimization start. Psi and B are zero (V = 0, no rotation), but
/// lam_raw starts at a small positive constant: at lam_raw = 0 the clamp
/// subgradient is 0 and the whole diffusion branch would sit at a dead
/// saddle with exactly zero gradients.
inline constexpr double kLamInit = 0.05;

inline PhysicsParams default_init_params(const Grid& g) {
  std::vector<ScalarField> lam;
  for (int i = 0; i < g.ndim(); ++i)
    lam.emplace_back(g, Buf(std::size_t(g.cells()), kLamInit));
  std::vector<ScalarField> b;
  for (int i = 0; i < g.ndim() * (g.ndim() - 1) / 2; ++i)
    b.push_back(ScalarField::zeros(g));
  return PhysicsParams(PotentialField::zeros(g),
                       TensorParams(g, std::move(b), std::move(lam)));
}

inline PhysicsParams noise_init_params(const Grid& g, std::uint64_t seed,
                                       double scale) {
  Rng rng(seed ^ 0xA5A5A5A5ull);
  auto draw = [&](int count) {
    std::vector<ScalarField> fields;
    for (int i = 0; i < count; ++i) {
      Buf d(std::size_t(g.cells()));
      for (double& x : d) x = rng.uniform(-scale, scale);
      fields.emplace_back(g, std::move(d));
    }
    return fields;
  };
  int alpha = g.ndim() == 2 ? 1 : 3;
  return PhysicsParams(PotentialField(g, draw(alpha)),
                       TensorParams(g, draw(g.ndim() * (g.ndim() - 1) / 2),
                                    draw(g.ndim())));
}

/// By-construction invariants spot-checked on an iterate: interior divergence
/// of the realized velocity and PSD-ness of the realized tensor.
inline void spot_check_invariants(const PhysicsParams& p) {
  VectorField v = curl(p.psi);
  ScalarField div = discrete_divergence(v);
  double vmax = v.max_abs();
  double dmax = 0.0;
  for (double x : div.data()) dmax = std::max(dmax, std::fabs(x));
  require(dmax <= 1e-10 * std::max(vmax, 1.0), "invariant",
          "iterate velocity is not divergence-free");
  EigenDecomp e = eig_sym(build_tensor(p.tensor));
  const ScalarField& smallest = e.eigvals.back();
  for (double x : smallest.data())
    require(x >= -1e-12, "invariant", "iterate tensor is not PSD");
}

}  // namespace detail

/// Latent-physics estimation: iterate grad(latent_loss) / adam_step until
/// max_iters or the best-so-far loss stops improving. Returns the best
/// iterate seen. dt_sub is re-selected from the stability report of the
/// current iterate every iteration (the fields grow during optimization).
inline EstimateResult estimate(const ConcentrationSeries& observed,
                               const PhysicsParams* init, const OptimConfig& cfg,
                               const LossConfig& loss) {
  cfg.validate();
  const Grid& g = observed.grid();
  int n_out = std::min(loss.n_out, observed.nframes());
  require(n_out >= 2, "series", "latent estimation needs n_out >= 2");

  PhysicsParams current =
      init ? *init
           : (cfg.noise_init
                  ? detail::noise_init_params(g, cfg.seed, cfg.noise_scale)
                  : detail::default_init_params(g));
  ParamVec pv = ParamVec::from(current);
  AdamState state = AdamState::zeros_like(pv);

  auto eval_loss = [&](const PhysicsParams& p) {
    return loss.windowed ? latent_loss_windows(p, observed, n_out, loss.w_grad,
                                               loss.w_ss, 0, loss.bc)
                         : latent_loss(p, observed, n_out, loss.w_grad,
                                       loss.w_ss, 0, loss.bc);
  };
  auto eval_grad = [&](const PhysicsParams& p, LatentLossReport* rep) {
    return loss.windowed
               ? grad_latent_windows(p, observed, n_out, loss.w_grad, loss.w_ss,
                                     0, rep, loss.bc)
               : grad_latent(p, observed, n_out, loss.w_grad, loss.w_ss, 0, rep,
                             loss.bc);
  };

  EstimateResult out{current, {}, {}, 0.0, 0, false};
  LatentLossReport rep0 = eval_loss(current);
  out.history.push_back({0, rep0.l_cc, rep0.l_ss, rep0.total, effective_lr(cfg, 0)});
  out.best_history.push_back(rep0.total);
  out.best_loss = rep0.total;
  out.params = current;

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    LatentLossReport rep;
    GradientBundle grads = eval_grad(current, &rep);
    require(std::isfinite(rep.total), "divergence",
            "loss became non-finite at iteration " + std::to_string(iter));

    ParamVec gv = ParamVec::from(grads);
    adam_step(state, pv, gv, iter, cfg);
    current = pv.to_params(g);

    LatentLossReport after = eval_loss(current);
    require(std::isfinite(after.total), "divergence",
            "loss became non-finite at iteration " + std::to_string(iter));
    out.history.push_back(
        {iter, after.l_cc, after.l_ss, after.total, effective_lr(cfg, iter)});
    if (after.total < out.best_loss) {
      out.best_loss = after.total;
      out.params = current;
    }
    out.best_history.push_back(out.best_loss);
    out.iters_run = iter;

    if (iter % 100 == 0) detail::spot_check_invariants(current);

    int w = cfg.tol_window;
    if (int(out.best_history.size()) > w) {
      double prev = out.best_history[out.best_history.size() - std::size_t(w) - 1];
      if (prev - out.best_loss < cfg.tol) {
        out.stopped_by_tolerance = true;
        break;
      }
    }
  }
  detail::spot_check_invariants(out.params);
  return out;
}

// ---------------------------------------------------------------------------
// Representation fitting (direct phase) and divergence-free projection
// ---------------------------------------------------------------------------

struct FitResult {
  PhysicsParams params;
  DirectLossReport final_loss;
  std::vector<HistoryRow> history;  // columns reused: l_cc -> l_vd, l_ss -> l_ula
  bool converged = false;
  int iters_run = 0;
};

/// Fit (Psi, B, Lambda) to known target fields by minimizing the direct loss.
/// Non-convergence is reported through `converged`, never thrown.
inline FitResult fit_representation(const VectorField& v_target,
                                    const TensorField& d_target,
                                    const OptimConfig& cfg, double w_ula = 0.5) {
  cfg.validate();
  const Grid& g = v_target.grid();
  require(d_target.grid() == g, "grid-mismatch", "fit targets share no grid");

  PhysicsParams current =
      cfg.noise_init ? detail::noise_init_params(g, cfg.seed, cfg.noise_scale)
                     : detail::default_init_params(g);
  ParamVec pv = ParamVec::from(current);
  AdamState state = AdamState::zeros_like(pv);

  FitResult out{current, direct_loss(current, v_target, d_target, w_ula), {}, false, 0};
  double best = out.final_loss.total;
  out.history.push_back({0, out.final_loss.l_vd, out.final_loss.l_ula,
                         out.final_loss.total, effective_lr(cfg, 0)});

  std::vector<double> best_hist{best};
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    DirectLossReport rep;
    GradientBundle grads = grad_direct(current, v_target, d_target, w_ula, &rep);
    ParamVec gv = ParamVec::from(grads);
    adam_step(state, pv, gv, iter, cfg);
    current = pv.to_params(g);

    DirectLossReport after = direct_loss(current, v_target, d_target, w_ula);
    require(std::isfinite(after.total), "divergence",
            "direct loss became non-finite at iteration " + std::to_string(iter));
    out.history.push_back(
        {iter, after.l_vd, after.l_ula, after.total, effective_lr(cfg, iter)});
    if (after.total < best) {
      best = after.total;
      out.params = current;
      out.final_loss = after;
    }
    best_hist.push_back(best);
    out.iters_run = iter;
    int w = cfg.tol_window;
    if (int(best_hist.size()) > w &&
        best_hist[best_hist.size() - std::size_t(w) - 1] - best < cfg.tol)
      break;
  }
  out.converged = out.final_loss.total <= 1e-6 ||
                  (out.history.size() >= 2 &&
                   out.final_loss.total < 0.5 * out.history.front().total);
  return out;
}

struct ProjectResult {
  VectorField projected;
  PotentialField psi;
  double residual = 0.0;  // mean squared misfit at the optimum
  std::vector<HistoryRow> history;
  int iters_run = 0;
};

/// min_psi |curl(psi) - V|^2; the output is curl(psi*), divergence-free by
/// construction whatever the optimizer reached.
inline ProjectResult project_divfree(const VectorField& v, const OptimConfig& cfg) {
  cfg.validate();
  const Grid& g = v.grid();
  int alpha = g.ndim() == 2 ? 1 : 3;

  std::vector<Buf> psi(std::size_t(alpha), Buf(std::size_t(g.cells()), 0.0));
  std::vector<Buf> best_psi = psi;
  AdamState state;
  for (const Buf& b : psi) {
    state.m.emplace_back(b.size(), 0.0);
    state.v.emplace_back(b.size(), 0.0);
  }

  BufPtr mw = detail::uniform_mean_weights(g.cells());
  auto eval = [&](bool record, std::vector<Buf>* grads_out) {
    Tape t(Shape(g), record);
    std::vector<Var> leaves;
    for (Buf& b : psi) leaves.push_back(t.leaf(Buf(b)));
    std::vector<Var> vhat = curl_graph(t, g, leaves);
    Var sq;
    for (int a = 0; a < g.ndim(); ++a) {
      Var diff = t.sub(vhat[std::size_t(a)], Tape::constant(v.comp(a).data()));
      Var s = t.mul(diff, diff);
      sq = a == 0 ? s : t.add(sq, s);
    }
    Var lossv = t.wsum(sq, mw);
    double val = lossv.scalar();
    if (record && grads_out) {
      t.backward(lossv);
      grads_out->clear();
      for (const Var& l : leaves) grads_out->push_back(t.adjoint(l));
    }
    return val;
  };

  ProjectResult out{VectorField::zeros(g), PotentialField::zeros(g), 0.0, {}, 0};
  double best = eval(false, nullptr);
  out.history.push_back({0, best, 0.0, best, effective_lr(cfg, 0)});
  std::vector<double> best_hist{best};

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    std::vector<Buf> grads;
    eval(true, &grads);
    for (std::size_t gi = 0; gi < psi.size(); ++gi) {
      Buf& p = psi[gi];
      const Buf& gr = grads[gi];
      Buf& m = state.m[gi];
      Buf& vv = state.v[gi];
      const double lr = effective_lr(cfg, iter);
      const double bc1 = 1.0 - std::pow(cfg.beta1, iter);
      const double bc2 = 1.0 - std::pow(cfg.beta2, iter);
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
        vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
        p[i] -= lr * (m[i] / bc1) / (std::sqrt(vv[i] / bc2) + cfg.eps);
      }
    }
    double val = eval(false, nullptr);
    require(std::isfinite(val), "divergence",
            "projection loss became non-finite at iteration " + std::to_string(iter));
    out.history.push_back({iter, val, 0.0, val, effective_lr(cfg, iter)});
    if (val < best) {
      best = val;
      best_psi = psi;
    }
    best_hist.push_back(best);
    out.iters_run = iter;
    int w = cfg.tol_window;
    if (int(best_hist.size()) > w &&
        best_hist[best_hist.size() - std::size_t(w) - 1] - best < cfg.tol)
      break;
  }

  std::vector<ScalarField> comps;
  for (Buf& b : best_psi) comps.emplace_back(g, Buf(b));
  out.psi = PotentialField(g, std::move(comps));
  out.projected = curl(out.psi);
  out.residual = best;
  return out;
}

// ---------------------------------------------------------------------------
// Tiled (patch-mode) estimation
// ---------------------------------------------------------------------------

struct TiledEstimateResult {
  VectorField v;
  TensorField d;
  std::vector<std::pair<PhysicsParams, std::array<int, 3>>> patch_params;
};

/// Exact non-overlapping tiling of the domain by size^d patches, one
/// CauchyVirtual estimation per tile, spliced realized fields. Tiles are
/// independent jobs; `jobs` only changes scheduling, never results.
inline TiledEstimateResult estimate_tiled(const ConcentrationSeries& observed,
                                          const OptimConfig& cfg,
                                          const LossConfig& loss, int size,
                                          int jobs = 1) {
  const Grid& g = observed.grid();
  for (int a = 0; a < g.ndim(); ++a)
    require(g.dim(a) % size == 0, "patch",
            "patch mode needs dims divisible by the patch size");
  std::vector<std::array<int, 3>> origins;
  std::array<int, 3> tiles{1, 1, 1};
  for (int a = 0; a < g.ndim(); ++a) tiles[std::size_t(a)] = g.dim(a) / size;
  for (int i = 0; i < tiles[0]; ++i)
    for (int j = 0; j < tiles[1]; ++j)
      for (int k = 0; k < tiles[2]; ++k)
        origins.push_back({i * size, j * size, k * size});

  Grid pg = patch_grid(g, size);
  std::vector<std::pair<PhysicsParams, std::array<int, 3>>> results(
      origins.size(),
      {PhysicsParams::zeros(pg), {0, 0, 0}});

  auto run_tile = [&](std::size_t idx) {
    const auto& origin = origins[idx];
    std::vector<ScalarField> frames;
    for (int f = 0; f < observed.nframes(); ++f)
      frames.push_back(extract_cells(observed.frame(f), pg, origin));
    ConcentrationSeries patch(std::move(frames), observed.dt(), observed.t0());
    LossConfig patch_loss = loss;
    patch_loss.bc = BoundarySpec::Kind::CauchyVirtual;  // not a real boundary
    EstimateResult est = estimate(patch, nullptr, cfg, patch_loss);
    results[idx] = {est.params, origin};
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < origins.size(); ++i) run_tile(i);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    for (std::size_t i = 0; i < origins.size(); i += std::size_t(jobs)) {
      pool.clear();
      for (int j = 0; j < jobs && next < origins.size(); ++j, ++next)
        pool.emplace_back(run_tile, next);
      for (auto& th : pool) th.join();
    }
  }

  std::vector<std::pair<VectorField, std::array<int, 3>>> vtiles;
  std::vector<std::pair<TensorField, std::array<int, 3>>> dtiles;
  for (const auto& [params, origin] : results) {
    vtiles.emplace_back(curl(params.psi), origin);
    dtiles.emplace_back(build_tensor(params.tensor), origin);
  }
  return TiledEstimateResult{splice_patches(vtiles, g), splice_patches(dtiles, g),
                             std::move(results)};
}

}  // namespace adpde

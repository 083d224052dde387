// adpde command-line tool: reproducible simulation / estimation / evaluation
// jobs over the advection-diffusion toolkit.
//
// Subcommands: simulate | estimate | evaluate | gradcheck | project-divfree
// | fit-repr. Every command prints its resolved configuration (defaults
// filled in) before running, writes all outputs under --out, and exits 0 only
// if the job completed and the invariant spot-checks passed. Failures emit a
// machine-readable error JSON on stderr. ADIFF_THREADS caps --jobs.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>

#include "adpde/field_io.hpp"
#include "adpde/metrics.hpp"
#include "adpde/simgen.hpp"

using nlohmann::json;
using namespace adpde;

namespace {

// ---------------------------------------------------------------------------
// Strict configuration parsing: unknown keys are rejected everywhere.
// ---------------------------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  require(j.is_object(), "config", where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    require(ok, "config", "unknown key \"" + it.key() + "\" in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error("config", std::string("bad value for key \"") + key + "\"");
  }
}

std::array<double, 2> get_range(const json& j, const char* key,
                                std::array<double, 2> def) {
  if (!j.contains(key)) return def;
  auto v = j.at(key).get<std::vector<double>>();
  require(v.size() == 2, "config", std::string(key) + " must be [lo, hi]");
  return {v[0], v[1]};
}

struct GradcheckJob {
  std::string loss = "latent";  // "latent" or "direct"
  std::array<int, 3> dims{8, 8, 1};
  int ndim = 2;
  int n_frames = 3;
  double h = 1e-5;
  double tolerance = 1e-5;
  int max_coords = 0;
};

struct PatchJob {
  bool enabled = false;
  int size = 32;
};

struct JobConfig {
  SimConfig sim;
  OptimConfig optim;
  LossConfig loss;
  GradcheckJob gc;
  PatchJob patch;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  int count = 1;  // samples per simulate run
};

void parse_dims(const json& j, const char* key, int& ndim, std::array<int, 3>& dims,
                int def0, int def1) {
  if (!j.contains(key)) {
    ndim = 2;
    dims = {def0, def1, 1};
    return;
  }
  auto v = j.at(key).get<std::vector<int>>();
  require(v.size() == 2 || v.size() == 3, "config",
          std::string(key) + " must have 2 or 3 entries");
  ndim = int(v.size());
  dims = {v[0], v.size() > 1 ? v[1] : 1, v.size() > 2 ? v[2] : 1};
}

JobConfig parse_config(const json& j) {
  check_keys(j, {"sim", "optim", "loss", "gradcheck", "patch", "seed", "jobs"},
             "config");
  JobConfig c;
  if (j.contains("seed")) {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.seed_set = true;
  }
  c.jobs = get_or(j, "jobs", 1);

  if (j.contains("sim")) {
    const json& s = j.at("sim");
    check_keys(s,
               {"dims", "spacing", "n_frames", "dt", "sigma", "psi_range",
                "lam_range", "b_range", "substeps_per_frame", "count"},
               "sim");
    parse_dims(s, "dims", c.sim.ndim, c.sim.dims, 64, 64);
    if (s.contains("spacing")) {
      auto v = s.at("spacing").get<std::vector<double>>();
      require(int(v.size()) == c.sim.ndim, "config",
              "spacing must match dims dimensionality");
      for (int a = 0; a < c.sim.ndim; ++a) c.sim.spacing[std::size_t(a)] = v[std::size_t(a)];
    }
    c.sim.n_frames = get_or(s, "n_frames", 40);
    c.sim.dt = get_or(s, "dt", 0.01);
    c.sim.sigma = get_or(s, "sigma", 2.0);
    c.sim.psi_range = get_range(s, "psi_range", {-10.0, 10.0});
    c.sim.lam_range = get_range(s, "lam_range", {0.0, 1.0});
    c.sim.b_range = get_range(s, "b_range", {-1.0, 1.0});
    c.sim.substeps_per_frame = get_or(s, "substeps_per_frame", 10);
    c.count = get_or(s, "count", 1);
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    check_keys(o,
               {"lr", "decay_factor", "decay_every", "beta1", "beta2", "eps",
                "max_iters", "tol", "tol_window", "noise_init", "noise_scale"},
               "optim");
    c.optim.lr = get_or(o, "lr", 1e-3);
    c.optim.decay_factor = get_or(o, "decay_factor", 0.1);
    c.optim.decay_every = get_or(o, "decay_every", 500);
    c.optim.beta1 = get_or(o, "beta1", 0.9);
    c.optim.beta2 = get_or(o, "beta2", 0.999);
    c.optim.eps = get_or(o, "eps", 1e-8);
    c.optim.max_iters = get_or(o, "max_iters", 1000);
    c.optim.tol = get_or(o, "tol", 1e-9);
    c.optim.tol_window = get_or(o, "tol_window", 50);
    c.optim.noise_init = get_or(o, "noise_init", false);
    c.optim.noise_scale = get_or(o, "noise_scale", 1e-2);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, {"w_ula", "w_grad", "w_ss", "n_out", "bc", "windowed"}, "loss");
    c.loss.w_ula = get_or(l, "w_ula", 0.5);
    c.loss.w_grad = get_or(l, "w_grad", 0.5);
    c.loss.w_ss = get_or(l, "w_ss", 0.1);
    c.loss.n_out = get_or(l, "n_out", 10);
    std::string bc = get_or<std::string>(l, "bc", "zero-neumann");
    require(bc == "zero-neumann" || bc == "cauchy-virtual", "config",
            "loss.bc must be \"zero-neumann\" or \"cauchy-virtual\"");
    c.loss.bc = bc == "zero-neumann" ? BoundarySpec::Kind::ZeroNeumann
                                     : BoundarySpec::Kind::CauchyVirtual;
    c.loss.windowed = get_or(l, "windowed", false);
  }
  if (j.contains("gradcheck")) {
    const json& gjs = j.at("gradcheck");
    check_keys(gjs, {"loss", "dims", "n_frames", "h", "tolerance", "max_coords"},
               "gradcheck");
    c.gc.loss = get_or<std::string>(gjs, "loss", "latent");
    require(c.gc.loss == "latent" || c.gc.loss == "direct", "config",
            "gradcheck.loss must be \"latent\" or \"direct\"");
    parse_dims(gjs, "dims", c.gc.ndim, c.gc.dims, 8, 8);
    c.gc.n_frames = get_or(gjs, "n_frames", 3);
    c.gc.h = get_or(gjs, "h", 1e-5);
    c.gc.tolerance = get_or(gjs, "tolerance", 1e-5);
    c.gc.max_coords = get_or(gjs, "max_coords", 0);
  }
  if (j.contains("patch")) {
    const json& p = j.at("patch");
    check_keys(p, {"enabled", "size"}, "patch");
    c.patch.enabled = get_or(p, "enabled", false);
    c.patch.size = get_or(p, "size", 32);
  }
  return c;
}

json resolved_config(const JobConfig& c, const std::string& command) {
  json j;
  j["command"] = command;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  json s;
  std::vector<int> dims(c.sim.dims.begin(), c.sim.dims.begin() + c.sim.ndim);
  std::vector<double> sp(c.sim.spacing.begin(), c.sim.spacing.begin() + c.sim.ndim);
  s["dims"] = dims;
  s["spacing"] = sp;
  s["n_frames"] = c.sim.n_frames;
  s["dt"] = c.sim.dt;
  s["sigma"] = c.sim.sigma;
  s["psi_range"] = c.sim.psi_range;
  s["lam_range"] = c.sim.lam_range;
  s["b_range"] = c.sim.b_range;
  s["substeps_per_frame"] = c.sim.substeps_per_frame;
  s["count"] = c.count;
  j["sim"] = s;
  json o;
  o["lr"] = c.optim.lr;
  o["decay_factor"] = c.optim.decay_factor;
  o["decay_every"] = c.optim.decay_every;
  o["beta1"] = c.optim.beta1;
  o["beta2"] = c.optim.beta2;
  o["eps"] = c.optim.eps;
  o["max_iters"] = c.optim.max_iters;
  o["tol"] = c.optim.tol;
  o["tol_window"] = c.optim.tol_window;
  o["noise_init"] = c.optim.noise_init;
  o["noise_scale"] = c.optim.noise_scale;
  j["optim"] = o;
  json l;
  l["w_ula"] = c.loss.w_ula;
  l["w_grad"] = c.loss.w_grad;
  l["w_ss"] = c.loss.w_ss;
  l["n_out"] = c.loss.n_out;
  l["bc"] = c.loss.bc == BoundarySpec::Kind::ZeroNeumann ? "zero-neumann"
                                                         : "cauchy-virtual";
  l["windowed"] = c.loss.windowed;
  j["loss"] = l;
  json gc;
  gc["loss"] = c.gc.loss;
  gc["dims"] = std::vector<int>(c.gc.dims.begin(), c.gc.dims.begin() + c.gc.ndim);
  gc["n_frames"] = c.gc.n_frames;
  gc["h"] = c.gc.h;
  gc["tolerance"] = c.gc.tolerance;
  gc["max_coords"] = c.gc.max_coords;
  j["gradcheck"] = gc;
  json p;
  p["enabled"] = c.patch.enabled;
  p["size"] = c.patch.size;
  j["patch"] = p;
  return j;
}

// ---------------------------------------------------------------------------
// Small output helpers
// ---------------------------------------------------------------------------

std::string fmt_g(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  detail::spew(p, text);
}

void write_history_csv(const std::filesystem::path& p,
                       const std::vector<HistoryRow>& rows,
                       const char* header = "iter,l_cc,l_ss,total,lr") {
  std::string out = std::string(header) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.iter) + "," + fmt_g(r.l_cc) + "," + fmt_g(r.l_ss) +
           "," + fmt_g(r.total) + "," + fmt_g(r.lr) + "\n";
  write_text(p, out);
}

void write_eig_bundle(const EigenDecomp& e, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < e.eigvecs.size(); ++k)
    write_field(e.eigvecs[k], dir / ("u_" + std::to_string(k) + ".adgf"));
  for (std::size_t k = 0; k < e.eigvals.size(); ++k)
    write_field(e.eigvals[k], dir / ("lam_" + std::to_string(k) + ".adgf"));
}

void spot_check_fields(const VectorField& v, const TensorField& d) {
  ScalarField div = discrete_divergence(v);
  double dmax = 0.0;
  for (double x : div.data()) dmax = std::max(dmax, std::fabs(x));
  require(dmax <= 1e-10 * std::max(v.max_abs(), 1.0), "invariant",
          "emitted velocity is not divergence-free");
  EigenDecomp e = eig_sym(d);
  for (double x : e.eigvals.back().data())
    require(x >= -1e-12, "invariant", "emitted tensor is not PSD");
}

int effective_jobs(int jobs) {
  jobs = std::max(1, jobs);
  if (const char* cap = std::getenv("ADIFF_THREADS")) {
    int c = std::atoi(cap);
    if (c >= 1) jobs = std::min(jobs, c);
  }
  return jobs;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_simulate(const JobConfig& cfg, const std::filesystem::path& out) {
  int jobs = effective_jobs(cfg.jobs);
  std::filesystem::create_directories(out);

  auto one = [&](int k) {
    SimConfig sc = cfg.sim;
    sc.seed = cfg.seed + std::uint64_t(k);
    Sample sample = gen_sample(sc);

    char name[32];
    std::snprintf(name, sizeof(name), "sample-%03d", k);
    std::filesystem::path dir = out / name;
    write_series(sample.series, dir / "series");
    write_params(sample.truth.params, dir / "truth" / "params");
    write_field(sample.truth.v, dir / "truth" / "v.adgf");
    write_field(sample.truth.d, dir / "truth" / "d.adgf");
    write_eig_bundle(sample.truth.eig, dir / "truth" / "eig");

    JobConfig resolved = cfg;
    resolved.seed = sc.seed;
    json rc = resolved_config(resolved, "simulate");
    rc.erase("jobs");  // scheduling detail, not part of the result
    write_text(dir / "config.json", rc.dump(2) + "\n");
    spot_check_fields(sample.truth.v, sample.truth.d);
  };

  if (jobs == 1 || cfg.count == 1) {
    for (int k = 0; k < cfg.count; ++k) one(k);
  } else {
    std::vector<std::thread> pool;
    int next = 0;
    while (next < cfg.count) {
      pool.clear();
      for (int j = 0; j < jobs && next < cfg.count; ++j, ++next)
        pool.emplace_back(one, next);
      for (auto& t : pool) t.join();
    }
  }
}

void cmd_estimate(const JobConfig& cfg, const std::filesystem::path& series_dir,
                  const std::filesystem::path& out) {
  require(std::filesystem::exists(series_dir / "manifest.json"), "missing-series",
          "no series manifest at " + series_dir.string());
  ConcentrationSeries observed = read_series(series_dir);
  std::filesystem::create_directories(out);

  OptimConfig oc = cfg.optim;
  oc.seed = cfg.seed;
  if (cfg.patch.enabled) {
    TiledEstimateResult res = estimate_tiled(observed, oc, cfg.loss, cfg.patch.size,
                                             effective_jobs(cfg.jobs));
    std::filesystem::create_directories(out / "realized");
    write_field(res.v, out / "realized" / "v.adgf");
    write_field(res.d, out / "realized" / "d.adgf");
    for (std::size_t i = 0; i < res.patch_params.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "patch-%03zu", i);
      write_params(res.patch_params[i].first, out / "patches" / name / "params");
    }
    spot_check_fields(res.v, res.d);
  } else {
    EstimateResult res = estimate(observed, nullptr, oc, cfg.loss);
    write_params(res.params, out / "params");
    VectorField v = curl(res.params.psi);
    TensorField d = build_tensor(res.params.tensor);
    std::filesystem::create_directories(out / "realized");
    write_field(v, out / "realized" / "v.adgf");
    write_field(d, out / "realized" / "d.adgf");
    write_history_csv(out / "history.csv", res.history);
    spot_check_fields(v, d);
  }
  json rc = resolved_config(cfg, "estimate");
  rc.erase("jobs");
  write_text(out / "config.json", rc.dump(2) + "\n");
}

double err_u_principal(const EigenDecomp& truth, const EigenDecomp& est) {
  const Grid& g = truth.eigvals.front().grid();
  const VectorField& u = truth.eigvecs.front();
  const VectorField& uh = est.eigvecs.front();
  double sum = 0.0;
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    double mn = 0.0, pl = 0.0;
    for (int a = 0; a < g.ndim(); ++a) {
      double x = u.comp(a)[i], y = uh.comp(a)[i];
      mn += (x - y) * (x - y);
      pl += (x + y) * (x + y);
    }
    sum += std::sqrt(std::min(mn, pl));
  }
  return sum / double(g.cells());
}

double err_lambda(const EigenDecomp& truth, const EigenDecomp& est) {
  const Grid& g = truth.eigvals.front().grid();
  double sum = 0.0;
  std::int64_t used = 0;
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    double den2 = 0.0, err2 = 0.0;
    for (std::size_t k = 0; k < truth.eigvals.size(); ++k) {
      double t = truth.eigvals[k][i];
      double d = t - est.eigvals[k][i];
      den2 += t * t;
      err2 += d * d;
    }
    if (std::sqrt(den2) < kRaeDenomFloor) continue;
    sum += std::sqrt(err2) / std::sqrt(den2);
    ++used;
  }
  require(used > 0, "undefined-rae", "all cells excluded: undefined RAE");
  return sum / double(used);
}

void cmd_evaluate(const std::filesystem::path& truth_dir,
                  const std::filesystem::path& est_dir,
                  const std::filesystem::path& out) {
  require(std::filesystem::exists(truth_dir), "missing-input",
          "no truth directory " + truth_dir.string());
  VectorField v_true = read_vector(truth_dir / "truth" / "v.adgf");
  TensorField d_true = read_tensor(truth_dir / "truth" / "d.adgf");
  ConcentrationSeries observed = read_series(truth_dir / "series");
  json sample_cfg =
      json::parse(detail::slurp(truth_dir / "config.json"));
  int n_sub = sample_cfg.at("sim").at("substeps_per_frame").get<int>();

  VectorField v_est = read_vector(est_dir / "realized" / "v.adgf");
  TensorField d_est = read_tensor(est_dir / "realized" / "d.adgf");
  require(v_est.grid() == v_true.grid() && d_est.grid() == d_true.grid(),
          "grid-mismatch", "estimate grids differ from truth grids");

  double err_v = rae(v_true, v_est);
  double err_d = rae(d_true, d_est);
  EigenDecomp eig_true = eig_sym(d_true);
  EigenDecomp eig_est = eig_sym(d_est);
  double err_u = err_u_principal(eig_true, eig_est);
  double err_l = err_lambda(eig_true, eig_est);

  // Re-simulate the observed dynamics with the estimated fields.
  IntegrateResult resim = integrate(
      observed.frame(0), v_est, d_est, BoundarySpec::zero_neumann(),
      TimeSpan{observed.t0(), observed.dt(), observed.nframes()},
      observed.dt() / n_sub, /*want_diagnostics=*/false);
  double err_c = series_rae(observed, resim.series);

  std::filesystem::create_directories(out);
  std::string csv = "sample,err_v,err_d,err_u,err_lambda,err_c\n";
  csv += truth_dir.filename().string() + "," + fmt_g(err_v) + "," + fmt_g(err_d) +
         "," + fmt_g(err_u) + "," + fmt_g(err_l) + "," + fmt_g(err_c) + "\n";
  write_text(out / "metrics.csv", csv);
  std::cout << csv;
}

int cmd_gradcheck(const JobConfig& cfg, const std::filesystem::path& out) {
  SimConfig sc;
  sc.ndim = cfg.gc.ndim;
  sc.dims = cfg.gc.dims;
  sc.n_frames = cfg.gc.n_frames;
  sc.sigma = 1.0;  // fits the 3-sigma margin on the default 8^2 instance
  sc.seed = cfg.seed;
  Sample sample = gen_sample(sc);

  // Random parameters to check, well away from the generator's optimum.
  PhysicsParams params =
      adpde::detail::noise_init_params(sc.grid(), cfg.seed ^ 0x51ull, 0.3);

  GradcheckConfig gcc;
  gcc.h = cfg.gc.h;
  gcc.tolerance = cfg.gc.tolerance;
  gcc.max_coords = cfg.gc.max_coords;
  gcc.seed = cfg.seed;

  GradcheckReport rep;
  if (cfg.gc.loss == "direct") {
    GradientBundle g =
        grad_direct(params, sample.truth.v, sample.truth.d, cfg.loss.w_ula);
    EigenDecomp gt_eig = eig_sym(sample.truth.d);
    rep = gradcheck(params, g,
                    [&](const PhysicsParams& p) {
                      return direct_loss_primal(p, sample.truth.v, sample.truth.d,
                                                gt_eig, cfg.loss.w_ula);
                    },
                    gcc);
  } else {
    int n_out = std::min(cfg.loss.n_out, sample.series.nframes());
    LatentLossReport rep0;
    GradientBundle g = grad_latent(params, sample.series, n_out, cfg.loss.w_grad,
                                   cfg.loss.w_ss, 0, &rep0);
    int n_sub = rep0.n_sub;  // fixed across all finite-difference evaluations
    rep = gradcheck(params, g,
                    [&](const PhysicsParams& p) {
                      return latent_loss(p, sample.series, n_out, cfg.loss.w_grad,
                                         cfg.loss.w_ss, n_sub)
                          .total;
                    },
                    gcc);
  }

  json j;
  j["max_rel_err"] = rep.max_rel_err;
  j["mean_rel_err"] = rep.mean_rel_err;
  j["n_checked"] = rep.n_checked;
  j["pass"] = rep.pass;
  std::filesystem::create_directories(out);
  write_text(out / "gradcheck.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return rep.pass ? 0 : 2;
}

void cmd_project(const JobConfig& cfg, const std::filesystem::path& field,
                 const std::filesystem::path& out) {
  VectorField v = read_vector(field);
  OptimConfig oc = cfg.optim;
  oc.seed = cfg.seed;
  ProjectResult res = project_divfree(v, oc);

  std::filesystem::create_directories(out / "psi");
  for (int a = 0; a < res.psi.ncomp(); ++a)
    write_field(res.psi.comp(a), out / "psi" / ("psi_" + std::to_string(a) + ".adgf"));
  write_field(res.projected, out / "projected.adgf");
  write_history_csv(out / "history.csv", res.history, "iter,residual,unused,total,lr");

  ScalarField div = discrete_divergence(res.projected);
  double dmax = 0.0;
  for (double x : div.data()) dmax = std::max(dmax, std::fabs(x));
  double vmax = res.projected.max_abs();
  json j;
  j["residual"] = res.residual;
  j["interior_div_max"] = dmax;
  j["projected_max_abs"] = vmax;
  j["iters_run"] = res.iters_run;
  // recovery error against the input; ~0 when the input was divergence-free
  try {
    j["rae_vs_input"] = rae(v, res.projected);
  } catch (const Error&) {
    j["rae_vs_input"] = nullptr;  // all-zero input field
  }
  write_text(out / "report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  require(dmax <= 1e-10 * std::max(vmax, 1.0), "invariant",
          "projected field is not divergence-free");
}

void cmd_fit_repr(const JobConfig& cfg, const std::filesystem::path& vpath,
                  const std::filesystem::path& dpath,
                  const std::filesystem::path& out) {
  VectorField v = read_vector(vpath);
  TensorField d = read_tensor(dpath);
  OptimConfig oc = cfg.optim;
  oc.seed = cfg.seed;
  FitResult res = fit_representation(v, d, oc, cfg.loss.w_ula);

  write_params(res.params, out / "params");
  VectorField vhat = curl(res.params.psi);
  TensorField dhat = build_tensor(res.params.tensor);
  std::filesystem::create_directories(out / "realized");
  write_field(vhat, out / "realized" / "v.adgf");
  write_field(dhat, out / "realized" / "d.adgf");
  write_history_csv(out / "history.csv", res.history, "iter,l_vd,l_ula,total,lr");

  json j;
  j["l_vd"] = res.final_loss.l_vd;
  j["l_ula"] = res.final_loss.l_ula;
  j["total"] = res.final_loss.total;
  j["converged"] = res.converged;
  j["iters_run"] = res.iters_run;
  write_text(out / "report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  spot_check_fields(vhat, dhat);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"advection-diffusion transport toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, series_dir, truth_dir, est_dir, field_path,
      v_path, d_path;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::vector<CLI::Option*> seed_opts;

  auto add_common = [&](CLI::App* cmd, bool need_out = true) {
    cmd->add_option("--config", config_path, "JSON job configuration");
    if (need_out)
      cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_option("--jobs", jobs, "parallel jobs across samples/patches");
    seed_opts.push_back(cmd->add_option("--seed", seed, "RNG seed"));
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate samples with ground truth");
  add_common(sim);
  CLI::App* est = app.add_subcommand("estimate", "estimate physics from a series");
  add_common(est);
  est->add_option("--series", series_dir, "series directory")->required();
  CLI::App* ev = app.add_subcommand("evaluate", "compare an estimate against truth");
  add_common(ev);
  ev->add_option("--truth", truth_dir, "sample directory from simulate")->required();
  ev->add_option("--estimate", est_dir, "output directory from estimate")->required();
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(gc);
  CLI::App* pr = app.add_subcommand("project-divfree",
                                    "project a vector field onto curl potentials");
  add_common(pr);
  pr->add_option("--field", field_path, "input vector field (ADGF)")->required();
  CLI::App* fr = app.add_subcommand("fit-repr", "fit (Psi,B,Lambda) to target fields");
  add_common(fr);
  fr->add_option("--v", v_path, "target velocity field (ADGF)")->required();
  fr->add_option("--d", d_path, "target tensor field (ADGF)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    json raw = json::object();
    if (!config_path.empty()) {
      try {
        raw = json::parse(adpde::detail::slurp(config_path));
      } catch (const json::exception& e) {
        throw Error("config", std::string("cannot parse config: ") + e.what());
      }
    }
    JobConfig cfg = parse_config(raw);
    bool seed_given = false;
    for (const CLI::Option* o : seed_opts) seed_given = seed_given || o->count() > 0;
    if (seed_given) {
      cfg.seed = seed;
      cfg.seed_set = true;
    }
    if (jobs > 0) cfg.jobs = jobs;

    std::string name = app.get_subcommands().front()->get_name();
    if (name == "simulate" || name == "estimate")
      require(cfg.seed_set, "usage",
              "--seed is mandatory for simulate/estimate (reproducibility)");

    std::cout << resolved_config(cfg, name).dump(2) << "\n";

    if (name == "simulate") {
      cmd_simulate(cfg, out_dir);
    } else if (name == "estimate") {
      cmd_estimate(cfg, series_dir, out_dir);
    } else if (name == "evaluate") {
      cmd_evaluate(truth_dir, est_dir, out_dir);
    } else if (name == "gradcheck") {
      return cmd_gradcheck(cfg, out_dir);
    } else if (name == "project-divfree") {
      cmd_project(cfg, field_path, out_dir);
    } else if (name == "fit-repr") {
      cmd_fit_repr(cfg, v_path, d_path, out_dir);
    }
    return 0;
  } catch (const Error& e) {
    json err;
    err["error"]["code"] = e.code();
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return e.code() == "usage" || e.code() == "config" ? 1 : 2;
  } catch (const std::exception& e) {
    json err;
    err["error"]["code"] = "internal";
    err["error"]["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 2;
  }
}

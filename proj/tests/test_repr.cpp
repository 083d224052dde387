#include "adpde/repr.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace adpde;
using namespace testutil;

TEST_CASE("2D curl of psi = x*y gives (x, -y) exactly") {
  // x*y is linear in each variable, so central and one-sided differences are
  // both exact and the identity holds at every cell including faces.
  Grid g = Grid::make2d(8, 6, 0.5, 1.25);
  PotentialField psi(g, {sample_scalar(g, [](double x, double y, double) {
                       return x * y;
                     })});
  VectorField v = curl(psi);
  ScalarField vx = sample_scalar(g, [](double x, double, double) { return x; });
  ScalarField vy = sample_scalar(g, [](double, double y, double) { return -y; });
  CHECK(max_abs_diff(v.comp(0).data(), vx.data()) < 1e-13);
  CHECK(max_abs_diff(v.comp(1).data(), vy.data()) < 1e-13);

  // and its interior discrete divergence vanishes identically
  ScalarField div = discrete_divergence(v);
  CHECK(max_abs(div.data()) < 1e-13);
}

TEST_CASE("3D curl of (xy, yz, xz) gives (-y, -z, -x) at interior cells") {
  Grid g = Grid::make3d(6, 6, 6);
  PotentialField psi(
      g, {sample_scalar(g, [](double x, double y, double) { return x * y; }),
          sample_scalar(g, [](double, double y, double z) { return y * z; }),
          sample_scalar(g, [](double x, double, double z) { return x * z; })});
  VectorField v = curl(psi);
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    if (g.on_boundary(i)) continue;
    auto c = g.coords(i);
    double x = c[0], y = c[1], z = c[2];
    CHECK(v.comp(0)[i] == Catch::Approx(-y).margin(1e-12));
    CHECK(v.comp(1)[i] == Catch::Approx(-z).margin(1e-12));
    CHECK(v.comp(2)[i] == Catch::Approx(-x).margin(1e-12));
  }
}

TEST_CASE("constant potential gives zero velocity") {
  Grid g = Grid::make2d(5, 5);
  PotentialField psi(g, {sample_scalar(g, [](double, double, double) {
                       return 3.25;
                     })});
  VectorField v = curl(psi);
  CHECK(v.max_abs() == 0.0);
}

TEST_CASE("interior divergence of curl vanishes for random potentials") {
  Rng rng(2024);
  for (const Grid& g : {Grid::make2d(16, 16), Grid::make3d(8, 8, 8)}) {
    for (int trial = 0; trial < 10; ++trial) {
      PotentialField psi = random_potential(g, rng, -10.0, 10.0);
      VectorField v = curl(psi);
      ScalarField div = discrete_divergence(v);
      double vmax = v.max_abs();
      REQUIRE(vmax > 0.0);
      CHECK(max_abs(div.data()) <= 1e-10 * vmax);
    }
  }
}

TEST_CASE("discrete divergence on simple fields") {
  Grid g = Grid::make2d(6, 6);
  VectorField linear(
      g, {sample_scalar(g, [](double x, double, double) { return x; }),
          sample_scalar(g, [](double, double y, double) { return y; })});
  ScalarField div = discrete_divergence(linear);
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    if (g.on_boundary(i))
      CHECK(div[i] == 0.0);
    else
      CHECK(div[i] == Catch::Approx(2.0).margin(1e-13));
  }

  VectorField constant(
      g, {sample_scalar(g, [](double, double, double) { return 4.0; }),
          sample_scalar(g, [](double, double, double) { return -1.0; })});
  CHECK(max_abs(discrete_divergence(constant).data()) == 0.0);
}

TEST_CASE("2D Cayley closed form") {
  Mat2 id = cayley2(0.0);
  CHECK(id[0][0] == 1.0);
  CHECK(id[0][1] == 0.0);
  CHECK(id[1][0] == 0.0);
  CHECK(id[1][1] == 1.0);

  Mat2 u = cayley2(2.0);  // (4-s^2)/(s^2+4) = 0, 4s/(s^2+4) = 1
  CHECK(u[0][0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(u[0][1] == Catch::Approx(1.0).margin(1e-15));
  CHECK(u[1][0] == Catch::Approx(-1.0).margin(1e-15));
  CHECK(u[1][1] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("3D Cayley matches direct inversion and is a rotation") {
  Mat3 id = cayley3(0.0, 0.0, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(id[i][j] == (i == j ? 1.0 : 0.0));

  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    double s1 = rng.uniform(-100.0, 100.0);
    double s2 = rng.uniform(-100.0, 100.0);
    double s3 = rng.uniform(-100.0, 100.0);
    Mat3 u = cayley3(s1, s2, s3);
    auto ref = oracle::cayley3_direct(s1, s2, s3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(u[i][j] == Catch::Approx(ref[std::size_t(i)][std::size_t(j)]).margin(1e-12));

    // U^T U = I and det U = 1 within 1e-12
    double frob = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += u[k][i] * u[k][j];
        double target = i == j ? 1.0 : 0.0;
        frob += (dot - target) * (dot - target);
      }
    CHECK(std::sqrt(frob) <= 1e-12);
    CHECK(detail::det3(u) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("build_tensor closed-form cases") {
  Grid g = Grid::make2d(3, 3);
  auto constant = [&](double v) {
    return ScalarField(g, Buf(std::size_t(g.cells()), v));
  };

  // B = 0 -> U = I -> D = diag(2, 1)
  TensorField d0 =
      build_tensor(TensorParams(g, {constant(0.0)}, {constant(2.0), constant(1.0)}));
  CHECK(max_abs_diff(d0.entry(0).data(), Buf(9, 2.0)) < 1e-15);
  CHECK(max_abs(d0.entry(1).data()) < 1e-15);
  CHECK(max_abs_diff(d0.entry(2).data(), Buf(9, 1.0)) < 1e-15);

  // s = 2 rotates by 90 degrees: D = U diag(2,1) U^T = diag(1, 2)
  TensorField d1 =
      build_tensor(TensorParams(g, {constant(2.0)}, {constant(2.0), constant(1.0)}));
  CHECK(max_abs_diff(d1.entry(0).data(), Buf(9, 1.0)) < 1e-14);
  CHECK(max_abs(d1.entry(1).data()) < 1e-14);
  CHECK(max_abs_diff(d1.entry(2).data(), Buf(9, 2.0)) < 1e-14);

  // negative raw eigenvalues clamp to zero
  TensorField d2 = build_tensor(
      TensorParams(g, {constant(1.3)}, {constant(-5.0), constant(-5.0)}));
  for (int e = 0; e < 3; ++e) CHECK(max_abs(d2.entry(e).data()) == 0.0);
}

TEST_CASE("build_tensor output is PSD with eigenvalues equal to clamped lambda") {
  Rng rng(4242);
  for (const Grid& g : {Grid::make2d(6, 5), Grid::make3d(4, 4, 4)}) {
    for (int trial = 0; trial < 8; ++trial) {
      TensorParams params = random_tensor_params(g, rng, -50.0, 50.0, -1.0, 2.0);
      TensorField d = build_tensor(params);
      EigenDecomp e = eig_sym(d);

      for (std::int64_t i = 0; i < g.cells(); ++i) {
        std::vector<double> expect;
        for (int k = 0; k < g.ndim(); ++k)
          expect.push_back(std::max(params.lam_raw(k)[i], 0.0));
        std::sort(expect.rbegin(), expect.rend());
        for (int k = 0; k < g.ndim(); ++k) {
          double got = e.eigvals[std::size_t(k)][i];
          CHECK(got == Catch::Approx(expect[std::size_t(k)]).margin(1e-10));
        }
        CHECK(e.eigvals.back()[i] >= -1e-12);
      }
    }
  }
}

TEST_CASE("eig_sym hand cases") {
  Grid g = Grid::make2d(3, 3);
  auto constant = [&](double v) {
    return ScalarField(g, Buf(std::size_t(g.cells()), v));
  };
  TensorField diag(g, {constant(3.0), constant(0.0), constant(1.0)});
  EigenDecomp e = eig_sym(diag);
  CHECK(e.eigvals[0][0] == 3.0);
  CHECK(e.eigvals[1][0] == 1.0);
  CHECK(e.eigvecs[0].comp(0)[0] == 1.0);
  CHECK(e.eigvecs[0].comp(1)[0] == 0.0);
  CHECK(e.eigvecs[1].comp(0)[0] == 0.0);
  CHECK(e.eigvecs[1].comp(1)[0] == 1.0);

  // [[2,1],[1,2]]: eigenvalues (3,1), eigenvectors (1,1)/sqrt2 and (1,-1)/sqrt2
  TensorField m(g, {constant(2.0), constant(1.0), constant(2.0)});
  EigenDecomp e2 = eig_sym(m);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(e2.eigvals[0][0] == Catch::Approx(3.0).margin(1e-14));
  CHECK(e2.eigvals[1][0] == Catch::Approx(1.0).margin(1e-14));
  CHECK(e2.eigvecs[0].comp(0)[0] == Catch::Approx(r).margin(1e-14));
  CHECK(e2.eigvecs[0].comp(1)[0] == Catch::Approx(r).margin(1e-14));
  CHECK(e2.eigvecs[1].comp(0)[0] == Catch::Approx(r).margin(1e-14));
  CHECK(e2.eigvecs[1].comp(1)[0] == Catch::Approx(-r).margin(1e-14));
}

TEST_CASE("eig_sym reconstructs, normalizes and is deterministic") {
  Rng rng(7);
  for (const Grid& g : {Grid::make2d(5, 5), Grid::make3d(4, 4, 3)}) {
    TensorParams params = random_tensor_params(g, rng, -3.0, 3.0, 0.0, 2.0);
    TensorField d = build_tensor(params);
    EigenDecomp e = eig_sym(d);
    const int n = g.ndim();

    for (std::int64_t i = 0; i < g.cells(); ++i) {
      // unit eigenvectors, descending eigenvalues
      for (int k = 0; k < n; ++k) {
        double nrm = 0.0;
        for (int r = 0; r < n; ++r) {
          double x = e.eigvecs[std::size_t(k)].comp(r)[i];
          nrm += x * x;
        }
        CHECK(std::sqrt(nrm) == Catch::Approx(1.0).margin(1e-12));
        if (k > 0)
          CHECK(e.eigvals[std::size_t(k - 1)][i] >= e.eigvals[std::size_t(k)][i]);
      }
      // reconstruction U Lam U^T to 1e-10 relative Frobenius
      double resid = 0.0, nrm = 0.0;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          double rec = 0.0;
          for (int k = 0; k < n; ++k)
            rec += e.eigvals[std::size_t(k)][i] *
                   e.eigvecs[std::size_t(k)].comp(r)[i] *
                   e.eigvecs[std::size_t(k)].comp(c)[i];
          double src = d.matrix_at(i)[std::size_t(r)][std::size_t(c)];
          resid += (rec - src) * (rec - src);
          nrm += src * src;
        }
      if (nrm > 0.0) CHECK(std::sqrt(resid) <= 1e-10 * std::sqrt(nrm));
    }

    EigenDecomp e2 = eig_sym(d);
    for (int k = 0; k < n; ++k) {
      CHECK(bitwise_equal(e.eigvals[std::size_t(k)].data(),
                          e2.eigvals[std::size_t(k)].data()));
      for (int r = 0; r < n; ++r)
        CHECK(bitwise_equal(e.eigvecs[std::size_t(k)].comp(r).data(),
                            e2.eigvecs[std::size_t(k)].comp(r).data()));
    }
  }
}

TEST_CASE("eig_sym handles repeated eigenvalues") {
  Grid g = Grid::make2d(3, 3);
  auto constant = [&](double v) {
    return ScalarField(g, Buf(std::size_t(g.cells()), v));
  };
  // isotropic 3D tensor: all eigenvalues equal
  Grid g3 = Grid::make3d(3, 3, 3);
  auto c3 = [&](double v) { return ScalarField(g3, Buf(std::size_t(g3.cells()), v)); };
  TensorField iso(g3, {c3(2.0), c3(0.0), c3(2.0), c3(0.0), c3(0.0), c3(2.0)});
  EigenDecomp e = eig_sym(iso);
  for (int k = 0; k < 3; ++k) CHECK(e.eigvals[std::size_t(k)][0] == 2.0);

  // 2D zero tensor
  TensorField zero(g, {constant(0.0), constant(0.0), constant(0.0)});
  EigenDecomp e0 = eig_sym(zero);
  CHECK(e0.eigvals[0][0] == 0.0);
  CHECK(e0.eigvals[1][0] == 0.0);
}

TEST_CASE("3D potential zeroes its normal component on matching faces") {
  Grid g = Grid::make3d(4, 4, 4);
  Rng rng(3);
  PotentialField psi = random_potential(g, rng, -1.0, 1.0);
  for (int comp = 0; comp < 3; ++comp) {
    for (std::int64_t i = 0; i < g.cells(); ++i) {
      auto c = g.coords(i);
      bool on_normal_face = c[std::size_t(comp)] == 0 ||
                            c[std::size_t(comp)] == g.dim(comp) - 1;
      if (on_normal_face)
        CHECK(psi.comp(comp)[i] == 0.0);
    }
    // tangential values on other faces survive
    double nonzero = 0.0;
    for (std::int64_t i = 0; i < g.cells(); ++i)
      nonzero = std::max(nonzero, std::fabs(psi.comp(comp)[i]));
    CHECK(nonzero > 0.0);
  }
}

TEST_CASE("plain build_tensor agrees with the tape graph bitwise") {
  Grid g = Grid::make3d(4, 3, 4);
  Rng rng(88);
  TensorParams params = random_tensor_params(g, rng, -5.0, 5.0, -1.0, 2.0);
  TensorField plain = build_tensor(params);

  Tape t(Shape(g), true);
  std::vector<Var> b, lam;
  for (int i = 0; i < params.nb(); ++i) b.push_back(t.leaf(params.b(i).data()));
  for (int i = 0; i < g.ndim(); ++i) lam.push_back(t.leaf(params.lam_raw(i).data()));
  TensorGraph tg = tensor_graph(t, g, b, lam);
  for (int e = 0; e < plain.nentries(); ++e)
    CHECK(bitwise_equal(plain.entry(e).data(), tg.entries[std::size_t(e)].val()));
}

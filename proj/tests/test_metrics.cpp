#include "adpde/metrics.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace adpde;
using namespace testutil;

namespace {
ScalarField constant_field(const Grid& g, double v) {
  return ScalarField(g, Buf(std::size_t(g.cells()), v));
}
}  // namespace

TEST_CASE("scalar and vector RAE") {
  Grid g = Grid::make2d(4, 4);
  ScalarField ones = constant_field(g, 1.0);
  ScalarField twos = constant_field(g, 2.0);
  CHECK(rae(ones, ones) == 0.0);
  CHECK(rae(ones, twos) == Catch::Approx(1.0));

  VectorField truth(g, {constant_field(g, 3.0), constant_field(g, 4.0)});
  VectorField zero = VectorField::zeros(g);
  CHECK(rae(truth, zero) == Catch::Approx(1.0));  // |(3,4)| = 5, error 5/5
  CHECK(rae(truth, truth) == 0.0);
}

TEST_CASE("RAE excludes near-zero denominators and can become undefined") {
  Grid g = Grid::make2d(4, 4);
  Buf t(16, 0.0);
  t[0] = 1.0;  // only one usable cell
  Buf e(16, 0.0);
  e[0] = 1.5;
  e[5] = 42.0;  // sits on an excluded cell, must not count
  CHECK(rae(ScalarField(g, Buf(t)), ScalarField(g, Buf(e))) == Catch::Approx(0.5));

  ScalarField zt = constant_field(g, 0.0);
  CHECK_THROWS_AS(rae(zt, zt), Error);
}

TEST_CASE("trace map") {
  Grid g = Grid::make3d(3, 3, 3);
  auto c3 = [&](double v) { return constant_field(g, v); };
  TensorField d(g, {c3(1.0), c3(0.4), c3(2.0), c3(-0.1), c3(0.2), c3(3.0)});
  ScalarField tr = trace_map(d);
  CHECK(tr[0] == Catch::Approx(6.0));
  CHECK(max_abs(trace_map(TensorField::zeros(g)).data()) == 0.0);

  // rotation invariance: trace equals the sum of clamped eigenvalues for any B
  Rng rng(7);
  Grid g2 = Grid::make2d(5, 5);
  for (int trial = 0; trial < 5; ++trial) {
    TensorParams params = random_tensor_params(g2, rng, -20.0, 20.0, -0.5, 2.0);
    ScalarField tr2 = trace_map(build_tensor(params));
    for (std::int64_t i = 0; i < g2.cells(); ++i) {
      double expect = std::max(params.lam_raw(0)[i], 0.0) +
                      std::max(params.lam_raw(1)[i], 0.0);
      CHECK(tr2[i] == Catch::Approx(expect).margin(1e-10));
    }
  }
}

TEST_CASE("fractional anisotropy fixed points") {
  Grid g = Grid::make3d(3, 3, 3);
  auto make_eig = [&](double l1, double l2, double l3) {
    std::vector<ScalarField> vals{constant_field(g, l1), constant_field(g, l2),
                                  constant_field(g, l3)};
    std::vector<VectorField> vecs;
    for (int k = 0; k < 3; ++k) {
      std::vector<ScalarField> comps;
      for (int r = 0; r < 3; ++r)
        comps.push_back(constant_field(g, k == r ? 1.0 : 0.0));
      vecs.emplace_back(g, std::move(comps));
    }
    return EigenDecomp{std::move(vals), std::move(vecs)};
  };

  CHECK(fa_map(make_eig(1, 1, 1))[0] == 0.0);
  CHECK(fa_map(make_eig(1, 0, 0))[0] == Catch::Approx(1.0).margin(1e-15));
  CHECK(fa_map(make_eig(2, 1, 1))[0] ==
        Catch::Approx(std::sqrt(1.0 / 6.0)).margin(1e-15));
  CHECK(fa_map(make_eig(0, 0, 0))[0] == 0.0);
}

TEST_CASE("FA is in [0,1] and invariant under tensor rotation") {
  Grid g = Grid::make3d(4, 4, 4);
  Rng rng(19);
  // fixed eigenvalue fields, varying rotation
  std::vector<ScalarField> lam{constant_field(g, 1.7), constant_field(g, 0.6),
                               constant_field(g, 0.2)};
  double fa_ref = -1.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<ScalarField> b;
    for (int i = 0; i < 3; ++i) b.push_back(random_scalar(g, rng, -10.0, 10.0));
    TensorParams params(g, std::move(b),
                        {lam[0], lam[1], lam[2]});
    EigenDecomp e = eig_sym(build_tensor(params));
    ScalarField fa = fa_map(e);
    for (std::int64_t i = 0; i < g.cells(); ++i) {
      CHECK(fa[i] >= 0.0);
      CHECK(fa[i] <= 1.0 + 1e-12);
      if (fa_ref < 0.0) fa_ref = fa[0];
      CHECK(fa[i] == Catch::Approx(fa_ref).margin(1e-10));
    }
  }
}

TEST_CASE("principal orientation and color-by-orientation") {
  Grid g = Grid::make3d(3, 3, 3);
  auto c3 = [&](double v) { return constant_field(g, v); };
  TensorField d(g, {c3(3.0), c3(0.0), c3(1.0), c3(0.0), c3(0.0), c3(1.0)});
  EigenDecomp e = eig_sym(d);
  VectorField u = principal_orientation(e);
  CHECK(u.comp(0)[0] == 1.0);  // sign convention picks +x
  CHECK(u.comp(1)[0] == 0.0);
  CHECK(u.comp(2)[0] == 0.0);

  // ties resolved deterministically
  TensorField tie(g, {c3(2.0), c3(0.0), c3(2.0), c3(0.0), c3(0.0), c3(1.0)});
  VectorField u1 = principal_orientation(eig_sym(tie));
  VectorField u2 = principal_orientation(eig_sym(tie));
  for (int r = 0; r < 3; ++r)
    CHECK(bitwise_equal(u1.comp(r).data(), u2.comp(r).data()));

  // isotropic tensor: FA = 0 so CbO is black
  TensorField iso(g, {c3(1.0), c3(0.0), c3(1.0), c3(0.0), c3(0.0), c3(1.0)});
  VectorField cbo_black = cbo_map(eig_sym(iso));
  for (int r = 0; r < 3; ++r) CHECK(max_abs(cbo_black.comp(r).data()) == 0.0);

  // lambda = (1,0,0), u = x: CbO = (1,0,0)
  TensorField stick(g, {c3(1.0), c3(0.0), c3(0.0), c3(0.0), c3(0.0), c3(0.0)});
  VectorField cbo_stick = cbo_map(eig_sym(stick));
  CHECK(cbo_stick.comp(0)[0] == Catch::Approx(1.0).margin(1e-15));
  CHECK(cbo_stick.comp(1)[0] == 0.0);
  CHECK(cbo_stick.comp(2)[0] == 0.0);

  // lambda = (2,1,1) with principal axis y: CbO = (0, sqrt(1/6), 0)
  TensorField prolate(g, {c3(1.0), c3(0.0), c3(2.0), c3(0.0), c3(0.0), c3(1.0)});
  VectorField cbo_y = cbo_map(eig_sym(prolate));
  CHECK(cbo_y.comp(0)[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(cbo_y.comp(1)[0] == Catch::Approx(std::sqrt(1.0 / 6.0)).margin(1e-14));
  CHECK(cbo_y.comp(2)[0] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("principal orientation matches the constructing rotation column") {
  Grid g = Grid::make2d(4, 4);
  Rng rng(29);
  // distinct positive eigenvalues so the principal axis is unambiguous
  std::vector<ScalarField> b{random_scalar(g, rng, -3.0, 3.0)};
  std::vector<ScalarField> lam{constant_field(g, 2.0), constant_field(g, 0.5)};
  TensorParams params(g, b, lam);
  VectorField u = principal_orientation(eig_sym(build_tensor(params)));
  for (std::int64_t i = 0; i < g.cells(); ++i) {
    Mat2 rot = cayley2(params.b(0)[i]);
    // largest lambda is the first slot, so the principal axis is column 0
    double cx = rot[0][0], cy = rot[1][0];
    double dot = std::fabs(cx * u.comp(0)[i] + cy * u.comp(1)[i]);
    CHECK(dot == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("relative mean") {
  Grid g = Grid::make2d(4, 4);
  std::vector<std::uint8_t> left(16, 0), right(16, 0);
  for (std::int64_t i = 0; i < 16; ++i) {
    auto c = g.coords(i);
    (c[0] < 2 ? left : right)[std::size_t(i)] = 1;
  }
  RegionMask lesion(g, left), clesion(g, right);

  CHECK(rel_mean(constant_field(g, 3.0), lesion, clesion) == 1.0);

  Buf vals(16);
  for (std::int64_t i = 0; i < 16; ++i)
    vals[std::size_t(i)] = g.coords(i)[0] < 2 ? 2.0 : 4.0;
  ScalarField split(g, std::move(vals));
  CHECK(rel_mean(split, lesion, clesion) == Catch::Approx(0.5));
  CHECK(rel_mean(split, clesion, lesion) == Catch::Approx(0.5));  // symmetric

  Buf extreme(16);
  for (std::int64_t i = 0; i < 16; ++i)
    extreme[std::size_t(i)] = g.coords(i)[0] < 2 ? 1.0 : 1e6;
  CHECK(rel_mean(ScalarField(g, std::move(extreme)), lesion, clesion) ==
        Catch::Approx(1e-6));

  CHECK_THROWS_AS(rel_mean(constant_field(g, 0.0), lesion, clesion), Error);
}

TEST_CASE("Welch t statistic") {
  Grid g = Grid::make2d(4, 4);
  // regions of 4 cells each along the first row pair
  std::vector<std::uint8_t> a(16, 0), b(16, 0);
  for (int j = 0; j < 4; ++j) {
    a[std::size_t(g.index(0, j))] = 1;
    b[std::size_t(g.index(3, j))] = 1;
  }
  RegionMask ra(g, a), rb(g, b);

  Buf vals(16, 0.0);
  double pop_a[4] = {1, 2, 3, 4};
  double pop_b[4] = {5, 6, 7, 8};
  for (int j = 0; j < 4; ++j) {
    vals[std::size_t(g.index(0, j))] = pop_a[j];
    vals[std::size_t(g.index(3, j))] = pop_b[j];
  }
  ScalarField f(g, std::move(vals));
  double expected =
      std::fabs(oracle::welch_t({1, 2, 3, 4}, {5, 6, 7, 8}));
  CHECK(abs_t(f, ra, rb) == Catch::Approx(expected).margin(1e-14));

  // identical (non-degenerate) populations give t = 0
  Buf same(16, 0.0);
  for (int j = 0; j < 4; ++j) {
    same[std::size_t(g.index(0, j))] = pop_a[j];
    same[std::size_t(g.index(3, j))] = pop_a[j];
  }
  CHECK(abs_t(ScalarField(g, std::move(same)), ra, rb) == Catch::Approx(0.0));

  // zero variances with unequal means: infinite t, flagged through the value
  Buf step(16, 0.0);
  for (int j = 0; j < 4; ++j) step[std::size_t(g.index(3, j))] = 1.0;
  CHECK(std::isinf(abs_t(ScalarField(g, std::move(step)), ra, rb)));

  // zero variances with equal means: degenerate
  try {
    abs_t(constant_field(g, 1.0), ra, rb);
    FAIL("expected degenerate-t");
  } catch (const Error& e) {
    CHECK(e.code() == "degenerate-t");
  }

  // regions with fewer than 2 cells
  std::vector<std::uint8_t> single(16, 0);
  single[0] = 1;
  RegionMask rs(g, single);
  CHECK_THROWS_AS(abs_t(constant_field(g, 1.0), rs, rb), Error);
}

TEST_CASE("principal angle deviation") {
  Grid g = Grid::make2d(4, 4);
  std::vector<std::uint8_t> lesion(16, 0);
  lesion[std::size_t(g.index(1, 1))] = 1;
  lesion[std::size_t(g.index(1, 2))] = 1;
  RegionMask mask(g, lesion);
  std::vector<std::int64_t> mirror(16);
  for (std::int64_t i = 0; i < 16; ++i) {
    auto c = g.coords(i);
    mirror[std::size_t(i)] = g.index(3 - c[0], c[1]);
  }

  auto uniform_u = [&](double x, double y) {
    return VectorField(g, {constant_field(g, x), constant_field(g, y)});
  };
  CHECK(angle_dev(uniform_u(1.0, 0.0), mask, mirror) == Catch::Approx(0.0));

  // opposite vectors on the mirrored side: the +- min sends this to 0
  Buf vx(16), vy(16, 0.0);
  for (std::int64_t i = 0; i < 16; ++i)
    vx[std::size_t(i)] = g.coords(i)[0] < 2 ? 1.0 : -1.0;
  VectorField flip(g, {ScalarField(g, std::move(vx)), ScalarField(g, std::move(vy))});
  CHECK(angle_dev(flip, mask, mirror) == Catch::Approx(0.0).margin(1e-12));

  // orthogonal orientations: 90 degrees
  Buf wx(16), wy(16);
  for (std::int64_t i = 0; i < 16; ++i) {
    bool leftside = g.coords(i)[0] < 2;
    wx[std::size_t(i)] = leftside ? 1.0 : 0.0;
    wy[std::size_t(i)] = leftside ? 0.0 : 1.0;
  }
  Buf wxcopy = wx, wycopy = wy;
  VectorField ortho(g, {ScalarField(g, std::move(wx)), ScalarField(g, std::move(wy))});
  CHECK(angle_dev(ortho, mask, mirror) == Catch::Approx(90.0).margin(1e-12));

  // invariant under a global sign flip of the whole field
  Buf fx(16), fy(16);
  for (std::int64_t i = 0; i < 16; ++i) {
    fx[std::size_t(i)] = -wxcopy[std::size_t(i)];
    fy[std::size_t(i)] = -wycopy[std::size_t(i)];
  }
  VectorField flipped(g, {ScalarField(g, std::move(fx)), ScalarField(g, std::move(fy))});
  CHECK(angle_dev(flipped, mask, mirror) == Catch::Approx(90.0).margin(1e-12));

  std::vector<std::uint8_t> empty(16, 0);
  CHECK_THROWS_AS(angle_dev(uniform_u(1, 0), RegionMask(g, empty), mirror), Error);
}

TEST_CASE("series RAE") {
  Grid g = Grid::make2d(4, 4);
  Rng rng(3);
  std::vector<ScalarField> t, e;
  for (int f = 0; f < 3; ++f) {
    t.push_back(random_scalar(g, rng, 1.0, 2.0));
    e.push_back(t.back());
  }
  ConcentrationSeries ts(std::move(t), 0.1), es(std::move(e), 0.1);
  CHECK(series_rae(ts, es) == 0.0);
}

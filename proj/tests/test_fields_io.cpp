#include <filesystem>
#include <fstream>

#include "adpde/field_io.hpp"
#include "helpers.hpp"

using namespace adpde;
using namespace testutil;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("adpde_io_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("grid invariants") {
  CHECK_THROWS_AS(Grid(4, {3, 3, 3}, {1, 1, 1}), Error);
  CHECK_THROWS_AS(Grid::make2d(2, 3), Error);          // dims >= 3
  CHECK_THROWS_AS(Grid::make2d(3, 3, 0.0, 1.0), Error);  // spacing > 0
  CHECK_THROWS_AS(Grid::make2d(3, 3, -1.0, 1.0), Error);
  Grid g = Grid::make3d(4, 5, 6, 0.5, 1.0, 2.0);
  CHECK(g.cells() == 120);
  CHECK(g.stride(0) == 30);
  CHECK(g.stride(1) == 6);
  CHECK(g.stride(2) == 1);
}

TEST_CASE("flat index and coordinates are a bijection") {
  for (const Grid& g : {Grid::make2d(4, 7), Grid::make3d(3, 5, 4)}) {
    std::vector<bool> seen(std::size_t(g.cells()), false);
    for (std::int64_t i = 0; i < g.cells(); ++i) {
      auto c = g.coords(i);
      std::int64_t back = g.ndim() == 2 ? g.index(c[0], c[1])
                                        : g.index(c[0], c[1], c[2]);
      CHECK(back == i);
      CHECK_FALSE(seen[std::size_t(i)]);
      seen[std::size_t(i)] = true;
    }
  }
}

TEST_CASE("constructors reject non-finite values and mismatched grids") {
  Grid g = Grid::make2d(3, 3);
  Buf bad(9, 1.0);
  bad[4] = std::nan("");
  CHECK_THROWS_WITH(ScalarField(g, Buf(bad)),
                    Catch::Matchers::ContainsSubstring("non-finite"));
  bad[4] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ScalarField(g, Buf(bad)), Error);
  CHECK_THROWS_AS(ScalarField(g, Buf(5, 0.0)), Error);  // wrong length

  Grid g2 = Grid::make2d(3, 4);
  std::vector<ScalarField> comps{ScalarField::zeros(g), ScalarField::zeros(g2)};
  CHECK_THROWS_AS(VectorField(g, std::move(comps)), Error);
}

TEST_CASE("scalar field round-trips bitwise through ADGF") {
  fs::path dir = temp_dir("scalar");
  Grid g = Grid::make2d(3, 3, 0.5, 2.0);
  Rng rng(11);
  ScalarField f = random_scalar(g, rng, -5.0, 5.0);
  write_field(f, dir / "f.adgf");

  // header: magic + version + ndim + kind (16) + 2*u64 dims + 2*f64 spacing
  CHECK(fs::file_size(dir / "f.adgf") == 48 + 9 * 8);

  ScalarField back = read_scalar(dir / "f.adgf");
  CHECK(back.grid() == g);
  CHECK(bitwise_equal(back.data(), f.data()));

  // byte-deterministic: writing again gives identical bytes
  write_field(f, dir / "f2.adgf");
  std::string a = detail::slurp(dir / "f.adgf");
  std::string b = detail::slurp(dir / "f2.adgf");
  CHECK(a == b);
}

TEST_CASE("vector field header reflects the constructor") {
  fs::path dir = temp_dir("vector");
  Grid g = Grid::make3d(3, 3, 3);
  Rng rng(7);
  VectorField v = random_vector(g, rng, -1.0, 1.0);
  write_field(v, dir / "v.adgf");
  // 3 component blocks after a 64-byte 3D header
  CHECK(fs::file_size(dir / "v.adgf") == 64 + 3 * 27 * 8);
  std::string bytes = detail::slurp(dir / "v.adgf");
  CHECK(bytes.substr(0, 4) == "ADGF");
  CHECK(std::uint8_t(bytes[8]) == 3);   // ndim
  CHECK(std::uint8_t(bytes[12]) == 1);  // kind = vector

  VectorField back = read_vector(dir / "v.adgf");
  for (int a = 0; a < 3; ++a)
    CHECK(bitwise_equal(back.comp(a).data(), v.comp(a).data()));
}

TEST_CASE("tensor field round-trip") {
  fs::path dir = temp_dir("tensor");
  Grid g = Grid::make3d(3, 4, 5);
  Rng rng(13);
  TensorField d = build_tensor(random_tensor_params(g, rng, -2, 2, 0, 1));
  write_field(d, dir / "d.adgf");
  TensorField back = read_tensor(dir / "d.adgf");
  for (int e = 0; e < d.nentries(); ++e)
    CHECK(bitwise_equal(back.entry(e).data(), d.entry(e).data()));
}

TEST_CASE("read_field rejects bad magic and truncated payloads") {
  fs::path dir = temp_dir("badfiles");
  Grid g = Grid::make2d(3, 3);
  write_field(ScalarField::zeros(g), dir / "f.adgf");

  std::string bytes = detail::slurp(dir / "f.adgf");
  std::string corrupted = bytes;
  corrupted.replace(0, 4, "XXXX");
  detail::spew(dir / "bad_magic.adgf", corrupted);
  try {
    read_field(dir / "bad_magic.adgf");
    FAIL("expected bad-magic");
  } catch (const Error& e) {
    CHECK(e.code() == "bad-magic");
  }

  // drop the last value: header declares 9 cells, 8 present
  detail::spew(dir / "short.adgf", bytes.substr(0, bytes.size() - 8));
  try {
    read_field(dir / "short.adgf");
    FAIL("expected truncated");
  } catch (const Error& e) {
    CHECK(e.code() == "truncated");
  }

  // inconsistent spacing (payload bytes where spacing should be positive)
  std::string nonsense = bytes;
  for (int i = 32; i < 48; ++i) nonsense[std::size_t(i)] = char(0xFF);
  detail::spew(dir / "bad_header.adgf", nonsense);
  CHECK_THROWS_AS(read_field(dir / "bad_header.adgf"), Error);
}

TEST_CASE("series round-trip with manifest") {
  fs::path dir = temp_dir("series");
  Grid g = Grid::make2d(4, 4);
  Rng rng(3);
  std::vector<ScalarField> frames;
  for (int i = 0; i < 5; ++i) frames.push_back(random_scalar(g, rng, 0.0, 1.0));
  ConcentrationSeries s(std::move(frames), 0.01, 0.0);
  write_series(s, dir);

  CHECK(fs::exists(dir / "manifest.json"));
  auto manifest = nlohmann::json::parse(detail::slurp(dir / "manifest.json"));
  CHECK(manifest["frames"].size() == 5);

  ConcentrationSeries back = read_series(dir);
  CHECK(back.dt() == 0.01);  // exact round-trip through JSON
  CHECK(back.nframes() == 5);
  for (int i = 0; i < 5; ++i)
    CHECK(bitwise_equal(back.frame(i).data(), s.frame(i).data()));

  fs::remove(dir / "frame_0003.adgf");
  try {
    read_series(dir);
    FAIL("expected missing-frame");
  } catch (const Error& e) {
    CHECK(e.code() == "missing-frame");
  }
}

TEST_CASE("series invariants") {
  Grid g = Grid::make2d(3, 3);
  std::vector<ScalarField> one{ScalarField::zeros(g)};
  CHECK_THROWS_AS(ConcentrationSeries(std::move(one), 0.01), Error);
  std::vector<ScalarField> two{ScalarField::zeros(g), ScalarField::zeros(g)};
  CHECK_THROWS_AS(ConcentrationSeries(std::move(two), 0.0), Error);
}

TEST_CASE("physics params round-trip through a directory") {
  fs::path dir = temp_dir("params");
  Grid g = Grid::make3d(4, 4, 4);
  Rng rng(17);
  PhysicsParams p(random_potential(g, rng, -3, 3),
                  random_tensor_params(g, rng, -2, 2, -0.5, 1.0));
  write_params(p, dir);
  PhysicsParams back = read_params(dir);
  for (int a = 0; a < p.psi.ncomp(); ++a)
    CHECK(bitwise_equal(back.psi.comp(a).data(), p.psi.comp(a).data()));
  for (int i = 0; i < p.tensor.nb(); ++i)
    CHECK(bitwise_equal(back.tensor.b(i).data(), p.tensor.b(i).data()));
  for (int i = 0; i < 3; ++i)
    CHECK(bitwise_equal(back.tensor.lam_raw(i).data(), p.tensor.lam_raw(i).data()));
}

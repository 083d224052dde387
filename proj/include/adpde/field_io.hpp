/// @file field_io.hpp
/// @brief ADGF field files and series directories.
///
/// ADGF layout (all integers and floats little-endian):
///   magic "ADGF" | u32 version=1 | u32 ndim | u32 kind | u64 dims[ndim]
///   | f64 spacing[ndim] | payload f64
/// kind: 0=scalar, 1=vector, 2=symmetric tensor. The payload is the
/// components concatenated, each in the canonical storage order, so a
/// round-trip is bitwise exact. No compression, no lazy loading.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <variant>

#include <json.hpp>

#include "adpde/fields.hpp"

namespace adpde {

using AnyField = std::variant<ScalarField, VectorField, TensorField>;

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}
inline void put_u32(std::string& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 4);
}
inline void put_u64(std::string& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  put_bytes(out, b, 8);
}
inline void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, const std::string& what)
      : buf_(buf), what_(what) {}
  void read(void* p, std::size_t n) {
    require(pos_ + n <= buf_.size(), "truncated", what_ + ": truncated file");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64() {
    std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io", "cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return buf;
}

inline void spew(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "io", "cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  require(out.good(), "io", "write failed for " + path.string());
}

inline std::string encode_adgf(const Grid& g, std::uint32_t kind,
                               const std::vector<const ScalarField*>& comps) {
  std::string out;
  out.reserve(64 + comps.size() * std::size_t(g.cells()) * 8);
  put_bytes(out, "ADGF", 4);
  put_u32(out, 1u);
  put_u32(out, std::uint32_t(g.ndim()));
  put_u32(out, kind);
  for (int a = 0; a < g.ndim(); ++a) put_u64(out, std::uint64_t(g.dim(a)));
  for (int a = 0; a < g.ndim(); ++a) put_f64(out, g.spacing(a));
  for (const ScalarField* c : comps) {
    detail::check_finite(c->data(), "field payload");
    for (double v : c->data()) put_f64(out, v);
  }
  return out;
}

}  // namespace detail

inline void write_field(const ScalarField& f, const std::filesystem::path& path) {
  detail::spew(path, detail::encode_adgf(f.grid(), 0, {&f}));
}
inline void write_field(const VectorField& f, const std::filesystem::path& path) {
  std::vector<const ScalarField*> comps;
  for (int a = 0; a < f.ncomp(); ++a) comps.push_back(&f.comp(a));
  detail::spew(path, detail::encode_adgf(f.grid(), 1, comps));
}
inline void write_field(const TensorField& f, const std::filesystem::path& path) {
  std::vector<const ScalarField*> comps;
  for (int e = 0; e < f.nentries(); ++e) comps.push_back(&f.entry(e));
  detail::spew(path, detail::encode_adgf(f.grid(), 2, comps));
}

inline AnyField read_field(const std::filesystem::path& path) {
  std::string buf = detail::slurp(path);
  detail::ByteReader r(buf, path.string());
  char magic[4];
  r.read(magic, 4);
  require(std::memcmp(magic, "ADGF", 4) == 0, "bad-magic",
          path.string() + ": bad magic");
  std::uint32_t version = r.u32();
  require(version == 1, "bad-header", path.string() + ": unsupported version");
  std::uint32_t ndim = r.u32();
  require(ndim == 2 || ndim == 3, "bad-header", path.string() + ": bad ndim");
  std::uint32_t kind = r.u32();
  require(kind <= 2, "bad-header", path.string() + ": bad field kind");
  std::array<int, 3> dims{1, 1, 1};
  for (std::uint32_t a = 0; a < ndim; ++a) {
    std::uint64_t d = r.u64();
    require(d >= 3 && d <= (1u << 20), "bad-header",
            path.string() + ": inconsistent dims");
    dims[a] = int(d);
  }
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  for (std::uint32_t a = 0; a < ndim; ++a) {
    spacing[a] = r.f64();
    require(std::isfinite(spacing[a]) && spacing[a] > 0.0, "bad-header",
            path.string() + ": inconsistent spacing");
  }
  Grid g(int(ndim), dims, spacing);
  int ncomp = kind == 0 ? 1 : (kind == 1 ? g.ndim() : g.ndim() * (g.ndim() + 1) / 2);
  require(r.remaining() == std::size_t(ncomp) * std::size_t(g.cells()) * 8,
          "truncated", path.string() + ": payload size mismatch");
  std::vector<ScalarField> comps;
  for (int c = 0; c < ncomp; ++c) {
    std::vector<double> data(std::size_t(g.cells()));
    for (double& v : data) v = r.f64();
    comps.emplace_back(g, std::move(data));
  }
  if (kind == 0) return comps[0];
  if (kind == 1) return VectorField(g, std::move(comps));
  return TensorField(g, std::move(comps));
}

inline ScalarField read_scalar(const std::filesystem::path& p) {
  AnyField f = read_field(p);
  require(std::holds_alternative<ScalarField>(f), "bad-kind",
          p.string() + ": expected a scalar field");
  return std::get<ScalarField>(std::move(f));
}
inline VectorField read_vector(const std::filesystem::path& p) {
  AnyField f = read_field(p);
  require(std::holds_alternative<VectorField>(f), "bad-kind",
          p.string() + ": expected a vector field");
  return std::get<VectorField>(std::move(f));
}
inline TensorField read_tensor(const std::filesystem::path& p) {
  AnyField f = read_field(p);
  require(std::holds_alternative<TensorField>(f), "bad-kind",
          p.string() + ": expected a tensor field");
  return std::get<TensorField>(std::move(f));
}

/// One ADGF file per frame plus manifest.json {"dt", "t0", "frames": [...]}.
inline void write_series(const ConcentrationSeries& s,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["dt"] = s.dt();
  manifest["t0"] = s.t0();
  auto& frames = manifest["frames"] = nlohmann::json::array();
  for (int i = 0; i < s.nframes(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.adgf", i);
    write_field(s.frame(i), dir / name);
    frames.push_back(name);
  }
  detail::spew(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline ConcentrationSeries read_series(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::slurp(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad-manifest", dir.string() + ": " + e.what());
  }
  require(manifest.contains("dt") && manifest.contains("t0") &&
              manifest.contains("frames"),
          "bad-manifest", dir.string() + ": manifest missing keys");
  std::vector<ScalarField> frames;
  for (const auto& name : manifest["frames"]) {
    std::filesystem::path p = dir / name.get<std::string>();
    require(std::filesystem::exists(p), "missing-frame",
            "manifest references missing frame " + p.string());
    frames.push_back(read_scalar(p));
  }
  require(frames.size() >= 2, "bad-manifest",
          dir.string() + ": manifest lists fewer than 2 frames");
  return ConcentrationSeries(std::move(frames), manifest["dt"].get<double>(),
                             manifest["t0"].get<double>());
}

}  // namespace adpde

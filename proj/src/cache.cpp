#include "lsd/cache.hpp"

#include <bit>
#include <cstdio>

#include "lsd/binary_io.hpp"
#include "lsd/error.hpp"

namespace lsd {

namespace {

constexpr std::uint32_t kCacheVersion = 1;
constexpr std::string_view kPatchMagic{"LSDPTCH\0", 8};
constexpr std::string_view kBasisMagic{"LSDSPEC\0", 8};
constexpr std::string_view kGeodesicMagic{"LSDGEOD\0", 8};

void put_header(io::Writer& w, std::string_view magic, const TriMesh& mesh) {
  w.put_bytes(magic);
  w.put(kCacheVersion);
  w.put(content_hash(mesh));
  w.put(static_cast<std::uint32_t>(mesh.vertex_count()));
}

std::string seal(io::Writer& w) {
  const std::string& b = w.bytes();
  const std::uint64_t sum = fnv1a(std::as_bytes(std::span(b.data(), b.size())));
  w.put(sum);
  return w.bytes();
}

/// Checks the trailing checksum and header, leaving the reader past the header.
io::Reader open(std::string_view bytes, std::string_view magic, const TriMesh& mesh,
                const std::string& origin) {
  if (bytes.size() < magic.size() + sizeof(std::uint64_t))
    throw ValidationError(origin + ": too short for a cache file");
  const std::string_view body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof stored);
  if (fnv1a(std::as_bytes(std::span(body.data(), body.size()))) != stored)
    throw ValidationError(origin + ": checksum mismatch");
  io::Reader r(body, origin);
  if (r.get_bytes(magic.size()) != magic) throw ValidationError(origin + ": wrong file kind");
  if (const auto v = r.get<std::uint32_t>(); v != kCacheVersion)
    throw ValidationError(origin + ": unsupported cache version " + std::to_string(v));
  if (r.get<std::uint64_t>() != content_hash(mesh))
    throw ValidationError(origin + ": mesh content hash differs");
  if (r.get<std::uint32_t>() != static_cast<std::uint32_t>(mesh.vertex_count()))
    throw ValidationError(origin + ": vertex count differs");
  return r;
}

void expect_end(const io::Reader& r) {
  if (r.remaining() != 0) throw ValidationError(r.origin() + ": trailing bytes");
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string encode_patch_table(const PatchTable& table, const TriMesh& mesh,
                               const PatchOptions& options) {
  io::Writer w;
  put_header(w, kPatchMagic, mesh);
  w.put(options.tau);
  w.put(static_cast<std::uint32_t>(options.k));
  w.put(static_cast<std::uint8_t>(options.variant));
  w.put(static_cast<std::uint8_t>(options.use_lrf));
  for (std::size_t c = 0; c < table.samples.size(); ++c) {
    const NeighborhoodSample& s = table.samples[c];
    w.put(s.center);
    w.put(static_cast<std::uint8_t>(s.padded));
    w.put_array(s.members.data(), s.members.size());
    w.put_array(s.geodesics.data(), s.geodesics.size());
    const Lrf& f = table.frames[c];
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) w.put(f.rotation(r, col));
    w.put(static_cast<std::uint8_t>(f.variant));
    w.put(static_cast<std::uint8_t>(f.reliable));
    w.put(static_cast<std::int32_t>(f.sign_margin));
  }
  return seal(w);
}

PatchTable decode_patch_table(std::string_view bytes, const TriMesh& mesh,
                              const PatchOptions& options, const std::string& origin) {
  io::Reader r = open(bytes, kPatchMagic, mesh, origin);
  if (r.get<double>() != options.tau) throw ValidationError(origin + ": radius differs");
  if (r.get<std::uint32_t>() != options.k) throw ValidationError(origin + ": K differs");
  if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(options.variant))
    throw ValidationError(origin + ": frame variant differs");
  if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(options.use_lrf))
    throw ValidationError(origin + ": frame usage differs");
  PatchTable t;
  t.tau = options.tau;
  t.k = options.k;
  const auto n = static_cast<std::size_t>(mesh.vertex_count());
  t.samples.resize(n);
  t.frames.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    NeighborhoodSample& s = t.samples[c];
    s.center = r.get<Index>();
    if (s.center != static_cast<Index>(c)) throw ValidationError(origin + ": center order broken");
    s.padded = r.get<std::uint8_t>() != 0;
    s.members.resize(t.k);
    s.geodesics.resize(t.k);
    r.get_array(s.members.data(), t.k);
    r.get_array(s.geodesics.data(), t.k);
    for (Index m : s.members)
      if (m < 0 || m >= mesh.vertex_count()) throw ValidationError(origin + ": member out of range");
    Lrf& f = t.frames[c];
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) f.rotation(row, col) = r.get<double>();
    f.variant = static_cast<LrfVariant>(r.get<std::uint8_t>());
    f.reliable = r.get<std::uint8_t>() != 0;
    f.sign_margin = r.get<std::int32_t>();
  }
  expect_end(r);
  realign(t, mesh, options.use_lrf);
  return t;
}

std::string encode_basis(const SpectralBasis& basis, const TriMesh& mesh) {
  io::Writer w;
  put_header(w, kBasisMagic, mesh);
  w.put(static_cast<std::uint32_t>(basis.k()));
  w.put(static_cast<std::uint64_t>(basis.clamped_faces));
  w.put_array(basis.eigenvalues.data(), basis.k());
  // Column-major, as Eigen stores it.
  w.put_array(basis.phi.data(), static_cast<std::size_t>(basis.phi.size()));
  w.put_array(basis.mass.data(), static_cast<std::size_t>(basis.mass.size()));
  return seal(w);
}

SpectralBasis decode_basis(std::string_view bytes, const TriMesh& mesh, std::size_t k,
                           const std::string& origin) {
  io::Reader r = open(bytes, kBasisMagic, mesh, origin);
  if (r.get<std::uint32_t>() != k) throw ValidationError(origin + ": eigenpair count differs");
  const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
  SpectralBasis b;
  b.clamped_faces = static_cast<std::size_t>(r.get<std::uint64_t>());
  b.eigenvalues.resize(static_cast<Eigen::Index>(k));
  b.phi.resize(n, static_cast<Eigen::Index>(k));
  b.mass.resize(n);
  r.get_array(b.eigenvalues.data(), k);
  r.get_array(b.phi.data(), static_cast<std::size_t>(b.phi.size()));
  r.get_array(b.mass.data(), static_cast<std::size_t>(n));
  expect_end(r);
  return b;
}

std::string encode_geodesics(const Eigen::MatrixXd& d, const TriMesh& mesh) {
  io::Writer w;
  put_header(w, kGeodesicMagic, mesh);
  w.put_array(d.data(), static_cast<std::size_t>(d.size()));
  return seal(w);
}

Eigen::MatrixXd decode_geodesics(std::string_view bytes, const TriMesh& mesh,
                                 const std::string& origin) {
  io::Reader r = open(bytes, kGeodesicMagic, mesh, origin);
  const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
  Eigen::MatrixXd d(n, n);
  r.get_array(d.data(), static_cast<std::size_t>(d.size()));
  expect_end(r);
  return d;
}

Eigen::MatrixXd geodesic_matrix(const TriMesh& mesh) {
  const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
  const std::vector<double> flat = all_pairs_geodesics(mesh);
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = flat[static_cast<std::size_t>(i * n + j)];
  return d;
}

CacheStore::CacheStore(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec || !std::filesystem::is_directory(root_))
    throw IoError("cache directory " + root_.string() + " is not usable: " + ec.message());
}

std::filesystem::path CacheStore::patch_path(const TriMesh& mesh, const PatchOptions& o) const {
  return root_ / (hex(content_hash(mesh)) + ".patch." + hex(std::bit_cast<std::uint64_t>(o.tau)) +
                  "." + std::to_string(o.k) + "." + std::to_string(static_cast<int>(o.variant)) +
                  (o.use_lrf ? "" : ".nolrf") + ".bin");
}

std::filesystem::path CacheStore::basis_path(const TriMesh& mesh, std::size_t k) const {
  return root_ / (hex(content_hash(mesh)) + ".spectral." + std::to_string(k) + ".bin");
}

std::filesystem::path CacheStore::geodesics_path(const TriMesh& mesh) const {
  return root_ / (hex(content_hash(mesh)) + ".geodesics.bin");
}

template <typename T, typename Decode, typename Build, typename Encode>
T CacheStore::fetch(const std::filesystem::path& path, Decode decode, Build build, Encode encode) {
  if (std::filesystem::exists(path)) {
    try {
      T value = decode(io::read_file(path), path.string());
      ++hits_;
      return value;
    } catch (const ValidationError&) {
      ++rebuilt_;
    }
  }
  ++misses_;
  T value = build();
  io::write_file_atomic(path, encode(value));
  return value;
}

PatchTable CacheStore::patch_table(const TriMesh& mesh, const PatchOptions& options) {
  return fetch<PatchTable>(
      patch_path(mesh, options),
      [&](const std::string& bytes, const std::string& origin) {
        return decode_patch_table(bytes, mesh, options, origin);
      },
      [&] { return build_patch_table(mesh, options); },
      [&](const PatchTable& t) { return encode_patch_table(t, mesh, options); });
}

SpectralBasis CacheStore::basis(const TriMesh& mesh, std::size_t k) {
  return fetch<SpectralBasis>(
      basis_path(mesh, k),
      [&](const std::string& bytes, const std::string& origin) {
        return decode_basis(bytes, mesh, k, origin);
      },
      [&] { return laplacian_basis(mesh, k); },
      [&](const SpectralBasis& b) { return encode_basis(b, mesh); });
}

Eigen::MatrixXd CacheStore::geodesics(const TriMesh& mesh) {
  return fetch<Eigen::MatrixXd>(
      geodesics_path(mesh),
      [&](const std::string& bytes, const std::string& origin) {
        return decode_geodesics(bytes, mesh, origin);
      },
      [&] { return geodesic_matrix(mesh); },
      [&](const Eigen::MatrixXd& d) { return encode_geodesics(d, mesh); });
}

PreparedMesh prepare_mesh_cached(const TriMesh& mesh, const ModelSpec& spec, CacheStore* store,
                                 int workers) {
  if (!store) return prepare_mesh(mesh, spec, workers);
  return prepare_mesh_with(mesh, spec, workers,
                           [&](const PatchOptions& o) { return store->patch_table(mesh, o); });
}

}  // namespace lsd

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "lsd/netarch.hpp"
#include "lsd/patch.hpp"
#include "lsd/spectral.hpp"

namespace lsd {

// Every cache file is: 8-byte magic, u32 version, u64 mesh content hash,
// u32 vertex count, kind-specific parameters, payload, and a trailing u64
// FNV-1a checksum over everything before it.

std::string encode_patch_table(const PatchTable& table, const TriMesh& mesh,
                               const PatchOptions& options);
/// Samples and frames are read back; the aligned arrays are rebuilt from the
/// mesh. Throws ValidationError on any header, parameter or checksum mismatch.
PatchTable decode_patch_table(std::string_view bytes, const TriMesh& mesh,
                              const PatchOptions& options, const std::string& origin);

std::string encode_basis(const SpectralBasis& basis, const TriMesh& mesh);
SpectralBasis decode_basis(std::string_view bytes, const TriMesh& mesh, std::size_t k,
                           const std::string& origin);

std::string encode_geodesics(const Eigen::MatrixXd& d, const TriMesh& mesh);
Eigen::MatrixXd decode_geodesics(std::string_view bytes, const TriMesh& mesh,
                                 const std::string& origin);

/// Dense all-pairs graph geodesics as a matrix.
Eigen::MatrixXd geodesic_matrix(const TriMesh& mesh);

/// Directory of content-addressed cache entries. Entries that are missing
/// or fail validation are recomputed and rewritten atomically.
class CacheStore {
 public:
  explicit CacheStore(std::filesystem::path root);

  PatchTable patch_table(const TriMesh& mesh, const PatchOptions& options);
  SpectralBasis basis(const TriMesh& mesh, std::size_t k);
  Eigen::MatrixXd geodesics(const TriMesh& mesh);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  /// Entries that existed but were rejected (corrupt, stale or mismatched).
  std::size_t rebuilt() const { return rebuilt_; }
  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path patch_path(const TriMesh& mesh, const PatchOptions& options) const;
  std::filesystem::path basis_path(const TriMesh& mesh, std::size_t k) const;
  std::filesystem::path geodesics_path(const TriMesh& mesh) const;

 private:
  template <typename T, typename Decode, typename Build, typename Encode>
  T fetch(const std::filesystem::path& path, Decode decode, Build build, Encode encode);

  std::filesystem::path root_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
  std::size_t rebuilt_ = 0;
};

/// prepare_mesh with patch tables served from `store` (nullptr: no cache).
PreparedMesh prepare_mesh_cached(const TriMesh& mesh, const ModelSpec& spec, CacheStore* store,
                                 int workers = 1);

}  // namespace lsd

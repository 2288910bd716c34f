#ifndef FORESTNAV_MESH_HPP
#define FORESTNAV_MESH_HPP

#include <array>
#include <string>
#include <vector>

#include "forestnav/geometry.hpp"

namespace forestnav {

/// Indexed triangle mesh used for ground-truth surfaces and occupancy
/// surface extraction. Vertices are world-frame unless stated otherwise.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return vertices.empty(); }

  void append(const TriangleMesh& other);
  void transform(const Pose& T);

  /// ASCII PLY export. Throws std::runtime_error on I/O failure.
  void save_ply(const std::string& path) const;

  /// Minimal ASCII PLY reader for meshes written by save_ply.
  /// Throws std::runtime_error on malformed input.
  static TriangleMesh load_ply(const std::string& path);
};

}  // namespace forestnav

#endif  // FORESTNAV_MESH_HPP

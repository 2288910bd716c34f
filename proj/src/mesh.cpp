#include "forestnav/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace forestnav {

void TriangleMesh::append(const TriangleMesh& other) {
  const int offset = static_cast<int>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  triangles.reserve(triangles.size() + other.triangles.size());
  for (const auto& t : other.triangles) {
    triangles.push_back({t[0] + offset, t[1] + offset, t[2] + offset});
  }
}

void TriangleMesh::transform(const Pose& T) {
  for (auto& v : vertices) {
    v = T * v;
  }
}

void TriangleMesh::save_ply(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) {
    throw std::runtime_error("save_ply: cannot open " + path);
  }
  std::fprintf(f,
               "ply\nformat ascii 1.0\nelement vertex %zu\n"
               "property float x\nproperty float y\nproperty float z\n"
               "element face %zu\nproperty list uchar int vertex_indices\nend_header\n",
               vertices.size(), triangles.size());
  for (const auto& v : vertices) {
    std::fprintf(f, "%.6f %.6f %.6f\n", v.x(), v.y(), v.z());
  }
  for (const auto& t : triangles) {
    std::fprintf(f, "3 %d %d %d\n", t[0], t[1], t[2]);
  }
  if (std::fclose(f) != 0) {
    throw std::runtime_error("save_ply: write failed for " + path);
  }
}

TriangleMesh TriangleMesh::load_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_ply: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line) || line != "ply") {
    throw std::runtime_error("load_ply: not a PLY file: " + path);
  }
  size_t n_vertices = 0;
  size_t n_faces = 0;
  bool header_done = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "element") {
      std::string what;
      size_t count = 0;
      ls >> what >> count;
      if (what == "vertex") n_vertices = count;
      if (what == "face") n_faces = count;
    } else if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") {
        throw std::runtime_error("load_ply: only ascii PLY supported: " + path);
      }
    } else if (tok == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) {
    throw std::runtime_error("load_ply: truncated header: " + path);
  }
  TriangleMesh mesh;
  mesh.vertices.resize(n_vertices);
  for (size_t i = 0; i < n_vertices; ++i) {
    if (!(in >> mesh.vertices[i].x() >> mesh.vertices[i].y() >> mesh.vertices[i].z())) {
      throw std::runtime_error("load_ply: truncated vertex data: " + path);
    }
  }
  mesh.triangles.resize(n_faces);
  for (size_t i = 0; i < n_faces; ++i) {
    int n = 0;
    auto& t = mesh.triangles[i];
    if (!(in >> n >> t[0] >> t[1] >> t[2]) || n != 3) {
      throw std::runtime_error("load_ply: bad face record: " + path);
    }
    for (int k = 0; k < 3; ++k) {
      if (t[k] < 0 || t[k] >= static_cast<int>(n_vertices)) {
        throw std::runtime_error("load_ply: face index out of range: " + path);
      }
    }
  }
  return mesh;
}

}  // namespace forestnav

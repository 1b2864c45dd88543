#pragma once

// Planar triangulations and the per-edge diamond geometry derived from them.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace netflow::mesh {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

using VertexId = std::uint32_t;
using Triangle = std::array<VertexId, 3>;

inline constexpr std::uint32_t kNoTriangle = std::numeric_limits<std::uint32_t>::max();

struct Edge {
  VertexId v0;  // v0 < v1
  VertexId v1;
  std::array<std::uint32_t, 2> triangles{kNoTriangle, kNoTriangle};
  bool boundary() const noexcept { return triangles[1] == kNoTriangle; }
};

struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;
};

/// Validated triangulation: counter-clockwise triangles, manifold edges, connected.
class TriMesh {
 public:
  /// Validates and derives edges. Clockwise triangles are reoriented; a message
  /// per reoriented triangle is appended to `warnings` (or written to std::clog).
  static TriMesh from_triangles(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                                std::vector<std::string>* warnings = nullptr);

  std::span<const Vec2> vertices() const noexcept { return vertices_; }
  std::span<const Triangle> triangles() const noexcept { return triangles_; }
  std::span<const Edge> edges() const noexcept { return edges_; }

  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t triangle_count() const noexcept { return triangles_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  /// Global edge index of local edge k of triangle t, joining corners k and (k+1)%3.
  std::uint32_t triangle_edge(std::size_t t, int k) const noexcept { return tri_edges_[t][k]; }

  bool boundary_vertex(std::size_t v) const noexcept { return boundary_vertex_[v] != 0; }
  bool boundary_edge(std::size_t e) const noexcept { return edges_[e].boundary(); }

  double area(std::size_t t) const noexcept { return areas_[t]; }
  std::span<const double> areas() const noexcept { return areas_; }
  double total_area() const noexcept { return total_area_; }
  Vec2 centroid(std::size_t t) const noexcept;

  /// Largest edge length.
  double h() const noexcept { return h_; }

  /// Gradients of the three P1 hat functions of triangle t (constant on t).
  std::array<Vec2, 3> hat_gradients(std::size_t t) const noexcept;

  /// Integral of each hat function over the mesh (lumped mass).
  std::vector<double> lumped_mass() const;

 private:
  std::vector<Vec2> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> edges_;
  std::vector<std::array<std::uint32_t, 3>> tri_edges_;
  std::vector<char> boundary_vertex_;
  std::vector<double> areas_;
  double total_area_ = 0.0;
  double h_ = 0.0;
};

/// Uniform criss-cross triangulation of `rect`: each cell is split by one
/// diagonal, alternating with the parity of (i + j).
TriMesh build_structured_triangulation(std::size_t nx, std::size_t ny, const Rect& rect = {});

/// Per-edge geometry. Each triangle contributes one third of its area to each
/// of its edges, so the volumes partition the domain.
struct DiamondMap {
  std::vector<double> volume;
  std::vector<double> length;
  std::vector<Vec2> direction;  // unit vector (x_v0 - x_v1) / L
};

DiamondMap compute_diamonds(const TriMesh& mesh);

TriMesh load_mesh(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
void save_mesh(const TriMesh& mesh, const std::filesystem::path& path);

}  // namespace netflow::mesh

#include "netflow/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string_view>

#include "netflow/error.hpp"
#include "netflow/io.hpp"

namespace netflow::mesh {

Vec2 TriMesh::centroid(std::size_t t) const noexcept {
  const Triangle& tri = triangles_[t];
  const Vec2 s = vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]];
  return (1.0 / 3.0) * s;
}

std::array<Vec2, 3> TriMesh::hat_gradients(std::size_t t) const noexcept {
  const Triangle& tri = triangles_[t];
  const Vec2 p0 = vertices_[tri[0]];
  const Vec2 p1 = vertices_[tri[1]];
  const Vec2 p2 = vertices_[tri[2]];
  const double inv = 1.0 / (2.0 * areas_[t]);
  return {Vec2{(p1.y - p2.y) * inv, (p2.x - p1.x) * inv},
          Vec2{(p2.y - p0.y) * inv, (p0.x - p2.x) * inv},
          Vec2{(p0.y - p1.y) * inv, (p1.x - p0.x) * inv}};
}

std::vector<double> TriMesh::lumped_mass() const {
  std::vector<double> w(vertices_.size(), 0.0);
  for (std::size_t t = 0; t < triangles_.size(); ++t)
    for (VertexId v : triangles_[t]) w[v] += areas_[t] / 3.0;
  return w;
}

TriMesh TriMesh::from_triangles(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                                std::vector<std::string>* warnings) {
  if (vertices.empty() || triangles.empty())
    throw ValidationError("mesh needs at least one vertex and one triangle");
  const std::size_t nv = vertices.size();
  for (const Vec2& p : vertices)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError("non-finite vertex coordinate");

  TriMesh m;
  m.areas_.resize(triangles.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    Triangle& tri = triangles[t];
    for (VertexId v : tri)
      if (v >= nv)
        throw ValidationError("triangle " + std::to_string(t) + " references vertex " +
                              std::to_string(v) + " but there are only " +
                              std::to_string(nv) + " vertices");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw ValidationError("triangle " + std::to_string(t) + " repeats a vertex");
    double signed2 = cross(vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]);
    if (signed2 < 0.0) {
      std::swap(tri[1], tri[2]);
      signed2 = -signed2;
      const std::string msg = "triangle " + std::to_string(t) + " was clockwise; reoriented";
      if (warnings)
        warnings->push_back(msg);
      else
        std::clog << "netflow: warning: " << msg << '\n';
    }
    if (!(signed2 > 0.0))
      throw InvalidGeometry("triangle " + std::to_string(t) + " is degenerate (zero area)");
    m.areas_[t] = 0.5 * signed2;
  }

  std::map<std::pair<VertexId, VertexId>, std::uint32_t> index;
  m.tri_edges_.resize(triangles.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      VertexId a = triangles[t][k];
      VertexId b = triangles[t][(k + 1) % 3];
      if (a > b) std::swap(a, b);
      auto [it, inserted] = index.try_emplace({a, b}, static_cast<std::uint32_t>(m.edges_.size()));
      if (inserted) {
        m.edges_.push_back(Edge{a, b, {static_cast<std::uint32_t>(t), kNoTriangle}});
      } else {
        Edge& e = m.edges_[it->second];
        if (e.triangles[1] != kNoTriangle)
          throw ValidationError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                ") is shared by more than two triangles");
        e.triangles[1] = static_cast<std::uint32_t>(t);
      }
      m.tri_edges_[t][k] = it->second;
    }
  }

  // Connectivity of the triangle adjacency graph.
  std::vector<char> seen(triangles.size(), 0);
  std::vector<std::uint32_t> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::uint32_t t = stack.back();
    stack.pop_back();
    for (int k = 0; k < 3; ++k) {
      const Edge& e = m.edges_[m.tri_edges_[t][k]];
      const std::uint32_t other = e.triangles[0] == t ? e.triangles[1] : e.triangles[0];
      if (other != kNoTriangle && !seen[other]) {
        seen[other] = 1;
        ++reached;
        stack.push_back(other);
      }
    }
  }
  if (reached != triangles.size())
    throw ValidationError("mesh is not connected: " + std::to_string(triangles.size() - reached) +
                          " triangles unreachable from triangle 0");

  std::vector<char> used(nv, 0);
  for (const Triangle& tri : triangles)
    for (VertexId v : tri) used[v] = 1;
  for (std::size_t v = 0; v < nv; ++v)
    if (!used[v]) throw ValidationError("vertex " + std::to_string(v) + " belongs to no triangle");

  m.boundary_vertex_.assign(nv, 0);
  for (const Edge& e : m.edges_) {
    if (e.boundary()) {
      m.boundary_vertex_[e.v0] = 1;
      m.boundary_vertex_[e.v1] = 1;
    }
    m.h_ = std::max(m.h_, norm(vertices[e.v0] - vertices[e.v1]));
  }
  for (double a : m.areas_) m.total_area_ += a;

  m.vertices_ = std::move(vertices);
  m.triangles_ = std::move(triangles);
  return m;
}

TriMesh build_structured_triangulation(std::size_t nx, std::size_t ny, const Rect& rect) {
  if (nx < 1 || ny < 1) throw PreconditionError("cell counts must be at least 1");
  if (!(rect.x1 > rect.x0) || !(rect.y1 > rect.y0) || !std::isfinite(rect.x1 - rect.x0) ||
      !std::isfinite(rect.y1 - rect.y0))
    throw InvalidGeometry("rectangle is degenerate");
  std::vector<Vec2> vertices;
  vertices.reserve((nx + 1) * (ny + 1));
  const double dx = (rect.x1 - rect.x0) / static_cast<double>(nx);
  const double dy = (rect.y1 - rect.y0) / static_cast<double>(ny);
  for (std::size_t j = 0; j <= ny; ++j)
    for (std::size_t i = 0; i <= nx; ++i) {
      // Snap the far edges exactly onto the rectangle.
      const double x = i == nx ? rect.x1 : rect.x0 + static_cast<double>(i) * dx;
      const double y = j == ny ? rect.y1 : rect.y0 + static_cast<double>(j) * dy;
      vertices.push_back({x, y});
    }
  auto id = [nx](std::size_t i, std::size_t j) { return static_cast<VertexId>(j * (nx + 1) + i); };
  std::vector<Triangle> triangles;
  triangles.reserve(2 * nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const VertexId v00 = id(i, j), v10 = id(i + 1, j), v01 = id(i, j + 1), v11 = id(i + 1, j + 1);
      if ((i + j) % 2 == 0) {
        triangles.push_back({v00, v10, v11});
        triangles.push_back({v00, v11, v01});
      } else {
        triangles.push_back({v00, v10, v01});
        triangles.push_back({v10, v11, v01});
      }
    }
  return TriMesh::from_triangles(std::move(vertices), std::move(triangles));
}

DiamondMap compute_diamonds(const TriMesh& mesh) {
  DiamondMap d;
  const std::size_t ne = mesh.edge_count();
  d.volume.assign(ne, 0.0);
  d.length.resize(ne);
  d.direction.resize(ne);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
    for (int k = 0; k < 3; ++k) d.volume[mesh.triangle_edge(t, k)] += mesh.area(t) / 3.0;
  const auto verts = mesh.vertices();
  for (std::size_t e = 0; e < ne; ++e) {
    const Edge& edge = mesh.edges()[e];
    const Vec2 delta = verts[edge.v0] - verts[edge.v1];
    d.length[e] = norm(delta);
    d.direction[e] = (1.0 / d.length[e]) * delta;
  }
  return d;
}

namespace {

std::string_view strip(std::string_view s) {
  if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
T parse_number(std::string_view tok, std::size_t line, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError("invalid " + std::string(what) + " '" + std::string(tok) + "'", line);
  return value;
}

}  // namespace

TriMesh load_mesh(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mesh file " + path.string(), 0);

  std::vector<std::pair<std::size_t, std::string>> lines;
  {
    std::string raw;
    std::size_t no = 0;
    while (std::getline(in, raw)) {
      ++no;
      const std::string_view s = strip(raw);
      if (!s.empty()) lines.emplace_back(no, std::string(s));
    }
  }
  std::size_t cursor = 0;
  auto header = [&](std::string_view keyword) -> std::size_t {
    if (cursor >= lines.size())
      throw ParseError("missing '" + std::string(keyword) + " N' header", 0);
    const auto& [no, text] = lines[cursor++];
    const auto tok = split_ws(text);
    if (tok.size() != 2 || tok[0] != keyword)
      throw ParseError("expected '" + std::string(keyword) + " N'", no);
    return parse_number<std::size_t>(tok[1], no, "count");
  };

  const std::size_t nv = header("vertices");
  std::vector<Vec2> vertices;
  vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    if (cursor >= lines.size()) throw ParseError("unexpected end of file in vertex block", 0);
    const auto& [no, text] = lines[cursor++];
    const auto tok = split_ws(text);
    if (tok.size() != 2) throw ParseError("expected 'x y'", no);
    vertices.push_back({parse_number<double>(tok[0], no, "coordinate"),
                        parse_number<double>(tok[1], no, "coordinate")});
  }
  const std::size_t nt = header("triangles");
  std::vector<Triangle> triangles;
  triangles.reserve(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    if (cursor >= lines.size()) throw ParseError("unexpected end of file in triangle block", 0);
    const auto& [no, text] = lines[cursor++];
    const auto tok = split_ws(text);
    if (tok.size() != 3) throw ParseError("expected 'i j k'", no);
    Triangle tri{};
    for (int k = 0; k < 3; ++k) {
      const auto v = parse_number<std::uint64_t>(tok[k], no, "vertex index");
      if (v >= nv)
        throw ParseError("vertex index " + std::to_string(v) + " out of range [0, " +
                             std::to_string(nv) + ")",
                         no);
      tri[k] = static_cast<VertexId>(v);
    }
    triangles.push_back(tri);
  }
  if (cursor != lines.size())
    throw ParseError("trailing content after triangle block", lines[cursor].first);
  return TriMesh::from_triangles(std::move(vertices), std::move(triangles), warnings);
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write mesh file " + path.string());
  out << "vertices " << mesh.vertex_count() << '\n';
  for (const Vec2& p : mesh.vertices()) out << io::format_double(p.x) << ' ' << io::format_double(p.y) << '\n';
  out << "triangles " << mesh.triangle_count() << '\n';
  for (const Triangle& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw Error("write failed for mesh file " + path.string());
}

}  // namespace netflow::mesh

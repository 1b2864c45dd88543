#pragma once

// Symmetric 2x2 tensors, tensor fields on triangulations, the edge-to-tensor
// lift and the power-law metabolic cost.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "netflow/mesh.hpp"

namespace netflow::tensor {

using mesh::Vec2;

/// [[a, b], [b, c]]
struct SymTensor2 {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  static constexpr SymTensor2 identity() { return {1.0, 0.0, 1.0}; }
  static constexpr SymTensor2 outer(Vec2 v) { return {v.x * v.x, v.x * v.y, v.y * v.y}; }

  constexpr double trace() const { return a + c; }
  constexpr double det() const { return a * c - b * b; }
  constexpr Vec2 apply(Vec2 v) const { return {a * v.x + b * v.y, b * v.x + c * v.y}; }

  friend constexpr SymTensor2 operator+(SymTensor2 x, SymTensor2 y) {
    return {x.a + y.a, x.b + y.b, x.c + y.c};
  }
  friend constexpr SymTensor2 operator-(SymTensor2 x, SymTensor2 y) {
    return {x.a - y.a, x.b - y.b, x.c - y.c};
  }
  friend constexpr SymTensor2 operator*(double s, SymTensor2 x) { return {s * x.a, s * x.b, s * x.c}; }
  SymTensor2& operator+=(SymTensor2 y) { return *this = *this + y; }
  friend constexpr bool operator==(SymTensor2, SymTensor2) = default;
};

/// Frobenius inner product A : B.
constexpr double frobenius_dot(SymTensor2 x, SymTensor2 y) {
  return x.a * y.a + 2.0 * x.b * y.b + x.c * y.c;
}
inline double frobenius(SymTensor2 t) { return std::sqrt(frobenius_dot(t, t)); }

/// Quadratic form v^T T v.
constexpr double quadratic(SymTensor2 t, Vec2 v) { return t.a * v.x * v.x + 2.0 * t.b * v.x * v.y + t.c * v.y * v.y; }

struct Eigen2 {
  double lambda1;  // lambda1 >= lambda2
  double lambda2;
  Vec2 v1;  // orthonormal eigenvectors
  Vec2 v2;
};

Eigen2 eig(SymTensor2 t);
double min_eigenvalue(SymTensor2 t);

/// Q diag(l1, l2) Q^T for the eigenpairs in `e`.
SymTensor2 reconstruct(const Eigen2& e);

/// Power-law metabolic cost M(s) = s^gamma / gamma.
class MetabolicLaw {
 public:
  explicit MetabolicLaw(double gamma, double eps0 = 1e-12);

  double gamma() const noexcept { return gamma_; }
  double eps0() const noexcept { return eps0_; }

  double M(double s) const;
  double dM(double s) const;   // s^(gamma-1)
  double d2M(double s) const;  // (gamma-1) s^(gamma-2)
  double m(double s) const;    // M'(s)/s = s^(gamma-2)

 private:
  double gamma_;
  double eps0_;
};

struct MetabolicForce {
  SymTensor2 force;
  /// gamma < 1 and |T| <= eps0: the force is singular, the tensor is treated as extinct.
  bool frozen = false;
};

/// m(max(|T|, eps0)) T, extended by 0 at T = 0 when gamma >= 1.
MetabolicForce metabolic_force(SymTensor2 t, const MetabolicLaw& law);

/// Piecewise constant tensor field on a triangulation, stored per piece.
///
/// With one piece per triangle this is an ordinary cell field. With three
/// pieces, piece k of triangle t is the sub-triangle spanned by local edge k
/// (corners k and k+1) and the centroid, so every piece carries area/3. The
/// same three-slot layout also holds point samples of a smooth field at the
/// three equal-weight Gauss points, for which the same per-piece weight applies.
struct CellTensorField {
  std::size_t pieces = 1;
  std::vector<SymTensor2> values;  // index t * pieces + k

  CellTensorField() = default;
  CellTensorField(std::size_t triangle_count, std::size_t pieces_per_triangle, SymTensor2 fill = {})
      : pieces(pieces_per_triangle), values(triangle_count * pieces_per_triangle, fill) {}

  std::size_t triangle_count() const noexcept { return pieces ? values.size() / pieces : 0; }
  const SymTensor2& at(std::size_t t, std::size_t k) const { return values[t * pieces + k]; }
  SymTensor2& at(std::size_t t, std::size_t k) { return values[t * pieces + k]; }

  /// Area-weighted mean over the pieces of triangle t.
  SymTensor2 mean(std::size_t t) const;
};

using NodalTensorField = std::vector<SymTensor2>;

/// Lift of edge conductivities: piece k of triangle t holds C_e e (x) e for the
/// global edge e of local edge k and its unit direction.
CellTensorField lift_Qh(const mesh::TriMesh& mesh, const mesh::DiamondMap& diamonds,
                        std::span<const double> C);

/// Cell field with the mean of the three vertex tensors on each triangle.
CellTensorField nodal_to_cell(const mesh::TriMesh& mesh, std::span<const SymTensor2> nodal);

/// Smallest eigenvalue over all pieces (uses the active SIMD table).
double min_eigenvalue(const CellTensorField& field);
double min_eigenvalue(std::span<const SymTensor2> values);

}  // namespace netflow::tensor

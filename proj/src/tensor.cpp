#include "netflow/tensor.hpp"

#include <algorithm>
#include <limits>

#include "netflow/error.hpp"
#include "netflow/simd/kernels.hpp"

namespace netflow::tensor {

Eigen2 eig(SymTensor2 t) {
  const double mid = 0.5 * (t.a + t.c);
  const double half_diff = 0.5 * (t.a - t.c);
  const double radius = std::hypot(half_diff, t.b);
  Eigen2 e{mid + radius, mid - radius, {1.0, 0.0}, {0.0, 1.0}};
  if (radius > 0.0) {
    const double theta = 0.5 * std::atan2(t.b, half_diff);
    e.v1 = {std::cos(theta), std::sin(theta)};
    e.v2 = {-e.v1.y, e.v1.x};
  }
  return e;
}

double min_eigenvalue(SymTensor2 t) {
  return 0.5 * (t.a + t.c) - std::hypot(0.5 * (t.a - t.c), t.b);
}

SymTensor2 reconstruct(const Eigen2& e) {
  return e.lambda1 * SymTensor2::outer(e.v1) + e.lambda2 * SymTensor2::outer(e.v2);
}

MetabolicLaw::MetabolicLaw(double gamma, double eps0) : gamma_(gamma), eps0_(eps0) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw PreconditionError("gamma must be positive");
  if (!(eps0 >= 0.0)) throw PreconditionError("eps0 must be nonnegative");
}

double MetabolicLaw::M(double s) const { return std::pow(s, gamma_) / gamma_; }

double MetabolicLaw::dM(double s) const {
  if (gamma_ == 1.0) return 1.0;
  return std::pow(s, gamma_ - 1.0);
}

double MetabolicLaw::d2M(double s) const {
  if (gamma_ == 1.0) return 0.0;
  if (gamma_ == 2.0) return 1.0;
  return (gamma_ - 1.0) * std::pow(s, gamma_ - 2.0);
}

double MetabolicLaw::m(double s) const {
  if (gamma_ == 2.0) return 1.0;
  return std::pow(s, gamma_ - 2.0);
}

MetabolicForce metabolic_force(SymTensor2 t, const MetabolicLaw& law) {
  const double norm = frobenius(t);
  if (law.gamma() < 1.0 && norm <= law.eps0()) return {SymTensor2{}, true};
  if (norm == 0.0) return {SymTensor2{}, false};
  return {law.m(std::max(norm, law.eps0())) * t, false};
}

SymTensor2 CellTensorField::mean(std::size_t t) const {
  SymTensor2 s;
  for (std::size_t k = 0; k < pieces; ++k) s += values[t * pieces + k];
  return (1.0 / static_cast<double>(pieces)) * s;
}

CellTensorField lift_Qh(const mesh::TriMesh& mesh, const mesh::DiamondMap& diamonds,
                        std::span<const double> C) {
  if (C.size() != mesh.edge_count()) throw ValidationError("conductivity vector length != edge count");
  CellTensorField field(mesh.triangle_count(), 3);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
    for (int k = 0; k < 3; ++k) {
      const std::uint32_t e = mesh.triangle_edge(t, k);
      if (C[e] < 0.0) throw PreconditionError("conductivities must be nonnegative");
      field.at(t, static_cast<std::size_t>(k)) = C[e] * SymTensor2::outer(diamonds.direction[e]);
    }
  return field;
}

CellTensorField nodal_to_cell(const mesh::TriMesh& mesh, std::span<const SymTensor2> nodal) {
  if (nodal.size() != mesh.vertex_count()) throw ValidationError("nodal field length != vertex count");
  CellTensorField field(mesh.triangle_count(), 1);
  const auto tris = mesh.triangles();
  for (std::size_t t = 0; t < tris.size(); ++t)
    field.values[t] = (1.0 / 3.0) * (nodal[tris[t][0]] + nodal[tris[t][1]] + nodal[tris[t][2]]);
  return field;
}

double min_eigenvalue(std::span<const SymTensor2> values) {
  if (values.empty()) return std::numeric_limits<double>::infinity();
  std::vector<double> a(values.size()), b(values.size()), c(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    a[i] = values[i].a;
    b[i] = values[i].b;
    c[i] = values[i].c;
  }
  return simd::active().min_sym2_eigenvalue(a, b, c);
}

double min_eigenvalue(const CellTensorField& field) { return min_eigenvalue(field.values); }

}  // namespace netflow::tensor

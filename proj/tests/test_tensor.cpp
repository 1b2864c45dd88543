#include <doctest.h>

#include <cmath>
#include <numbers>

#include "netflow/error.hpp"
#include "netflow/mesh.hpp"
#include "netflow/rng.hpp"
#include "netflow/tensor.hpp"

using namespace netflow;
using namespace netflow::tensor;

namespace {

double max_abs_diff(SymTensor2 x, SymTensor2 y) {
  return std::max({std::abs(x.a - y.a), std::abs(x.b - y.b), std::abs(x.c - y.c)});
}

}  // namespace

TEST_CASE("spectral decomposition of simple tensors") {
  const auto id = eig(SymTensor2::identity());
  CHECK(id.lambda1 == 1.0);
  CHECK(id.lambda2 == 1.0);
  CHECK(frobenius(SymTensor2::identity()) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  const SymTensor2 t{2.0, 0.0, 0.0};
  const auto e = eig(t);
  CHECK(e.lambda1 == 2.0);
  CHECK(e.lambda2 == 0.0);
  CHECK(frobenius(t) == 2.0);
  CHECK(std::abs(e.v1.x) == doctest::Approx(1.0));

  // [[1, 1], [1, 1]] has eigenvalues 2 and 0 along (1, 1) and (1, -1).
  const auto d = eig(SymTensor2{1.0, 1.0, 1.0});
  CHECK(d.lambda1 == doctest::Approx(2.0));
  CHECK(d.lambda2 == doctest::Approx(0.0));
  CHECK(std::abs(d.v1.x) == doctest::Approx(std::sqrt(0.5)));
  CHECK(d.v1.x * d.v1.y > 0.0);

  CHECK(frobenius(SymTensor2{1.0, 2.0, 3.0}) == doctest::Approx(std::sqrt(1.0 + 8.0 + 9.0)));
  CHECK(frobenius_dot(SymTensor2{1, 2, 3}, SymTensor2{4, 5, 6}) == 4.0 + 20.0 + 18.0);
  CHECK(quadratic(SymTensor2{1, 2, 3}, {1.0, -1.0}) == 1.0 - 4.0 + 3.0);
}

TEST_CASE("random tensors are reconstructed from their eigenpairs") {
  Lcg64 rng(11);
  for (int k = 0; k < 1000; ++k) {
    const SymTensor2 t{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const auto e = eig(t);
    CHECK(e.lambda1 >= e.lambda2);
    CHECK(std::abs(mesh::dot(e.v1, e.v2)) < 1e-15);
    CHECK(max_abs_diff(reconstruct(e), t) <= 1e-12);
    CHECK(e.lambda1 + e.lambda2 == doctest::Approx(t.trace()).epsilon(1e-12));
    CHECK(e.lambda2 == doctest::Approx(min_eigenvalue(t)).epsilon(1e-14));
  }
}

TEST_CASE("metabolic law values") {
  const MetabolicLaw quad(2.0);
  CHECK(quad.M(3.0) == 4.5);
  CHECK(quad.dM(3.0) == 3.0);
  CHECK(quad.d2M(3.0) == 1.0);
  CHECK(quad.m(3.0) == 1.0);

  const MetabolicLaw lin(1.0);
  CHECK(lin.M(2.0) == 2.0);
  CHECK(lin.dM(2.0) == 1.0);
  CHECK(lin.d2M(2.0) == 0.0);
  CHECK(lin.m(2.0) == 0.5);

  const MetabolicLaw half(0.5);
  CHECK(half.M(4.0) == doctest::Approx(4.0));
  CHECK(half.dM(4.0) == doctest::Approx(0.5));
  CHECK(half.d2M(4.0) == doctest::Approx(-0.5 * std::pow(4.0, -1.5)));
  CHECK(half.m(4.0) == doctest::Approx(std::pow(4.0, -1.5)));

  CHECK_THROWS_AS(MetabolicLaw(-1.0), PreconditionError);
  CHECK_THROWS_AS(MetabolicLaw(0.0), PreconditionError);
}

TEST_CASE("metabolic force examples") {
  Lcg64 rng(5);
  const MetabolicLaw quad(2.0);
  for (int k = 0; k < 20; ++k) {
    const SymTensor2 t{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CHECK(metabolic_force(t, quad).force == t);
  }
  const auto f = metabolic_force(SymTensor2{2.0, 0.0, 0.0}, MetabolicLaw(1.0));
  CHECK(f.force.a == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f.force.b == 0.0);
  CHECK(f.force.c == 0.0);
  CHECK_FALSE(f.frozen);

  const auto z = metabolic_force(SymTensor2{}, MetabolicLaw(1.5));
  CHECK(z.force == SymTensor2{});
  CHECK_FALSE(z.frozen);

  const auto ext = metabolic_force(SymTensor2{}, MetabolicLaw(0.5));
  CHECK(ext.frozen);
  CHECK(ext.force == SymTensor2{});
}

TEST_CASE("metabolic force is homogeneous and preserves eigenvectors") {
  Lcg64 rng(9);
  for (double gamma : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    const MetabolicLaw law(gamma);
    for (int k = 0; k < 50; ++k) {
      const SymTensor2 t{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const double alpha = rng.uniform(0.1, 5.0);
      const auto f1 = metabolic_force(alpha * t, law).force;
      const auto f0 = metabolic_force(t, law).force;
      const SymTensor2 want = std::pow(alpha, gamma - 1.0) * f0;
      CHECK(max_abs_diff(f1, want) <= 1e-12 * std::max(1.0, frobenius(want)));
      // Scalar multiple of t: the commutator vanishes.
      const double comm = f0.a * t.b + f0.b * t.c - (t.a * f0.b + t.b * f0.c);
      CHECK(std::abs(comm) <= 1e-12 * std::max(1.0, frobenius(f0) * frobenius(t)));
    }
  }
}

TEST_CASE("lift of edge conductivities") {
  const auto m = mesh::build_structured_triangulation(1, 1);
  const auto d = mesh::compute_diamonds(m);
  std::vector<double> C(m.edge_count());
  for (std::size_t e = 0; e < C.size(); ++e) C[e] = 0.5 + static_cast<double>(e);
  const auto field = lift_Qh(m, d, C);
  CHECK(field.pieces == 3);
  CHECK(field.triangle_count() == m.triangle_count());
  for (std::size_t t = 0; t < m.triangle_count(); ++t)
    for (std::size_t k = 0; k < 3; ++k) {
      const auto e = m.triangle_edge(t, static_cast<int>(k));
      const SymTensor2 q = field.at(t, k);
      const mesh::Vec2 dir = d.direction[e];
      if (std::abs(dir.y) < 1e-15) {
        CHECK(q.a == doctest::Approx(C[e]));
        CHECK(q.b == 0.0);
        CHECK(q.c == 0.0);
      } else if (std::abs(dir.x) > 1e-15) {
        // diagonal edge of the unit square
        CHECK(q.a == doctest::Approx(0.5 * C[e]));
        CHECK(std::abs(q.b) == doctest::Approx(0.5 * C[e]));
        CHECK(q.c == doctest::Approx(0.5 * C[e]));
      }
    }
}

TEST_CASE("lift is rank one, positive semidefinite and norm preserving") {
  Lcg64 rng(13);
  const auto m = mesh::build_structured_triangulation(5, 4, mesh::Rect{0, 0, 1.3, 0.7});
  const auto d = mesh::compute_diamonds(m);
  std::vector<double> C(m.edge_count());
  for (auto& c : C) c = rng.uniform(0.1, 2.0);
  const auto field = lift_Qh(m, d, C);
  for (std::size_t t = 0; t < m.triangle_count(); ++t)
    for (std::size_t k = 0; k < 3; ++k) {
      const auto e = m.triangle_edge(t, static_cast<int>(k));
      const auto ev = eig(field.at(t, k));
      CHECK(std::abs(ev.lambda2) <= 1e-14 * C[e]);
      CHECK(ev.lambda1 == doctest::Approx(C[e]).epsilon(1e-14));
      CHECK(frobenius(field.at(t, k)) == doctest::Approx(C[e]).epsilon(1e-14));
    }
  CHECK(min_eigenvalue(field) >= -1e-14);
  std::vector<double> negative = C;
  negative[3] = -1.0;
  CHECK_THROWS_AS(lift_Qh(m, d, negative), PreconditionError);
}

TEST_CASE("nodal to cell averaging and field mean") {
  const auto m = mesh::build_structured_triangulation(2, 2);
  NodalTensorField nodal(m.vertex_count());
  for (std::size_t v = 0; v < nodal.size(); ++v) {
    const auto x = m.vertices()[v];
    nodal[v] = {x.x, x.y, 1.0 + x.x * x.y};
  }
  const auto cell = nodal_to_cell(m, nodal);
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const auto c = m.centroid(t);
    // linear components are reproduced exactly at the centroid
    CHECK(cell.values[t].a == doctest::Approx(c.x));
    CHECK(cell.values[t].b == doctest::Approx(c.y));
    CHECK(cell.mean(t) == cell.values[t]);
  }
  CellTensorField three(1, 3);
  three.at(0, 0) = {3, 0, 0};
  three.at(0, 1) = {0, 3, 0};
  three.at(0, 2) = {0, 0, 3};
  CHECK(three.mean(0) == SymTensor2{1, 1, 1});
  CHECK(min_eigenvalue(three) == doctest::Approx(-3.0));
}

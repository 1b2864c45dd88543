#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <numeric>

#include "netflow/error.hpp"
#include "netflow/fem.hpp"
#include "netflow/network.hpp"
#include "netflow/rng.hpp"

using namespace netflow;
using namespace netflow::fem;
using std::numbers::pi;

namespace {

CellTensorField zero_field(const mesh::TriMesh& m) { return CellTensorField(m.triangle_count(), 1); }

// L2 error of the P1 function against `exact`, integrated with the 3-point rule
// on the four midpoint sub-triangles of every triangle.
double l2_error(const mesh::TriMesh& m, const std::vector<double>& P, const std::function<double(Vec2)>& exact) {
  double err = 0.0;
  const auto v = m.vertices();
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const auto tri = m.triangles()[t];
    const Vec2 x[3] = {v[tri[0]], v[tri[1]], v[tri[2]]};
    // Barycentric corners of the four sub-triangles.
    const double sub[4][3][3] = {
        {{1, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}},
        {{0.5, 0.5, 0}, {0, 1, 0}, {0, 0.5, 0.5}},
        {{0.5, 0, 0.5}, {0, 0.5, 0.5}, {0, 0, 1}},
        {{0.5, 0.5, 0}, {0, 0.5, 0.5}, {0.5, 0, 0.5}},
    };
    for (const auto& s : sub)
      for (int q = 0; q < 3; ++q) {
        double lam[3] = {0, 0, 0};
        for (int c = 0; c < 3; ++c) {
          const double w = (c == q) ? 2.0 / 3.0 : 1.0 / 6.0;
          for (int i = 0; i < 3; ++i) lam[i] += w * s[c][i];
        }
        const Vec2 p = lam[0] * x[0] + lam[1] * x[1] + lam[2] * x[2];
        const double ph = lam[0] * P[tri[0]] + lam[1] * P[tri[1]] + lam[2] * P[tri[2]];
        err += (m.area(t) / 12.0) * std::pow(ph - exact(p), 2);
      }
  }
  return std::sqrt(err);
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += std::log(x[i]);
    sy += std::log(y[i]);
    sxx += std::log(x[i]) * std::log(x[i]);
    sxy += std::log(x[i]) * std::log(y[i]);
  }
  return (sxy - sx * sy / n) / (sxx - sx * sx / n);
}

std::vector<double> random_conductivities(Lcg64& rng, std::size_t n) {
  std::vector<double> C(n);
  for (auto& c : C) c = rng.uniform(0.1, 2.0);
  return C;
}

const ScalarFunction kSmooth = [](Vec2 x) { return std::cos(pi * x.x) + std::cos(pi * x.y); };

}  // namespace

TEST_CASE("P1 Laplacian on the unit right triangle") {
  const auto tri = mesh::TriMesh::from_triangles({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}});
  const auto sys = assemble(tri, zero_field(tri), 1.0);
  // Right angle at vertex 0: K = [[1, -1/2, -1/2], [-1/2, 1/2, 0], [-1/2, 0, 1/2]].
  CHECK(sys.matrix.coeff(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sys.matrix.coeff(1, 1) == doctest::Approx(0.5));
  CHECK(sys.matrix.coeff(0, 1) == doctest::Approx(-0.5));
  CHECK(std::abs(sys.matrix.coeff(1, 2)) < 1e-16);
  CHECK(sys.min_permeability == 1.0);
}

TEST_CASE("stiffness matrix is symmetric with zero row sums and linear in the tensor") {
  Lcg64 rng(19);
  const auto m = mesh::build_structured_triangulation(5, 4, mesh::Rect{0, 0, 1.5, 1.0});
  CellTensorField perm(m.triangle_count(), 3);
  for (auto& t : perm.values) {
    const double a = rng.uniform(0, 1), b = rng.uniform(-0.2, 0.2), c = rng.uniform(0, 1);
    t = {a, b, c};
  }
  const auto K = assemble(m, perm, 1.0).matrix;
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    for (std::size_t j = 0; j < m.vertex_count(); ++j) CHECK(K.coeff(i, j) == K.coeff(j, i));
  }
  double scale = 0.0;
  for (double v : K.values()) scale = std::max(scale, std::abs(v));
  for (double s : K.row_sums()) CHECK(std::abs(s) <= 1e-12 * scale);

  const auto K0 = assemble(m, zero_field(m), 1.0).matrix;
  CellTensorField scaled = perm;
  for (auto& t : scaled.values) t = 2.5 * t;
  const auto K2 = assemble(m, scaled, 1.0).matrix;
  for (std::size_t i = 0; i < m.vertex_count(); ++i)
    for (std::size_t j = 0; j < m.vertex_count(); ++j) {
      const double tensor_part = K.coeff(i, j) - K0.coeff(i, j);
      CHECK(K2.coeff(i, j) - K0.coeff(i, j) == doctest::Approx(2.5 * tensor_part).epsilon(1e-12));
    }
}

TEST_CASE("permeability preconditions") {
  const auto m = mesh::build_structured_triangulation(2, 2);
  CHECK_THROWS_AS(assemble(m, zero_field(m), 0.0), PreconditionError);
  CellTensorField bad(m.triangle_count(), 1, SymTensor2{-2.0, 0.0, 1.0});
  bad.values[5] = SymTensor2{-3.0, 0.0, 1.0};
  try {
    assemble(m, bad, 1.0);
    FAIL("expected IndefinitePermeability");
  } catch (const IndefinitePermeability& e) {
    CHECK(e.triangle() == 5);
  }
  // r = 0 with a uniformly positive definite tensor is admitted.
  const CellTensorField pd(m.triangle_count(), 1, SymTensor2{1.0, 0.2, 0.5});
  const auto sol = solve_poisson(m, pd, 0.0, kSmooth);
  CHECK(sol.residual <= 1e-10 * linalg::norm2(sol.load));
}

TEST_CASE("zero source gives zero pressure") {
  const auto m = mesh::build_structured_triangulation(4, 4);
  const auto sol = solve_poisson(m, zero_field(m), 1.0, [](Vec2) { return 0.0; });
  for (double p : sol.p.values) CHECK(p == 0.0);
  const auto e = semi_discrete_energy(m, zero_field(m), 1.0, [](Vec2) { return 0.0; }, MetabolicLaw(2.0));
  CHECK(e.total() == 0.0);
}

TEST_CASE("manufactured cosine converges at second order in L2") {
  std::vector<double> hs, errs;
  const auto exact = [](Vec2 x) { return std::cos(pi * x.x); };
  for (std::size_t n : {4u, 8u, 16u, 32u}) {
    const auto m = mesh::build_structured_triangulation(n, n);
    const auto sol = solve_poisson(m, zero_field(m), 1.0, [](Vec2 x) { return pi * pi * std::cos(pi * x.x); });
    hs.push_back(m.h());
    errs.push_back(l2_error(m, sol.p.values, exact));
  }
  for (std::size_t k = 1; k < errs.size(); ++k) CHECK(errs[k] < errs[k - 1]);
  CHECK(fit_slope(hs, errs) >= 1.9);
  CHECK(errs.back() < 2e-3);
}

TEST_CASE("pressure field invariants") {
  Lcg64 rng(6);
  for (std::size_t n : {3u, 15u}) {  // dense and iterative solver paths
    const auto m = mesh::build_structured_triangulation(n, n);
    CellTensorField perm(m.triangle_count(), 1);
    for (auto& t : perm.values) t = SymTensor2{rng.uniform(0, 1), 0.0, rng.uniform(0, 1)};
    const auto sol = solve_poisson(m, perm, 0.5, kSmooth);
    const auto mass = m.lumped_mass();
    double mean = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
      mean += mass[i] * sol.p.values[i];
      scale += mass[i] * std::abs(sol.p.values[i]);
    }
    CHECK(std::abs(mean) <= 1e-12 * scale);
    CHECK(sol.residual <= 1e-10 * linalg::norm2(sol.load));
    // Taylor identity: P_i - P_j = grad p . (x_i - x_j) on every triangle.
    for (std::size_t t = 0; t < m.triangle_count(); ++t) {
      const auto tri = m.triangles()[t];
      for (int k = 0; k < 3; ++k) {
        const auto i = tri[k], j = tri[(k + 1) % 3];
        const double lhs = sol.p.values[i] - sol.p.values[j];
        const double rhs = mesh::dot(sol.p.gradients[t], m.vertices()[i] - m.vertices()[j]);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("direct and iterative solves agree") {
  const auto m = mesh::build_structured_triangulation(12, 12);
  const auto field = zero_field(m);
  const auto a = solve_poisson(m, field, 1.0, kSmooth, {SolverKind::Direct});
  const auto b = solve_poisson(m, field, 1.0, kSmooth, {SolverKind::Iterative});
  CHECK(b.iterations > 0);
  for (std::size_t i = 0; i < m.vertex_count(); ++i)
    CHECK(a.p.values[i] == doctest::Approx(b.p.values[i]).epsilon(1e-9));
}

TEST_CASE("both pumping routes agree and energies are gauge invariant") {
  Lcg64 rng(23);
  const auto m = mesh::build_structured_triangulation(6, 6);
  const auto d = mesh::compute_diamonds(m);
  const auto perm = tensor::lift_Qh(m, d, random_conductivities(rng, m.edge_count()));
  const MetabolicLaw law(1.5);
  auto sol = solve_poisson(m, perm, 0.3, kSmooth);
  const auto e = evaluate_energy(m, perm, 0.3, sol, law);
  CHECK(e.pumping == doctest::Approx(e.pumping_source).epsilon(1e-9));
  CHECK(e.pumping > 0.0);

  for (auto& p : sol.p.values) p += 4.0;
  const auto shifted = evaluate_energy(m, perm, 0.3, sol, law);
  // Balanced load: sum_i (P_i + 4) S_i = sum_i P_i S_i.
  CHECK(shifted.pumping == e.pumping);
  CHECK(shifted.pumping_source == doctest::Approx(e.pumping_source).epsilon(1e-12));
  CHECK(shifted.metabolic == e.metabolic);
}

TEST_CASE("Galerkin energy underestimates the exact pumping energy") {
  // p = cos(pi x), r = 1: exact pumping energy is int |grad p|^2 = pi^2 / 2.
  for (std::size_t n : {4u, 8u, 16u}) {
    const auto m = mesh::build_structured_triangulation(n, n);
    const auto field = zero_field(m);
    const auto sol = solve_poisson(m, field, 1.0, [](Vec2 x) { return pi * pi * std::cos(pi * x.x); });
    const auto e = evaluate_energy(m, field, 1.0, sol, MetabolicLaw(2.0));
    CAPTURE(n);
    CHECK(e.pumping <= pi * pi / 2.0);
  }
}

TEST_CASE("first identity: FEM pressures satisfy the rescaled Kirchhoff law") {
  Lcg64 rng(29);
  for (std::size_t n : {2u, 4u, 8u, 16u}) {
    CAPTURE(n);
    const auto m = mesh::build_structured_triangulation(n, n);
    const auto d = mesh::compute_diamonds(m);
    const auto C = random_conductivities(rng, m.edge_count());
    const auto rep = verify_prop1(m, d, C, kSmooth);
    CHECK(rep.relative <= 1e-9);
    CHECK(rep.max_residual <= 1e-8 * rep.source_norm);
    const auto zero = verify_prop1(m, d, C, [](Vec2) { return 0.0; });
    CHECK(zero.max_residual == 0.0);
  }
  const auto m = mesh::build_structured_triangulation(2, 2);
  const auto d = mesh::compute_diamonds(m);
  std::vector<double> C(m.edge_count(), 1.0);
  C[0] = 0.0;
  CHECK_THROWS_AS(verify_prop1(m, d, C, kSmooth), PreconditionError);
}

TEST_CASE("first identity holds on a perturbed unstructured mesh") {
  Lcg64 rng(31);
  const auto base = mesh::build_structured_triangulation(6, 6);
  std::vector<Vec2> v(base.vertices().begin(), base.vertices().end());
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!base.boundary_vertex(i)) v[i] = v[i] + Vec2{rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04)};
  const auto m = mesh::TriMesh::from_triangles(v, {base.triangles().begin(), base.triangles().end()});
  const auto d = mesh::compute_diamonds(m);
  const auto C = random_conductivities(rng, m.edge_count());
  CHECK(verify_prop1(m, d, C, kSmooth).relative <= 1e-9);
  CHECK(verify_prop2(m, d, C, kSmooth, MetabolicLaw(1.5)).gap <= 1e-10);
}

TEST_CASE("second identity: rescaled discrete energy equals the semi-discrete energy") {
  Lcg64 rng(37);
  for (double gamma : {1.0, 1.5, 2.0, 0.5}) {
    for (std::size_t n : {2u, 4u}) {
      CAPTURE(gamma);
      CAPTURE(n);
      const auto m = mesh::build_structured_triangulation(n, n);
      const auto d = mesh::compute_diamonds(m);
      const auto C = random_conductivities(rng, m.edge_count());
      const auto rep = verify_prop2(m, d, C, kSmooth, MetabolicLaw(gamma));
      CHECK(rep.gap <= 1e-10);
      CHECK(std::isfinite(rep.discrete));
      CHECK(rep.metabolic_discrete == doctest::Approx(rep.metabolic_semi_discrete).epsilon(1e-13));
    }
  }
  const auto m = mesh::build_structured_triangulation(4, 4);
  const auto d = mesh::compute_diamonds(m);
  const std::vector<double> C(m.edge_count(), 0.8);
  const auto sym = verify_prop2(m, d, C, [](Vec2 x) { return std::cos(pi * x.x); }, MetabolicLaw(2.0));
  CHECK(sym.discrete == doctest::Approx(sym.semi_discrete).epsilon(1e-12));
  const auto only_m = verify_prop2(m, d, C, [](Vec2) { return 0.0; }, MetabolicLaw(2.0));
  // sum_e vol M(C) with vol summing to 1: M(0.8) = 0.32.
  CHECK(only_m.discrete == doctest::Approx(0.32).epsilon(1e-13));
  CHECK(only_m.semi_discrete == doctest::Approx(0.32).epsilon(1e-13));
}

TEST_CASE("convergence study on the manufactured cosine") {
  ConvergenceProblem prob;
  prob.r = 1.0;
  prob.source = [](Vec2 x) { return pi * pi * std::cos(pi * x.x); };
  prob.exact_energy = pi * pi / 2.0;
  const std::vector<std::size_t> levels{4, 8, 16, 32, 64};
  const auto table = convergence_study(levels, prob);
  REQUIRE(table.rows.size() == 5);
  CHECK(table.reference_nx == 256);
  CHECK(table.order >= 1.8);
  CHECK(table.r_squared >= 0.99);
  CHECK(std::isnan(table.rows[0].order_running));
  for (std::size_t k = 1; k < table.rows.size(); ++k) {
    CHECK(table.rows[k].h == doctest::Approx(table.rows[k - 1].h / 2.0));
    CHECK(table.rows[k].gap < table.rows[k - 1].gap);
  }
  CHECK(table.reference_exact_gap < table.rows.back().gap);

  const std::vector<std::size_t> two{4, 8};
  CHECK_THROWS_AS(convergence_study(two, prob), PreconditionError);
  const std::vector<std::size_t> unsorted{4, 16, 8};
  CHECK_THROWS_AS(convergence_study(unsorted, prob), PreconditionError);
}

TEST_CASE("convergence study with constant tensor and no source has zero gaps") {
  ConvergenceProblem prob;
  prob.perm = [](Vec2) { return SymTensor2{1.0, 0.25, 0.5}; };
  prob.r = 0.1;
  const std::vector<std::size_t> levels{2, 4, 8};
  const auto table = convergence_study(levels, prob);
  // Only summation roundoff separates the levels.
  for (const auto& row : table.rows) CHECK(row.gap <= 1e-12 * table.reference_energy);
  CHECK(table.reference_energy == doctest::Approx(0.5 * (1.0 + 2 * 0.0625 + 0.25)).epsilon(1e-12));
}

TEST_CASE("smooth tensor samples at the Gauss points") {
  const auto m = mesh::build_structured_triangulation(3, 3);
  const auto field = sample_at_gauss_points(m, [](Vec2 x) { return SymTensor2{x.x, x.y, 1.0}; });
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    // The mean of the three samples of a linear field is its centroid value.
    CHECK(field.mean(t).a == doctest::Approx(m.centroid(t).x));
    CHECK(field.mean(t).b == doctest::Approx(m.centroid(t).y));
  }
}

TEST_CASE("assembly is identical for any thread count") {
  Lcg64 rng(41);
  const auto m = mesh::build_structured_triangulation(48, 48);  // 4608 triangles, several chunks
  CellTensorField perm(m.triangle_count(), 1);
  for (auto& t : perm.values) t = SymTensor2{rng.uniform(0, 1), rng.uniform(-0.1, 0.1), rng.uniform(0, 1)};
  ::setenv("NETFLOW_THREADS", "1", 1);
  const auto serial = assemble(m, perm, 1.0);
  ::setenv("NETFLOW_THREADS", "3", 1);
  const auto threaded = assemble(m, perm, 1.0);
  ::unsetenv("NETFLOW_THREADS");
  REQUIRE(serial.matrix.nonzeros() == threaded.matrix.nonzeros());
  const auto a = serial.matrix.values(), b = threaded.matrix.values();
  CHECK(std::equal(a.begin(), a.end(), b.begin()));
  CHECK(serial.min_permeability == threaded.min_permeability);
}

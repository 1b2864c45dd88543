#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "netflow/error.hpp"
#include "netflow/fem.hpp"
#include "netflow/network.hpp"
#include "netflow/rng.hpp"
#include "netflow/steady.hpp"

using namespace netflow;
using namespace netflow::steady;
using std::numbers::pi;

namespace {

double lhs(double gamma, double r, double C) { return (r + C) * (r + C) * std::pow(C, gamma - 1.0); }

// Right-hand side of the scalar ODE dC/dt = c^2 B^2 / (r + C)^2 - C^(gamma - 1).
double rate(double gamma, double r, double c, double B, double C) {
  return c * c * B * B / ((r + C) * (r + C)) - std::pow(C, gamma - 1.0);
}

// Plain bisection, kept separate from the library root finder.
template <class F>
double bisect(F f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

mesh::TriMesh strip(std::size_t nx) { return mesh::build_structured_triangulation(nx, 2); }

double centroid_x(const mesh::TriMesh& m, std::size_t t) {
  const auto tri = m.triangles()[t];
  const auto v = m.vertices();
  return (v[tri[0]].x + v[tri[1]].x + v[tri[2]].x) / 3.0;
}

// Independent evaluation of max_i |int (r + c^q |grad p|^q) grad p . grad phi_i - S_i|.
double weak_residual(const mesh::TriMesh& m, const std::vector<double>& P, const std::vector<double>& load,
                     double r, double c, double gamma) {
  const double q = 2.0 / (gamma - 1.0);
  std::vector<double> res(P.size(), 0.0);
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const auto tri = m.triangles()[t];
    const auto g = m.hat_gradients(t);
    Vec2 grad{};
    for (int k = 0; k < 3; ++k) grad = grad + P[tri[k]] * g[k];
    const double a = r + std::pow(c, q) * std::pow(mesh::norm(grad), q);
    for (int k = 0; k < 3; ++k) res[tri[k]] += m.area(t) * a * mesh::dot(grad, g[k]);
  }
  double out = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) out = std::max(out, std::abs(res[i] - load[i]));
  return out;
}

}  // namespace

TEST_CASE("flux profile integrates minus the source from the left end") {
  const Profile1D B = flux_profile([](double x) { return std::cos(pi * x); }, 512);
  REQUIRE(B.size() == 513);
  CHECK(B.values.front() == 0.0);
  CHECK(std::abs(B.values.back()) < 1e-12);
  double err = 0.0;
  for (std::size_t k = 0; k < B.size(); ++k)
    err = std::max(err, std::abs(B.values[k] + std::sin(pi * B.x[k]) / pi));
  CHECK(err < 1e-5);
  CHECK_THROWS_AS(uniform_grid(0), PreconditionError);
}

TEST_CASE("steady point for gamma = 1 is the positive part of c|B| - r") {
  auto a = steady_point(1.0, 1.0, 2.0, 0.75);
  CHECK(a.regime == Regime::Active);
  CHECK(a.C == doctest::Approx(0.5));
  auto b = steady_point(1.0, 1.0, 2.0, -0.25);
  CHECK(b.regime == Regime::Inactive);
  CHECK(b.C == 0.0);
}

TEST_CASE("steady point for gamma > 1 solves the scalar balance") {
  // (1 + 1)^2 * 1 = 4 = c^2 B^2 with c = 2, B = 1.
  CHECK(steady_point(2.0, 1.0, 2.0, 1.0).C == doctest::Approx(1.0));
  CHECK(steady_point(2.0, 1.0, 2.0, 0.0).C == 0.0);
  for (double gamma : {1.5, 2.0, 3.0})
    for (double B : {0.1, 0.7, 2.5}) {
      const auto pt = steady_point(gamma, 0.5, 1.3, B);
      CHECK(pt.regime == Regime::UniqueRoot);
      CHECK(lhs(gamma, 0.5, pt.C) == doctest::Approx(1.69 * B * B).epsilon(1e-12));
    }
}

TEST_CASE("extinction threshold is the minimum of the scalar balance") {
  // Fine sampling of (r + C)^2 C^(gamma - 1) around its minimum.
  for (double gamma : {0.25, 0.5, 0.75})
    for (double r : {0.5, 1.0, 2.0}) {
      double best = INFINITY, arg = 0.0;
      for (int i = 1; i <= 200000; ++i) {
        const double C = 4.0 * r * i / 200000.0;
        const double v = lhs(gamma, r, C);
        if (v < best) best = v, arg = C;
      }
      CHECK(extinction_threshold(gamma, r) == doctest::Approx(best).epsilon(1e-8));
      CHECK(threshold_point(gamma, r) == doctest::Approx(arg).epsilon(1e-4));
    }
  CHECK(extinction_threshold(0.5, 1.0) == doctest::Approx(16.0 * std::sqrt(3.0) / 9.0));
  CHECK_THROWS_AS(extinction_threshold(1.0, 1.0), PreconditionError);
}

TEST_CASE("gamma < 1 has two roots above the threshold and the larger one is stable") {
  const double gamma = 0.5, r = 1.0, c = 1.0;
  const double rg = extinction_threshold(gamma, r);
  for (double target : {1.2 * rg, 5.0, 10.0}) {
    const double B = std::sqrt(target);
    const auto pt = steady_point(gamma, r, c, B);
    REQUIRE(pt.regime == Regime::TwoRoots);
    const double star = threshold_point(gamma, r);
    CHECK(pt.C_unstable < star);
    CHECK(pt.C > star);
    const double lo = bisect([&](double C) { return lhs(gamma, r, C) - target; }, 1e-12, star);
    const double hi = bisect([&](double C) { return lhs(gamma, r, C) - target; }, star, 1e3);
    CHECK(pt.C_unstable == doctest::Approx(lo).epsilon(1e-9));
    CHECK(pt.C == doctest::Approx(hi).epsilon(1e-9));
    const double d = 1e-6;
    CHECK(rate(gamma, r, c, B, pt.C + d) < 0.0);
    CHECK(rate(gamma, r, c, B, pt.C - d) > 0.0);
    CHECK(rate(gamma, r, c, B, pt.C_unstable + d) > 0.0);
    CHECK(rate(gamma, r, c, B, pt.C_unstable - d) < 0.0);
  }
  CHECK(steady_point(gamma, r, c, std::sqrt(0.5 * rg)).regime == Regime::Extinction);
  const auto tan = steady_point(gamma, r, c, std::sqrt(rg));
  CHECK(tan.regime == Regime::Tangent);
  CHECK(tan.C == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("steady_1d reports the threshold and the stable branch") {
  Profile1D B = uniform_grid(4);
  for (std::size_t k = 0; k < B.size(); ++k) B.values[k] = std::sin(pi * B.x[k]);
  const auto rep = steady_1d(1.0, 0.5, 1.0, B);
  CHECK(rep.threshold == 0.0);
  for (std::size_t k = 0; k < B.size(); ++k)
    CHECK(rep.C.values[k] == doctest::Approx(std::max(0.0, std::sin(pi * B.x[k]) - 0.5)));
  CHECK(steady_1d(0.5, 1.0, 1.0, B).threshold == doctest::Approx(16.0 * std::sqrt(3.0) / 9.0));
  CHECK_THROWS_AS(steady_1d(2.0, 0.0, 1.0, B), PreconditionError);
}

TEST_CASE("flow_1d explicit step and long-time limit") {
  const std::vector<double> B{2.0, 0.0};
  const std::vector<double> C0{1.0, 0.0};
  // drive 4/4 = 1 balances M'(1) = 1, and a zero state with zero drive stays put.
  const auto one = flow_1d(2.0, 1.0, 1.0, B, C0, 0.1, 0.1);
  CHECK(one.steps == 1);
  CHECK(one.C[0] == doctest::Approx(1.0));
  CHECK(one.C[1] == 0.0);

  const std::vector<double> Bs{0.3, 0.8, 1.5};
  const std::vector<double> zero(3, 0.0), ones(3, 1.0);
  for (double gamma : {1.0, 2.0}) {
    const auto res = flow_1d(gamma, 1.0, 2.0, Bs, ones, 0.01, 40.0);
    for (std::size_t k = 0; k < Bs.size(); ++k)
      CHECK(res.C[k] == doctest::Approx(steady_point(gamma, 1.0, 2.0, Bs[k]).C).epsilon(1e-6));
  }
  CHECK_THROWS_AS(flow_1d(2.0, 1.0, 1.0, Bs, std::vector<double>{1.0}, 0.1, 1.0), ValidationError);
  CHECK_THROWS_AS(flow_1d(2.0, 1.0, 1.0, Bs, std::vector<double>{1.0, -1.0, 0.0}, 0.1, 1.0), PreconditionError);
}

TEST_CASE("flow_1d with gamma < 1 goes extinct below the threshold and stays extinct") {
  const double gamma = 0.5, r = 1.0;
  const double rg = extinction_threshold(gamma, r);
  const std::vector<double> B{std::sqrt(0.5 * rg), std::sqrt(5.0)};
  const std::vector<double> C0{0.5, 0.5};
  const auto res = flow_1d(gamma, r, 1.0, B, C0, 1e-3, 80.0);
  CHECK(res.C[0] == 0.0);
  CHECK(std::isfinite(res.extinction_time[0]));
  CHECK(res.extinction_time[0] > 0.0);
  CHECK(std::isnan(res.extinction_time[1]));
  CHECK(res.C[1] == doctest::Approx(steady_point(gamma, r, 1.0, B[1]).C).epsilon(1e-6));
}

TEST_CASE("p-Laplacian with zero source stays at zero") {
  const auto m = mesh::build_structured_triangulation(4, 4);
  const auto res = p_laplacian_solve(m, std::vector<double>(m.vertex_count(), 0.0), 1.0, 1.0, 2.0);
  CHECK(res.report.converged);
  CHECK(res.report.iterations == 0);
  for (double v : res.p.values) CHECK(v == 0.0);
}

TEST_CASE("p-Laplacian preconditions") {
  const auto m = mesh::build_structured_triangulation(2, 2);
  std::vector<double> load(m.vertex_count(), 0.0);
  CHECK_THROWS_AS(p_laplacian_solve(m, load, 1.0, 1.0, 1.0), PreconditionError);
  CHECK_THROWS_AS(p_laplacian_solve(m, load, 0.0, 1.0, 2.0), PreconditionError);
  load[0] = 1.0;
  CHECK_THROWS_AS(p_laplacian_solve(m, load, 1.0, 1.0, 2.0), PreconditionError);
  CHECK_THROWS_AS(p_laplacian_solve(m, std::vector<double>(3, 0.0), 1.0, 1.0, 2.0), ValidationError);
}

TEST_CASE("p-Laplacian minimizer is unique and satisfies the weak equation") {
  const auto m = mesh::build_structured_triangulation(8, 8);
  const fem::ScalarFunction S = [](Vec2 x) { return std::cos(pi * x.x) + std::cos(pi * x.y); };
  for (double gamma : {1.5, 2.0, 3.0}) {
    Lcg64 rng(7 + static_cast<std::uint64_t>(gamma * 10));
    std::vector<PLaplacianResult> runs;
    for (int start = 0; start < 2; ++start) {
      PLaplacianOptions opt;
      opt.initial.resize(m.vertex_count());
      for (double& v : opt.initial) v = rng.uniform(-1.0, 1.0);
      runs.push_back(p_laplacian_solve(m, S, 1.0, 1.0, gamma, opt));
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < m.vertex_count(); ++i)
      diff = std::max(diff, std::abs(runs[0].p.values[i] - runs[1].p.values[i]));
    CHECK(diff < 1e-8);
    const double oracle = weak_residual(m, runs[0].p.values, runs[0].load, 1.0, 1.0, gamma);
    CHECK(oracle < 1e-10);
    CHECK(runs[0].weak_residual == doctest::Approx(oracle).epsilon(1e-3));
  }
}

TEST_CASE("p-Laplacian on a strip matches the integrated 1D relation") {
  // S = pi cos(pi x) gives B = -sin(pi x) and (r + c^q |p'|^q) p' = B.
  const double r = 1.0, c = 1.5, gamma = 2.0;
  std::vector<double> err;
  for (std::size_t nx : {16, 32, 64}) {
    const auto m = strip(nx);
    const auto res = p_laplacian_solve(m, [](Vec2 x) { return pi * std::cos(pi * x.x); }, r, c, gamma);
    double e = 0.0;
    for (std::size_t t = 0; t < m.triangle_count(); ++t) {
      const double x = centroid_x(m, t);
      const double slope = p_laplacian_1d_slope(r, c, gamma, -std::sin(pi * x));
      e = std::max(e, std::abs(res.p.gradients[t].x - slope) + std::abs(res.p.gradients[t].y));
    }
    err.push_back(e);
  }
  CHECK(err[1] < 0.6 * err[0]);
  CHECK(err[2] < 0.6 * err[1]);
  CHECK(err[2] < 1e-2);
}

TEST_CASE("1D slope solves the scalar relation") {
  // (1 + 1 * 1) * 1 = 2 for r = c = 1, gamma = 2.
  CHECK(p_laplacian_1d_slope(1.0, 1.0, 2.0, 2.0) == doctest::Approx(1.0));
  CHECK(p_laplacian_1d_slope(1.0, 1.0, 2.0, -2.0) == doctest::Approx(-1.0));
  CHECK(p_laplacian_1d_slope(1.0, 1.0, 2.0, 0.0) == 0.0);
  for (double gamma : {1.5, 3.0}) {
    const double q = 2.0 / (gamma - 1.0);
    const double s = p_laplacian_1d_slope(0.7, 1.2, gamma, 0.9);
    CHECK((0.7 + std::pow(1.2, q) * std::pow(s, q)) * s == doctest::Approx(0.9).epsilon(1e-12));
  }
}

TEST_CASE("recovered tensor for gamma > 1") {
  const auto m = mesh::build_structured_triangulation(6, 6);
  const fem::ScalarFunction S = [](Vec2 x) { return std::cos(pi * x.x) * std::cos(pi * x.y); };
  for (double gamma : {1.5, 2.0, 3.0}) {
    const double c = 1.3;
    const auto res = p_laplacian_solve(m, S, 1.0, c, gamma);
    const auto C = recover_tensor(m, res.p, c, gamma);
    const double q = 2.0 / (gamma - 1.0);
    for (std::size_t t = 0; t < m.triangle_count(); ++t) {
      const Vec2 g = res.p.gradients[t];
      const Vec2 flux = C.values[t].apply(g);
      const double expect = std::pow(c, q) * std::pow(mesh::norm(g), q);
      CHECK(flux.x == doctest::Approx(expect * g.x).epsilon(1e-10));
      CHECK(flux.y == doctest::Approx(expect * g.y).epsilon(1e-10));
      if (gamma == 2.0) {
        const auto outer = (c * c) * tensor::SymTensor2::outer(g);
        CHECK(tensor::frobenius(C.values[t] - outer) <= 1e-14 * (1.0 + tensor::frobenius(outer)));
      }
    }
    const auto resid = stationary_residual(C, res.p, c, tensor::MetabolicLaw(gamma));
    CHECK(*std::max_element(resid.begin(), resid.end()) <= 1e-8);
  }
  fem::PressureField flat = fem::make_pressure_field(m, std::vector<double>(m.vertex_count(), 0.0));
  const auto Z = recover_tensor(m, flat, 1.0, 2.0);
  for (const auto& v : Z.values) CHECK(tensor::frobenius(v) == 0.0);
  CHECK_THROWS_AS(recover_tensor(m, flat, 1.0, 1.0), PreconditionError);
}

TEST_CASE("penalty derivative matches finite differences") {
  for (double c : {1.0, 2.0})
    for (double eps : {1e-1, 1e-3})
      for (double s : {0.1, 0.3, 0.9, 1.5, 4.0}) {
        const double h = 1e-6 * std::max(1.0, s);
        const double fd = (penalty_density(s + h, c, eps) - penalty_density(s - h, c, eps)) / (2.0 * h);
        CHECK(penalty_derivative(s, c, eps) == doctest::Approx(fd).epsilon(1e-6));
      }
  CHECK(penalty_density(0.2, 2.0, 1e-2) == 0.0);
  CHECK(penalty_density(0.5, 2.0, 1e-2) == doctest::Approx(0.0625 / 0.04));
}

TEST_CASE("inactive penalized problem reduces to the linear Poisson solve") {
  // p = 0.1 cos(pi x) has c |p'| <= 0.2 pi < 1 for c = 2.
  const auto m = strip(16);
  const fem::ScalarFunction S = [](Vec2 x) { return 0.1 * pi * pi * std::cos(pi * x.x); };
  const auto load = network::project_source(m, S);
  const auto pen = penalized_solve(m, load, 1.0, 2.0, 1e-2);
  const auto lin = fem::solve_poisson(m, tensor::CellTensorField(m.triangle_count(), 1), 1.0, load);
  for (std::size_t i = 0; i < m.vertex_count(); ++i)
    CHECK(pen.p.values[i] == doctest::Approx(lin.p.values[i]).epsilon(1e-9));
  CHECK(pen.active_fraction == 0.0);
  CHECK(pen.complementarity == 0.0);
  for (double a : pen.multiplier) CHECK(a == 0.0);
  CHECK(pen.max_c_grad < 1.0);
}

TEST_CASE("penalized multiplier matches the 1D penalized relation") {
  // In 1D (r + a^2) |p'| = |B| with |p'|^2 = 1/c^2 + eps a^2 on the active set.
  const double r = 1.0, c = 2.0;
  const auto m = strip(128);
  const auto load = network::project_source(m, [](Vec2 x) { return pi * std::cos(pi * x.x); });
  for (double eps : {1e-1, 1e-2}) {
    const auto res = penalized_solve(m, load, r, c, eps);
    double err = 0.0;
    for (std::size_t t = 0; t < m.triangle_count(); ++t) {
      const double B = std::abs(std::sin(pi * centroid_x(m, t)));
      double a2 = 0.0;
      if (c * B > r)
        a2 = bisect([&](double a) { return (r + a) * std::sqrt(1.0 / (c * c) + eps * a) - B; }, 0.0, 10.0);
      err = std::max(err, std::abs(res.multiplier[t] - a2));
    }
    CHECK(err < 5e-3);
  }
}

TEST_CASE("penalized sweep: violation shrinks with eps and complementarity holds") {
  const auto m = strip(64);
  const auto load = network::project_source(m, [](Vec2 x) { return pi * std::cos(pi * x.x); });
  const std::vector<double> eps{1e-1, 1e-2, 1e-3};
  const auto sweep = penalized_sweep(m, load, 1.0, 2.0, eps);
  REQUIRE(sweep.size() == 3);
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    const auto& s = sweep[k];
    CHECK(s.eps == eps[k]);
    CHECK(s.report.converged);
    for (std::size_t t = 0; t < m.triangle_count(); ++t) {
      const double cg = 2.0 * mesh::norm(s.p.gradients[t]);
      if (cg <= 1.0) CHECK(s.multiplier[t] == 0.0);
      else CHECK(s.multiplier[t] == doctest::Approx((cg * cg - 1.0) / (4.0 * eps[k])));
    }
    // The active set is where 2 |sin(pi x)| > 1, i.e. x in (1/6, 5/6).
    CHECK(s.active_fraction == doctest::Approx(2.0 / 3.0).epsilon(0.05));
    if (k > 0) {
      CHECK(s.max_c_grad - 1.0 < 0.2 * (sweep[k - 1].max_c_grad - 1.0));
      CHECK(s.complementarity < 0.2 * sweep[k - 1].complementarity);
    }
  }
  const auto C = recover_tensor(m, sweep.back());
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    CHECK(tensor::frobenius(C.values[t]) == doctest::Approx(sweep.back().multiplier[t]).epsilon(1e-12));
    const Vec2 g = sweep.back().p.gradients[t];
    const Vec2 f = C.values[t].apply(g);
    CHECK(std::abs(f.x - sweep.back().multiplier[t] * g.x) < 1e-12);
  }
  CHECK_THROWS_AS(penalized_solve(m, load, 1.0, 2.0, 0.0), PreconditionError);
}

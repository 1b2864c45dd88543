#include "netflow/steady.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "netflow/error.hpp"
#include "netflow/linalg.hpp"
#include "netflow/network.hpp"

namespace netflow::steady {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class F>
double bracketed_root(F f, double lo, double hi) {
  const double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo < 0.0) == (fhi < 0.0)) throw SolverFailure("root is not bracketed", 0, std::min(std::abs(flo), std::abs(fhi)));
  std::uintmax_t max_iter = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                       boost::math::tools::eps_tolerance<double>(52), max_iter);
  return 0.5 * (a + b);
}

void check_params(double gamma, double r, double c) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw PreconditionError("gamma must be positive");
  if (!(r > 0.0)) throw PreconditionError("r must be positive");
  if (!(c > 0.0)) throw PreconditionError("c must be positive");
}

}  // namespace

Profile1D uniform_grid(std::size_t N) {
  if (N < 1) throw PreconditionError("grid needs at least one interval");
  Profile1D p;
  p.x.resize(N + 1);
  for (std::size_t k = 0; k <= N; ++k) p.x[k] = static_cast<double>(k) / static_cast<double>(N);
  p.values.assign(N + 1, 0.0);
  return p;
}

Profile1D flux_profile(const std::function<double(double)>& S, std::size_t N) {
  Profile1D p = uniform_grid(N);
  const double h = 1.0 / static_cast<double>(N);
  double prev = S(0.0);
  for (std::size_t k = 1; k <= N; ++k) {
    const double cur = S(p.x[k]);
    p.values[k] = p.values[k - 1] - 0.5 * h * (prev + cur);
    prev = cur;
  }
  return p;
}

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::UniqueRoot:
      return "unique-root";
    case Regime::Active:
      return "active";
    case Regime::Inactive:
      return "inactive";
    case Regime::TwoRoots:
      return "two-roots";
    case Regime::Tangent:
      return "tangent";
    case Regime::Extinction:
      return "extinction";
  }
  return "unknown";
}

double threshold_point(double gamma, double r) { return (1.0 - gamma) * r / (1.0 + gamma); }

double extinction_threshold(double gamma, double r) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw PreconditionError("threshold is defined for gamma in (0, 1)");
  const double a = 2.0 / (1.0 + gamma);
  return a * a * std::pow((1.0 - gamma) / (1.0 + gamma), gamma - 1.0) * std::pow(r, gamma + 1.0);
}

SteadyPoint steady_point(double gamma, double r, double c, double B) {
  check_params(gamma, r, c);
  const double target = c * c * B * B;
  SteadyPoint pt;
  if (gamma == 1.0) {
    const double C = c * std::abs(B) - r;
    pt.regime = C > 0.0 ? Regime::Active : Regime::Inactive;
    pt.C = std::max(0.0, C);
    return pt;
  }
  auto lhs = [&](double C) { return (r + C) * (r + C) * std::pow(C, gamma - 1.0); };
  if (gamma > 1.0) {
    pt.regime = Regime::UniqueRoot;
    if (target == 0.0) return pt;
    const double hi = std::max(1.0, std::pow(target, 1.0 / (gamma + 1.0)));
    pt.C = bracketed_root([&](double C) { return lhs(C) - target; }, 0.0, hi);
    return pt;
  }
  const double star = threshold_point(gamma, r);
  const double r_gamma = extinction_threshold(gamma, r);
  if (std::abs(target - r_gamma) <= 1e-12 * r_gamma) {
    pt.regime = Regime::Tangent;
    pt.C = pt.C_unstable = star;
    return pt;
  }
  if (target < r_gamma) {
    pt.regime = Regime::Extinction;
    return pt;
  }
  pt.regime = Regime::TwoRoots;
  auto f = [&](double C) { return lhs(C) - target; };
  const double lo = std::pow(r * r / target, 1.0 / (1.0 - gamma));
  pt.C_unstable = bracketed_root(f, lo, star);
  double hi = std::max(2.0 * star, 1.0);
  while (f(hi) < 0.0) hi *= 2.0;
  pt.C = bracketed_root(f, star, hi);
  return pt;
}

SteadyReport steady_1d(double gamma, double r, double c, const Profile1D& B) {
  check_params(gamma, r, c);
  SteadyReport rep;
  rep.threshold = gamma > 0.0 && gamma < 1.0 ? extinction_threshold(gamma, r) : 0.0;
  rep.C.x = B.x;
  rep.C.values.resize(B.size());
  rep.points.reserve(B.size());
  for (std::size_t k = 0; k < B.size(); ++k) {
    rep.points.push_back(steady_point(gamma, r, c, B.values[k]));
    rep.C.values[k] = rep.points.back().C;
  }
  return rep;
}

Flow1DResult flow_1d(double gamma, double r, double c, std::span<const double> B,
                     std::span<const double> C0, double dt, double t_end) {
  check_params(gamma, r, c);
  if (B.size() != C0.size()) throw ValidationError("B and C0 differ in length");
  if (!(dt > 0.0)) throw PreconditionError("dt must be positive");
  for (double v : C0)
    if (!(v >= 0.0)) throw PreconditionError("C0 must be nonnegative");
  const tensor::MetabolicLaw law(gamma);
  Flow1DResult res;
  res.C.assign(C0.begin(), C0.end());
  res.extinction_time.assign(C0.size(), kNaN);
  for (std::size_t k = 0; k < C0.size(); ++k)
    if (gamma < 1.0 && res.C[k] == 0.0) res.extinction_time[k] = 0.0;
  double t = 0.0;
  const double eps_t = 1e-12 * std::max(1.0, t_end);
  while (t < t_end - eps_t) {
    const double h = std::min(dt, t_end - t);
    for (std::size_t k = 0; k < res.C.size(); ++k) {
      double& C = res.C[k];
      if (gamma < 1.0 && C == 0.0) continue;
      const double drive = c * c * B[k] * B[k] / ((r + C) * (r + C));
      const double next = C + h * (drive - law.dM(C));
      C = next > 0.0 ? next : 0.0;
      if (C == 0.0 && std::isnan(res.extinction_time[k])) res.extinction_time[k] = t + h;
    }
    t += h;
    ++res.steps;
  }
  res.t_end = t;
  return res;
}

double p_laplacian_1d_slope(double r, double c, double gamma, double B) {
  if (!(gamma > 1.0)) throw PreconditionError("gamma must exceed 1");
  check_params(gamma, r, c);
  const double q = 2.0 / (gamma - 1.0);
  const double cq = std::pow(c, q);
  const double target = std::abs(B);
  if (target == 0.0) return 0.0;
  auto f = [&](double s) { return (r + cq * std::pow(s, q)) * s - target; };
  const double hi = std::max(target / r, 1.0);
  return std::copysign(bracketed_root(f, 0.0, hi), B);
}

namespace {

constexpr std::size_t kDenseLimit = 200;

/// Per-cell convex density phi(s) of s = |grad p|^2, with
///   coefficient(s) = 2 phi'(s)      (the flux is coefficient * grad p)
///   rank_one(s)    = 4 phi''(s) s   (Hessian = coefficient I + rank_one ghat ghat^T)
struct PLaplacianDensity {
  double r, cq, rho, kappa;  // rho = 1/(gamma-1), kappa = (gamma-1)/(2 gamma) c^q
  double phi(double s) const { return 0.5 * r * s + kappa * std::pow(s, 1.0 + rho); }
  double coefficient(double s) const { return r + cq * std::pow(s, rho); }
  double rank_one(double s) const { return s > 0.0 ? 2.0 * rho * cq * std::pow(s, rho) : 0.0; }
};

struct PenaltyDensity {
  double r, c, eps;
  double phi(double s) const { return 0.5 * r * s + penalty_density(s, c, eps); }
  double coefficient(double s) const { return r + 2.0 * penalty_derivative(s, c, eps); }
  double rank_one(double s) const { return s > 1.0 / (c * c) ? 2.0 * s / eps : 0.0; }
};

struct Newton {
  const mesh::TriMesh& mesh;
  std::span<const double> load;
  std::vector<double> mass;
  std::vector<std::array<Vec2, 3>> grads;

  Newton(const mesh::TriMesh& m, std::span<const double> f) : mesh(m), load(f), mass(m.lumped_mass()) {
    grads.reserve(m.triangle_count());
    for (std::size_t t = 0; t < m.triangle_count(); ++t) grads.push_back(m.hat_gradients(t));
  }

  Vec2 gradient(std::span<const double> P, std::size_t t) const {
    const auto& tri = mesh.triangles()[t];
    return P[tri[0]] * grads[t][0] + P[tri[1]] * grads[t][1] + P[tri[2]] * grads[t][2];
  }

  template <class Density>
  double objective(const Density& d, std::span<const double> P) const {
    double F = 0.0;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const Vec2 g = gradient(P, t);
      F += mesh.area(t) * d.phi(mesh::dot(g, g));
    }
    for (std::size_t i = 0; i < P.size(); ++i) F -= P[i] * load[i];
    return F;
  }

  template <class Density>
  std::vector<double> residual(const Density& d, std::span<const double> P) const {
    std::vector<double> G(P.size(), 0.0);
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const Vec2 g = gradient(P, t);
      const double a = mesh.area(t) * d.coefficient(mesh::dot(g, g));
      const auto& tri = mesh.triangles()[t];
      for (int k = 0; k < 3; ++k) G[tri[k]] += a * mesh::dot(g, grads[t][k]);
    }
    for (std::size_t i = 0; i < P.size(); ++i) G[i] -= load[i];
    return G;
  }

  // Size of the rounding error in residual(): each gradient carries a relative
  // error eps_mach sum_j |P_j| |grad phi_j|, which the full Hessian density
  // amplifies into the element contributions.
  template <class Density>
  double residual_floor(const Density& d, std::span<const double> P) const {
    std::vector<double> scale(P.size(), 0.0);
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles()[t];
      const Vec2 g = gradient(P, t);
      const double s = mesh::dot(g, g);
      double spread = 0.0;
      for (int j = 0; j < 3; ++j) spread += std::abs(P[tri[j]]) * mesh::norm(grads[t][j]);
      const double a = mesh.area(t) * (std::abs(d.coefficient(s)) + std::abs(d.rank_one(s))) * spread;
      for (int k = 0; k < 3; ++k) scale[tri[k]] += a * mesh::norm(grads[t][k]);
    }
    for (std::size_t i = 0; i < P.size(); ++i) scale[i] += std::abs(load[i]);
    return 16.0 * std::numeric_limits<double>::epsilon() * linalg::norm2(scale);
  }

  template <class Density>
  linalg::CsrMatrix hessian(const Density& d, std::span<const double> P) const {
    std::vector<linalg::Triplet> trips;
    trips.reserve(9 * mesh.triangle_count());
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const Vec2 g = gradient(P, t);
      const double s = mesh::dot(g, g);
      const double a = d.coefficient(s);
      const double b = d.rank_one(s);
      const Vec2 ghat = s > 0.0 ? (1.0 / std::sqrt(s)) * g : Vec2{};
      const tensor::SymTensor2 H = a * tensor::SymTensor2::identity() + b * tensor::SymTensor2::outer(ghat);
      const auto& tri = mesh.triangles()[t];
      for (int u = 0; u < 3; ++u) {
        const Vec2 hu = H.apply(grads[t][u]);
        for (int v = 0; v < 3; ++v)
          trips.push_back({tri[u], tri[v], mesh.area(t) * mesh::dot(hu, grads[t][v])});
      }
    }
    return linalg::CsrMatrix::from_triplets(mesh.vertex_count(), trips);
  }

  template <class Density>
  NewtonReport minimize(const Density& d, std::vector<double>& P, std::size_t max_iter, double tol) const {
    const double target = tol * (1.0 + linalg::norm2(load));
    linalg::remove_weighted_mean(P, mass);
    NewtonReport rep;
    double F = objective(d, P);
    std::vector<double> G = residual(d, P);
    double gnorm = linalg::norm2(G);
    double floor = residual_floor(d, P);
    std::vector<double> trial(P.size());
    while (gnorm > std::max(target, floor) && rep.iterations < max_iter) {
      ++rep.iterations;
      const linalg::CsrMatrix H = hessian(d, P);
      std::vector<double> rhs(G.size());
      for (std::size_t i = 0; i < G.size(); ++i) rhs[i] = -G[i];
      linalg::remove_weighted_mean(rhs);
      std::vector<double> step = P.size() < kDenseLimit
                                     ? linalg::solve_constant_kernel_direct(H, rhs, linalg::Gauge::RankOne)
                                     : linalg::solve_constant_kernel_sparse(H, rhs);
      linalg::remove_weighted_mean(step, mass);
      double slope = 0.0;
      for (std::size_t i = 0; i < G.size(); ++i) slope += G[i] * step[i];
      if (!(slope < 0.0)) {
        // Round-off made the Newton direction useless; fall back to steepest descent.
        for (std::size_t i = 0; i < G.size(); ++i) step[i] = -G[i];
        linalg::remove_weighted_mean(step, mass);
        slope = 0.0;
        for (std::size_t i = 0; i < G.size(); ++i) slope += G[i] * step[i];
      }
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        for (std::size_t i = 0; i < P.size(); ++i) trial[i] = P[i] + alpha * step[i];
        const double F_trial = objective(d, trial);
        if (F_trial <= F + 1e-4 * alpha * slope) {
          accepted = true;
        } else if (F_trial <= F + 1e-13 * std::max(1.0, std::abs(F))) {
          // F is flat at round-off level: judge the step by the gradient instead.
          accepted = linalg::norm2(residual(d, trial)) < gnorm;
        }
        if (accepted) {
          F = F_trial;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;
      P.swap(trial);
      G = residual(d, P);
      gnorm = linalg::norm2(G);
      floor = residual_floor(d, P);
    }
    rep.gradient_norm = gnorm;
    rep.roundoff_floor = floor;
    rep.objective = F;
    rep.converged = gnorm <= std::max(target, floor);
    return rep;
  }
};

std::vector<double> start_vector(const std::vector<double>& initial, std::size_t n) {
  if (initial.empty()) return std::vector<double>(n, 0.0);
  if (initial.size() != n) throw ValidationError("initial guess length != vertex count");
  return initial;
}

void check_load(std::span<const double> load, std::size_t n) {
  if (load.size() != n) throw ValidationError("load length != vertex count");
  double l1 = 0.0;
  for (double v : load) l1 += std::abs(v);
  const double sum = std::accumulate(load.begin(), load.end(), 0.0);
  if (std::abs(sum) > 1e-10 * std::max(l1, std::numeric_limits<double>::min()))
    throw PreconditionError("load is not balanced");
}

}  // namespace

PLaplacianResult p_laplacian_solve(const mesh::TriMesh& mesh, std::vector<double> load, double r, double c,
                                   double gamma, const PLaplacianOptions& options) {
  if (!(gamma > 1.0)) throw PreconditionError("gamma must exceed 1 for the p-Laplacian");
  check_params(gamma, r, c);
  check_load(load, mesh.vertex_count());
  const double q = 2.0 / (gamma - 1.0);
  const double cq = std::pow(c, q);
  const PLaplacianDensity d{r, cq, 1.0 / (gamma - 1.0), (gamma - 1.0) / (2.0 * gamma) * cq};
  PLaplacianResult res;
  const Newton newton(mesh, load);
  std::vector<double> P = start_vector(options.initial, mesh.vertex_count());
  res.report = newton.minimize(d, P, options.max_iterations, options.tol);
  const std::vector<double> G = newton.residual(d, P);
  for (double g : G) res.weak_residual = std::max(res.weak_residual, std::abs(g));
  if (!res.report.converged)
    throw SolverFailure("p-Laplacian Newton iteration did not converge", res.report.iterations,
                        res.report.gradient_norm);
  res.p = fem::make_pressure_field(mesh, std::move(P));
  res.load = std::move(load);
  return res;
}

PLaplacianResult p_laplacian_solve(const mesh::TriMesh& mesh, const fem::ScalarFunction& S, double r, double c,
                                   double gamma, const PLaplacianOptions& options) {
  return p_laplacian_solve(mesh, network::project_source(mesh, S), r, c, gamma, options);
}

double penalty_density(double s, double c, double eps) {
  const double excess = s - 1.0 / (c * c);
  return excess > 0.0 ? excess * excess / (4.0 * eps) : 0.0;
}

double penalty_derivative(double s, double c, double eps) {
  const double excess = s - 1.0 / (c * c);
  return excess > 0.0 ? excess / (2.0 * eps) : 0.0;
}

PenalizedResult penalized_solve(const mesh::TriMesh& mesh, std::vector<double> load, double r, double c,
                                double eps, const PenalizedOptions& options) {
  if (!(eps > 0.0)) throw PreconditionError("eps must be positive");
  if (!(r > 0.0)) throw PreconditionError("r must be positive");
  if (!(c > 0.0)) throw PreconditionError("c must be positive");
  check_load(load, mesh.vertex_count());
  const PenaltyDensity d{r, c, eps};
  const Newton newton(mesh, load);
  std::vector<double> P = start_vector(options.initial, mesh.vertex_count());
  PenalizedResult res;
  res.eps = eps;
  res.report = newton.minimize(d, P, options.max_iterations, options.tol);
  if (!res.report.converged)
    throw SolverFailure("penalized Newton iteration did not converge", res.report.iterations,
                        res.report.gradient_norm);
  res.p = fem::make_pressure_field(mesh, std::move(P));
  res.load = std::move(load);
  res.multiplier.resize(mesh.triangle_count());
  double active_area = 0.0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double s = mesh::dot(res.p.gradients[t], res.p.gradients[t]);
    const double a2 = std::max(0.0, s - 1.0 / (c * c)) / eps;
    res.multiplier[t] = a2;
    const double cg = c * std::sqrt(s);
    res.max_c_grad = std::max(res.max_c_grad, cg);
    if (cg > 1.0 - options.active_tol) active_area += mesh.area(t);
    res.complementarity = std::max(res.complementarity, a2 * std::abs(c * c * s - 1.0));
  }
  res.active_fraction = active_area / mesh.total_area();
  return res;
}

std::vector<PenalizedResult> penalized_sweep(const mesh::TriMesh& mesh, std::vector<double> load, double r,
                                             double c, std::span<const double> eps,
                                             const PenalizedOptions& options) {
  std::vector<PenalizedResult> out;
  PenalizedOptions opts = options;
  for (double e : eps) {
    out.push_back(penalized_solve(mesh, load, r, c, e, opts));
    opts.initial = out.back().p.values;
  }
  return out;
}

tensor::CellTensorField recover_tensor(const mesh::TriMesh& mesh, const fem::PressureField& p, double c,
                                       double gamma) {
  if (!(gamma > 1.0)) throw PreconditionError("tensor recovery from the pressure alone needs gamma > 1");
  if (p.gradients.size() != mesh.triangle_count()) throw ValidationError("pressure field does not match the mesh");
  const double cq = std::pow(c, 2.0 / (gamma - 1.0));
  const double expo = -(gamma - 2.0) / (gamma - 1.0);
  tensor::CellTensorField C(mesh.triangle_count(), 1);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec2 g = p.gradients[t];
    const double s = mesh::dot(g, g);
    if (s == 0.0) continue;
    C.values[t] = (cq * std::pow(s, expo)) * tensor::SymTensor2::outer(g);
  }
  return C;
}

tensor::CellTensorField recover_tensor(const mesh::TriMesh& mesh, const PenalizedResult& result) {
  tensor::CellTensorField C(mesh.triangle_count(), 1);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Vec2 g = result.p.gradients[t];
    const double s = mesh::dot(g, g);
    if (s == 0.0 || result.multiplier[t] == 0.0) continue;
    C.values[t] = (result.multiplier[t] / s) * tensor::SymTensor2::outer(g);
  }
  return C;
}

std::vector<double> stationary_residual(const tensor::CellTensorField& C, const fem::PressureField& p, double c,
                                        const tensor::MetabolicLaw& law) {
  std::vector<double> res(C.triangle_count());
  for (std::size_t t = 0; t < res.size(); ++t) {
    const tensor::SymTensor2 Ct = C.mean(t);
    const tensor::SymTensor2 act = (c * c) * tensor::SymTensor2::outer(p.gradients[t]);
    res[t] = tensor::frobenius(act - tensor::metabolic_force(Ct, law).force);
  }
  return res;
}

}  // namespace netflow::steady

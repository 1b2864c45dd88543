#include "netflow/fem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "netflow/error.hpp"
#include "netflow/network.hpp"
#include "netflow/parallel.hpp"

namespace netflow::fem {

namespace {

constexpr std::size_t kDenseLimit = 200;
constexpr std::size_t kAssemblyChunk = 2048;

}  // namespace

StiffnessSystem assemble(const mesh::TriMesh& mesh, const CellTensorField& perm,
                         std::span<const double> r_cell) {
  const std::size_t nt = mesh.triangle_count();
  if (perm.triangle_count() != nt || perm.values.size() != nt * perm.pieces)
    throw ValidationError("permeability field does not match the mesh");
  if (r_cell.size() != nt) throw ValidationError("background permeability length != triangle count");

  const std::size_t chunks = parallel::chunk_count(nt, kAssemblyChunk);
  std::vector<std::vector<linalg::Triplet>> parts(chunks);
  std::vector<double> chunk_min(chunks, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chunk_argmin(chunks, 0);
  const auto tris = mesh.triangles();

  parallel::for_chunks(nt, kAssemblyChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    auto& out = parts[c];
    out.reserve(9 * (end - begin));
    for (std::size_t t = begin; t < end; ++t) {
      if (!(r_cell[t] >= 0.0)) throw PreconditionError("background permeability r must be nonnegative");
      const SymTensor2 total = r_cell[t] * SymTensor2::identity() + perm.mean(t);
      const double lmin = tensor::min_eigenvalue(total);
      if (lmin < chunk_min[c]) {
        chunk_min[c] = lmin;
        chunk_argmin[c] = t;
      }
      const auto grads = mesh.hat_gradients(t);
      const double area = mesh.area(t);
      double local[3][3];
      for (int u = 0; u < 3; ++u) {
        const Vec2 flux = total.apply(grads[u]);
        for (int v = u; v < 3; ++v) local[u][v] = local[v][u] = area * mesh::dot(flux, grads[v]);
      }
      for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v) out.push_back({tris[t][u], tris[t][v], local[u][v]});
    }
  });

  StiffnessSystem sys;
  sys.min_permeability = std::numeric_limits<double>::infinity();
  std::size_t worst = 0;
  for (std::size_t c = 0; c < chunks; ++c)
    if (chunk_min[c] < sys.min_permeability) {
      sys.min_permeability = chunk_min[c];
      worst = chunk_argmin[c];
    }
  if (sys.min_permeability < 0.0)
    throw IndefinitePermeability("total permeability has a negative eigenvalue " +
                                     std::to_string(sys.min_permeability),
                                 worst);
  if (!(sys.min_permeability > 0.0))
    throw PreconditionError("total permeability is not uniformly positive definite (r = 0 needs a "
                            "positive definite tensor field)");

  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<linalg::Triplet> triplets;
  triplets.reserve(total);
  for (const auto& p : parts) triplets.insert(triplets.end(), p.begin(), p.end());
  sys.matrix = linalg::CsrMatrix::from_triplets(mesh.vertex_count(), triplets);
  sys.mass = mesh.lumped_mass();
  return sys;
}

StiffnessSystem assemble(const mesh::TriMesh& mesh, const CellTensorField& perm, double r) {
  const std::vector<double> r_cell(mesh.triangle_count(), r);
  return assemble(mesh, perm, r_cell);
}

PressureField make_pressure_field(const mesh::TriMesh& mesh, std::vector<double> values) {
  if (values.size() != mesh.vertex_count()) throw ValidationError("pressure length != vertex count");
  PressureField p;
  p.gradients.resize(mesh.triangle_count());
  const auto tris = mesh.triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto g = mesh.hat_gradients(t);
    p.gradients[t] = values[tris[t][0]] * g[0] + values[tris[t][1]] * g[1] + values[tris[t][2]] * g[2];
  }
  p.values = std::move(values);
  return p;
}

PoissonSolution solve_system(const mesh::TriMesh& mesh, const StiffnessSystem& system,
                             std::vector<double> load, const PoissonOptions& options) {
  const std::size_t n = mesh.vertex_count();
  if (load.size() != n) throw ValidationError("load length != vertex count");
  double l1 = 0.0;
  for (double v : load) l1 += std::abs(v);
  const double sum = std::accumulate(load.begin(), load.end(), 0.0);
  if (std::abs(sum) > 1e-10 * std::max(l1, std::numeric_limits<double>::min()))
    throw PreconditionError("load is not balanced: sum = " + std::to_string(sum));

  PoissonSolution sol;
  std::vector<double> x;
  const bool dense = options.solver == SolverKind::Direct ||
                     (options.solver == SolverKind::Auto && n < kDenseLimit);
  const double lnorm = linalg::norm2(load);
  if (lnorm == 0.0) {
    x.assign(n, 0.0);
  } else if (dense) {
    x = linalg::solve_constant_kernel_direct(system.matrix, load, linalg::Gauge::Pin);
  } else {
    std::vector<double> b = load;
    linalg::remove_weighted_mean(b);
    x.assign(n, 0.0);
    linalg::CgOptions opts;
    opts.rel_tol = options.rel_tol;
    opts.deflate_constants = true;
    const auto report = linalg::conjugate_gradient(system.matrix, b, x, opts);
    sol.iterations = report.iterations;
    if (!report.converged)
      throw SolverFailure("Poisson conjugate gradients did not converge", report.iterations, report.residual);
  }
  linalg::remove_weighted_mean(x, system.mass);

  std::vector<double> kx(n);
  system.matrix.multiply(x, kx);
  for (std::size_t i = 0; i < n; ++i) kx[i] -= load[i];
  sol.residual = linalg::norm2(kx);
  if (sol.residual > 1e-10 * lnorm)
    throw SolverFailure("Poisson residual above tolerance", sol.iterations, sol.residual);
  sol.p = make_pressure_field(mesh, std::move(x));
  sol.load = std::move(load);
  return sol;
}

PoissonSolution solve_poisson(const mesh::TriMesh& mesh, const CellTensorField& perm, double r,
                              std::vector<double> load, const PoissonOptions& options) {
  const StiffnessSystem sys = assemble(mesh, perm, r);
  return solve_system(mesh, sys, std::move(load), options);
}

PoissonSolution solve_poisson(const mesh::TriMesh& mesh, const CellTensorField& perm, double r,
                              const ScalarFunction& S, const PoissonOptions& options) {
  return solve_poisson(mesh, perm, r, network::project_source(mesh, S), options);
}

EnergyReport evaluate_energy(const mesh::TriMesh& mesh, const CellTensorField& perm, double r,
                             const PoissonSolution& solution, const MetabolicLaw& law) {
  EnergyReport rep;
  const std::size_t nt = mesh.triangle_count();
  for (std::size_t t = 0; t < nt; ++t) {
    const SymTensor2 total = r * SymTensor2::identity() + perm.mean(t);
    rep.pumping += mesh.area(t) * tensor::quadratic(total, solution.p.gradients[t]);
    const double piece_area = mesh.area(t) / static_cast<double>(perm.pieces);
    for (std::size_t k = 0; k < perm.pieces; ++k) rep.metabolic += piece_area * law.M(tensor::frobenius(perm.at(t, k)));
  }
  for (std::size_t i = 0; i < solution.load.size(); ++i)
    rep.pumping_source += solution.p.values[i] * solution.load[i];
  return rep;
}

EnergyReport semi_discrete_energy(const mesh::TriMesh& mesh, const CellTensorField& perm, double r,
                                  const ScalarFunction& S, const MetabolicLaw& law) {
  return evaluate_energy(mesh, perm, r, solve_poisson(mesh, perm, r, S), law);
}

std::array<Vec2, 3> gauss_points(const mesh::TriMesh& mesh, std::size_t t) {
  const auto tri = mesh.triangles()[t];
  const auto v = mesh.vertices();
  const Vec2 p0 = v[tri[0]], p1 = v[tri[1]], p2 = v[tri[2]];
  constexpr double hi = 2.0 / 3.0, lo = 1.0 / 6.0;
  return {hi * p0 + lo * p1 + lo * p2, lo * p0 + hi * p1 + lo * p2, lo * p0 + lo * p1 + hi * p2};
}

CellTensorField sample_at_gauss_points(const mesh::TriMesh& mesh, const TensorFunction& perm) {
  CellTensorField field(mesh.triangle_count(), 3);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto pts = gauss_points(mesh, t);
    for (std::size_t k = 0; k < 3; ++k) field.at(t, k) = perm(pts[k]);
  }
  return field;
}

namespace {

void require_positive(std::span<const double> C, std::size_t edges) {
  if (C.size() != edges) throw ValidationError("conductivity vector length != edge count");
  for (double c : C)
    if (!(c > 0.0)) throw PreconditionError("conductivities must be strictly positive");
}

}  // namespace

Prop1Report verify_prop1(const mesh::TriMesh& mesh, const mesh::DiamondMap& diamonds,
                         std::span<const double> C, const ScalarFunction& S) {
  require_positive(C, mesh.edge_count());
  const CellTensorField lifted = tensor::lift_Qh(mesh, diamonds, C);
  const PoissonSolution sol = solve_poisson(mesh, lifted, 0.0, S);
  const auto graph = network::NetworkGraph::from_mesh(mesh, diamonds);

  Prop1Report rep;
  rep.residual.assign(mesh.vertex_count(), 0.0);
  const auto& P = sol.p.values;
  const auto edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double q = graph.weight(e, C[e], true) * (P[edges[e].i] - P[edges[e].j]);
    rep.residual[edges[e].i] += q;
    rep.residual[edges[e].j] -= q;
  }
  for (std::size_t i = 0; i < rep.residual.size(); ++i) {
    rep.residual[i] -= sol.load[i];
    rep.max_residual = std::max(rep.max_residual, std::abs(rep.residual[i]));
  }
  rep.source_norm = linalg::norm2(sol.load);
  rep.relative = rep.source_norm > 0.0 ? rep.max_residual / rep.source_norm : rep.max_residual;
  return rep;
}

Prop2Report verify_prop2(const mesh::TriMesh& mesh, const mesh::DiamondMap& diamonds,
                         std::span<const double> C, const ScalarFunction& S, const MetabolicLaw& law) {
  require_positive(C, mesh.edge_count());
  const CellTensorField lifted = tensor::lift_Qh(mesh, diamonds, C);
  const PoissonSolution sol = solve_poisson(mesh, lifted, 0.0, S);
  const auto graph = network::NetworkGraph::from_mesh(mesh, diamonds);

  Prop2Report rep;
  rep.discrete = network::discrete_energy(graph, C, sol.p.values, law, true);
  const EnergyReport semi = evaluate_energy(mesh, lifted, 0.0, sol, law);
  rep.semi_discrete = semi.total();
  rep.metabolic_semi_discrete = semi.metabolic;
  for (std::size_t e = 0; e < C.size(); ++e) rep.metabolic_discrete += diamonds.volume[e] * law.M(C[e]);
  const double scale = std::abs(rep.semi_discrete);
  rep.gap = scale > 0.0 ? std::abs(rep.discrete - rep.semi_discrete) / scale
                        : std::abs(rep.discrete - rep.semi_discrete);
  return rep;
}

namespace {

double level_energy(std::size_t nx, const ConvergenceProblem& problem) {
  const mesh::TriMesh m = mesh::build_structured_triangulation(nx, nx, problem.rect);
  const CellTensorField perm = problem.perm ? sample_at_gauss_points(m, problem.perm)
                                            : CellTensorField(m.triangle_count(), 1);
  const ScalarFunction zero = [](Vec2) { return 0.0; };
  const PoissonSolution sol = solve_poisson(m, perm, problem.r, problem.source ? problem.source : zero);
  return evaluate_energy(m, perm, problem.r, sol, problem.law).total();
}

}  // namespace

ConvergenceTable convergence_study(std::span<const std::size_t> levels, const ConvergenceProblem& problem) {
  if (levels.size() < 3) throw PreconditionError("convergence study needs at least 3 levels");
  if (problem.reference_factor < 2) throw PreconditionError("reference factor must be at least 2");
  for (std::size_t k = 1; k < levels.size(); ++k)
    if (levels[k] <= levels[k - 1]) throw PreconditionError("levels must be strictly increasing");

  ConvergenceTable table;
  table.reference_nx = problem.reference_factor * levels.back();
  table.reference_energy = level_energy(table.reference_nx, problem);
  table.reference_exact_gap = problem.exact_energy
                                  ? std::abs(table.reference_energy - *problem.exact_energy)
                                  : std::numeric_limits<double>::quiet_NaN();

  const double width = problem.rect.x1 - problem.rect.x0;
  const double height = problem.rect.y1 - problem.rect.y0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    ConvergenceRow row;
    row.nx = levels[k];
    const double n = static_cast<double>(levels[k]);
    row.h = std::hypot(width / n, height / n);
    row.energy = level_energy(levels[k], problem);
    row.gap = std::abs(table.reference_energy - row.energy);
    row.order_running = std::numeric_limits<double>::quiet_NaN();
    if (k > 0) {
      const auto& prev = table.rows.back();
      if (prev.gap > 0.0 && row.gap > 0.0) row.order_running = std::log(prev.gap / row.gap) / std::log(prev.h / row.h);
    }
    table.rows.push_back(row);
  }

  bool fit = true;
  for (const auto& row : table.rows) fit = fit && row.gap > 0.0;
  if (!fit) {
    table.order = table.r_squared = std::numeric_limits<double>::quiet_NaN();
    return table;
  }
  const double m = static_cast<double>(table.rows.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (const auto& row : table.rows) {
    const double x = std::log(row.h), y = std::log(row.gap);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double cov = sxy - sx * sy / m;
  const double varx = sxx - sx * sx / m;
  const double vary = syy - sy * sy / m;
  table.order = cov / varx;
  table.r_squared = vary > 0.0 ? cov * cov / (varx * vary) : 1.0;
  return table;
}

}  // namespace netflow::fem

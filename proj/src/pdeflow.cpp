#include "netflow/pdeflow.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <limits>

#include "netflow/error.hpp"
#include "netflow/network.hpp"

namespace netflow::flow {

void ModelParams::validate() const {
  if (!(r > 0.0)) throw PreconditionError("r must be positive");
  if (!(c2 > 0.0)) throw PreconditionError("c2 must be positive");
  if (!(D >= 0.0)) throw PreconditionError("D must be nonnegative");
  if (!(dt > 0.0)) throw PreconditionError("dt must be positive");
  if (!(t_end >= 0.0)) throw PreconditionError("t_end must be nonnegative");
  if (!(psd_tol >= 0.0)) throw PreconditionError("psd_tol must be nonnegative");
}

struct FlowProblem::Factorization {
  double dt = 0.0;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
};

FlowProblem::FlowProblem(const mesh::TriMesh& mesh, ModelParams params, std::vector<double> load)
    : mesh_(&mesh), params_(std::move(params)), load_(std::move(load)) {
  params_.validate();
  if (load_.size() != mesh.vertex_count()) throw ValidationError("load length != vertex count");
  mass_ = mesh.lumped_mass();
  const tensor::CellTensorField none(mesh.triangle_count(), 1);
  laplacian_ = fem::assemble(mesh, none, 1.0).matrix;
  for (std::uint32_t v = 0; v < mesh.vertex_count(); ++v)
    if (!dirichlet() || !mesh.boundary_vertex(v)) interior_.push_back(v);
}

FlowProblem::FlowProblem(const mesh::TriMesh& mesh, ModelParams params, const fem::ScalarFunction& S)
    : FlowProblem(mesh, std::move(params), network::project_source(mesh, S)) {}

FlowProblem::~FlowProblem() = default;
FlowProblem::FlowProblem(FlowProblem&&) noexcept = default;
FlowProblem& FlowProblem::operator=(FlowProblem&&) noexcept = default;

const FlowProblem::Factorization& FlowProblem::factorization(double dt) const {
  if (factor_ && factor_->dt == dt) return *factor_;
  const std::size_t n = mesh_->vertex_count();
  std::vector<int> local(n, -1);
  for (std::size_t k = 0; k < interior_.size(); ++k) local[interior_[k]] = static_cast<int>(k);
  std::vector<Eigen::Triplet<double>> trips;
  const double d2 = params_.D * params_.D;
  const auto rp = laplacian_.row_ptr();
  const auto col = laplacian_.col();
  const auto val = laplacian_.values();
  for (std::uint32_t v : interior_) {
    trips.emplace_back(local[v], local[v], mass_[v] / dt);
    for (std::size_t k = rp[v]; k < rp[v + 1]; ++k)
      if (local[col[k]] >= 0) trips.emplace_back(local[v], local[col[k]], d2 * val[k]);
  }
  const auto m = static_cast<Eigen::Index>(interior_.size());
  Eigen::SparseMatrix<double> a(m, m);
  a.setFromTriplets(trips.begin(), trips.end());
  auto f = std::make_unique<Factorization>();
  f->dt = dt;
  f->llt.compute(a);
  if (f->llt.info() != Eigen::Success) throw SingularSystem("diffusion system factorization failed");
  factor_ = std::move(f);
  return *factor_;
}

fem::PoissonSolution FlowProblem::pressure(std::span<const SymTensor2> C) const {
  const tensor::CellTensorField perm = tensor::nodal_to_cell(*mesh_, C);
  return fem::solve_poisson(*mesh_, perm, params_.r, load_);
}

FlowState FlowProblem::initial_state(NodalTensorField C0) const {
  if (C0.size() != mesh_->vertex_count()) throw ValidationError("initial tensor field length != vertex count");
  if (dirichlet())
    for (std::size_t v = 0; v < C0.size(); ++v)
      if (mesh_->boundary_vertex(v) && !(C0[v] == SymTensor2{}))
        throw PreconditionError("initial tensor must vanish on the boundary when D > 0 (vertex " +
                                std::to_string(v) + ")");
  FlowState s;
  s.p = pressure(C0);
  s.C = std::move(C0);
  return s;
}

double FlowProblem::norm2(std::span<const SymTensor2> X) const {
  double s = 0.0;
  for (std::size_t v = 0; v < X.size(); ++v) s += mass_[v] * tensor::frobenius_dot(X[v], X[v]);
  return s;
}

FlowEnergy FlowProblem::energy(const FlowState& state) const {
  FlowEnergy e;
  const std::size_t n = state.C.size();
  if (dirichlet()) {
    std::vector<double> comp(n), kc(n);
    const double weights[3] = {1.0, 2.0, 1.0};
    for (int which = 0; which < 3; ++which) {
      for (std::size_t v = 0; v < n; ++v)
        comp[v] = which == 0 ? state.C[v].a : which == 1 ? state.C[v].b : state.C[v].c;
      laplacian_.multiply(comp, kc);
      double q = 0.0;
      for (std::size_t v = 0; v < n; ++v) q += comp[v] * kc[v];
      e.dirichlet += 0.5 * params_.D * params_.D * weights[which] * q;
    }
  }
  for (std::size_t i = 0; i < n; ++i) e.pumping += state.p.p.values[i] * load_[i];
  e.pumping *= params_.c2;
  for (std::size_t v = 0; v < n; ++v) e.metabolic += mass_[v] * params_.law.M(tensor::frobenius(state.C[v]));
  return e;
}

FlowState FlowProblem::step(const FlowState& state, std::optional<double> dt_opt, StepReport* report) const {
  const double dt = dt_opt.value_or(params_.dt);
  if (!(dt > 0.0)) throw PreconditionError("dt must be positive");
  const mesh::TriMesh& m = *mesh_;
  const std::size_t n = m.vertex_count();
  StepReport rep;
  rep.dt = dt;

  // Activation c^2 grad p (x) grad p, moved from cells to vertices by area weighting.
  NodalTensorField activation(n);
  const auto tris = m.triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const SymTensor2 g = (m.area(t) / 3.0) * SymTensor2::outer(state.p.p.gradients[t]);
    for (auto v : tris[t]) activation[v] += g;
  }
  NodalTensorField rhs(n);
  for (std::size_t v = 0; v < n; ++v) {
    const tensor::MetabolicForce f = tensor::metabolic_force(state.C[v], params_.law);
    if (f.frozen) ++rep.frozen;
    const SymTensor2 act = (params_.c2 / mass_[v]) * activation[v];
    rhs[v] = state.C[v] + dt * (act - f.force);
  }

  NodalTensorField next(n);
  if (params_.D > 0.0) {
    const Factorization& f = factorization(dt);
    const auto mi = static_cast<Eigen::Index>(interior_.size());
    Eigen::VectorXd b(mi);
    for (int which = 0; which < 3; ++which) {
      for (Eigen::Index k = 0; k < mi; ++k) {
        const SymTensor2& r = rhs[interior_[static_cast<std::size_t>(k)]];
        b[k] = mass_[interior_[static_cast<std::size_t>(k)]] / dt * (which == 0 ? r.a : which == 1 ? r.b : r.c);
      }
      const Eigen::VectorXd x = f.llt.solve(b);
      for (Eigen::Index k = 0; k < mi; ++k) {
        SymTensor2& out = next[interior_[static_cast<std::size_t>(k)]];
        (which == 0 ? out.a : which == 1 ? out.b : out.c) = x[k];
      }
    }
  } else {
    next = std::move(rhs);
  }

  for (auto& C : next) {
    const tensor::Eigen2 e = tensor::eig(C);
    if (e.lambda2 < -10.0 * params_.psd_tol) {
      ++rep.breaches;
    } else if (e.lambda2 < 0.0 && e.lambda2 >= -params_.psd_tol) {
      C = e.lambda1 * SymTensor2::outer(e.v1);
      ++rep.clamped;
    }
  }
  rep.min_eig = tensor::min_eigenvalue(tensor::nodal_to_cell(m, next));

  FlowState out;
  out.t = state.t + dt;
  out.p = pressure(next);
  out.C = std::move(next);
  if (report) *report = rep;
  return out;
}

FlowState flow_step(const FlowProblem& problem, const FlowState& state, StepReport* report) {
  return problem.step(state, std::nullopt, report);
}

FlowTrajectory run_flow(const FlowProblem& problem, NodalTensorField C0, const RunFlowOptions& options) {
  const ModelParams& prm = problem.params();
  FlowTrajectory traj;
  FlowState state = problem.initial_state(std::move(C0));
  double E = problem.energy(state).total();
  const double E0 = E;
  double dissipation = 0.0;
  traj.log.push_back({0.0, E, 0.0, tensor::min_eigenvalue(tensor::nodal_to_cell(problem.mesh(), state.C)), 0.0});
  traj.snapshots.push_back({0.0, state.C});

  const double eps_t = 1e-12 * std::max(1.0, prm.t_end);
  std::size_t accepted = 0;
  while (state.t < prm.t_end - eps_t) {
    double h = std::min(prm.dt, prm.t_end - state.t);
    std::size_t halvings = 0;
    for (;;) {
      StepReport rep;
      std::optional<FlowState> trial;
      double E_new = std::numeric_limits<double>::infinity();
      try {
        trial = problem.step(state, h, &rep);
        E_new = problem.energy(*trial).total();
      } catch (const IndefinitePermeability&) {
        // The trial tensor left the admissible set; treat it like an energy increase.
      }
      if (trial && E_new <= E + 1e-12 * std::max(1.0, std::abs(E))) {
        NodalTensorField velocity(trial->C.size());
        for (std::size_t v = 0; v < velocity.size(); ++v) velocity[v] = (1.0 / h) * (trial->C[v] - state.C[v]);
        const double v2 = problem.norm2(velocity);
        dissipation += h * v2;
        traj.max_step_velocity = std::max(traj.max_step_velocity, std::sqrt(v2));
        if (E_new > E) traj.energy_monotone = false;
        traj.breaches += rep.breaches;
        traj.clamped += rep.clamped;
        state = std::move(*trial);
        E = E_new;
        traj.log.push_back({state.t, E, dissipation, rep.min_eig, h});
        ++accepted;
        break;
      }
      ++traj.rejected_steps;
      if (++halvings > options.max_halvings)
        throw SolverFailure("energy could not be decreased by halving the step", halvings, E_new - E);
      h *= 0.5;
    }
    const bool last = state.t >= prm.t_end - eps_t;
    if (last || (options.snapshot_every && accepted % options.snapshot_every == 0))
      traj.snapshots.push_back({state.t, state.C});
  }
  if (traj.snapshots.size() == 1 && accepted == 0) traj.snapshots.push_back({state.t, state.C});
  traj.dissipation_gap = std::abs(E0 - E - dissipation);
  traj.final_state = std::move(state);
  return traj;
}

std::string to_string(Convexity c) {
  switch (c) {
    case Convexity::StrictlyConvex:
      return "strictly convex";
    case Convexity::Convex:
      return "convex";
    case Convexity::Violated:
      return "violated";
  }
  return "unknown";
}

ConvexityReport check_convexity_conditions(const MetabolicLaw& law, double D, double poincare,
                                           std::span<const double> s_grid) {
  if (!(D >= 0.0)) throw PreconditionError("D must be nonnegative");
  if (!(poincare > 0.0)) throw PreconditionError("Poincare constant must be positive");
  if (s_grid.empty()) throw PreconditionError("s-grid must not be empty");
  ConvexityReport rep;
  const double bound = -D * D * poincare;
  bool strict = true;
  for (double s : s_grid) {
    if (!(s > 0.0)) throw PreconditionError("s-grid must be positive");
    const double second = law.d2M(s);
    const double ratio = law.m(s);
    const double lhs = second >= ratio ? ratio : second;
    if (lhs < bound) {
      rep.grid = Convexity::Violated;
      rep.violated_at = s;
      break;
    }
    if (!(lhs > bound)) strict = false;
  }
  if (rep.grid != Convexity::Violated) rep.grid = strict ? Convexity::StrictlyConvex : Convexity::Convex;

  const double g = law.gamma();
  if (g < 1.0)
    rep.power_law = Convexity::Violated;
  else if (D > 0.0 || g > 1.0)
    rep.power_law = Convexity::StrictlyConvex;
  else
    rep.power_law = Convexity::Convex;
  return rep;
}

std::vector<double> default_convexity_grid(std::size_t points) {
  std::vector<double> s(points);
  const double lo = std::log(1e-6), hi = std::log(1e3);
  for (std::size_t k = 0; k < points; ++k)
    s[k] = std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points > 1 ? points - 1 : 1));
  return s;
}

}  // namespace netflow::flow

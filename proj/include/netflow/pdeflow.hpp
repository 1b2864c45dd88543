#pragma once

// Time integration of the tensor gradient flow
//
//   dC/dt - D^2 Lap C - c^2 grad p (x) grad p + M'(|C|)/|C| C = 0,
//   -div((r I + C) grad p) = S,
//
// with P1 tensors at the vertices, implicit diffusion, explicit reaction and
// an energy-decrease safeguard on every step.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netflow/fem.hpp"
#include "netflow/mesh.hpp"
#include "netflow/tensor.hpp"

namespace netflow::flow {

using tensor::MetabolicLaw;
using tensor::NodalTensorField;
using tensor::SymTensor2;

struct ModelParams {
  double r = 1.0;
  double c2 = 1.0;
  double D = 0.0;
  MetabolicLaw law{2.0};
  double dt = 1e-2;
  double t_end = 1.0;
  double psd_tol = 1e-10;

  void validate() const;
};

struct FlowEnergy {
  double dirichlet = 0.0;  // D^2/2 |grad C|^2
  double pumping = 0.0;    // c^2 sum_i P_i S_i
  double metabolic = 0.0;  // lumped-mass quadrature of M(|C|)
  double total() const noexcept { return dirichlet + pumping + metabolic; }
};

struct FlowState {
  double t = 0.0;
  NodalTensorField C;
  fem::PoissonSolution p;
};

struct StepReport {
  double dt = 0.0;
  double min_eig = 0.0;         // smallest eigenvalue over cells after the step
  std::size_t clamped = 0;      // vertices whose small negative eigenvalue was set to zero
  std::size_t breaches = 0;     // vertices with eigenvalue below -10 psd_tol
  std::size_t frozen = 0;       // vertices treated as extinct (gamma < 1)
};

/// Owns the discretization shared by all steps: load vector, lumped mass,
/// the P1 Laplacian and a cached factorization of M_L / dt + D^2 K. The mesh
/// is referenced, not copied, and must outlive the problem.
class FlowProblem {
 public:
  FlowProblem(const mesh::TriMesh& mesh, ModelParams params, std::vector<double> load);
  FlowProblem(const mesh::TriMesh& mesh, ModelParams params, const fem::ScalarFunction& S);
  ~FlowProblem();
  FlowProblem(FlowProblem&&) noexcept;
  FlowProblem& operator=(FlowProblem&&) noexcept;

  const mesh::TriMesh& mesh() const noexcept { return *mesh_; }
  const ModelParams& params() const noexcept { return params_; }
  std::span<const double> load() const noexcept { return load_; }
  std::span<const double> mass() const noexcept { return mass_; }
  bool dirichlet() const noexcept { return params_.D > 0.0; }

  /// Pressure for the permeability r I + (cell average of C).
  fem::PoissonSolution pressure(std::span<const SymTensor2> C) const;

  FlowState initial_state(NodalTensorField C0) const;
  FlowEnergy energy(const FlowState& state) const;

  /// Lumped L2 Frobenius norm squared, sum_v w_v |X_v|^2.
  double norm2(std::span<const SymTensor2> X) const;

  /// One semi-implicit step of size dt (params().dt when omitted).
  FlowState step(const FlowState& state, std::optional<double> dt = std::nullopt,
                 StepReport* report = nullptr) const;

 private:
  struct Factorization;
  const Factorization& factorization(double dt) const;

  const mesh::TriMesh* mesh_;
  ModelParams params_;
  std::vector<double> load_;
  std::vector<double> mass_;
  linalg::CsrMatrix laplacian_;
  std::vector<std::uint32_t> interior_;  // unknowns of the diffusion solve
  mutable std::unique_ptr<Factorization> factor_;
};

/// One step with params().dt. Same as problem.step(state).
FlowState flow_step(const FlowProblem& problem, const FlowState& state, StepReport* report = nullptr);

struct FlowLogRow {
  double t = 0.0;
  double energy = 0.0;
  double dissipation_cum = 0.0;
  double min_eig = 0.0;
  double dt = 0.0;
};

struct FlowSnapshot {
  double t = 0.0;
  NodalTensorField C;
};

struct FlowTrajectory {
  std::vector<FlowLogRow> log;
  std::vector<FlowSnapshot> snapshots;
  std::size_t rejected_steps = 0;
  std::size_t breaches = 0;
  std::size_t clamped = 0;
  double max_step_velocity = 0.0;  // max over steps of |Delta C / dt| (lumped L2)
  bool energy_monotone = true;
  /// |E(0) - E(T) - dissipation|
  double dissipation_gap = 0.0;
  FlowState final_state;
};

struct RunFlowOptions {
  std::size_t snapshot_every = 0;  // 0: first and last state only
  std::size_t max_halvings = 20;
};

/// Integrates from C0 to params().t_end. A step that raises the energy by more
/// than 1e-12 max(1, |E|) is rejected and retried with half the step size; the
/// nominal step is restored after each accepted step. Throws SolverFailure if
/// max_halvings is exhausted.
FlowTrajectory run_flow(const FlowProblem& problem, NodalTensorField C0, const RunFlowOptions& options = {});

enum class Convexity { StrictlyConvex, Convex, Violated };

std::string to_string(Convexity c);

struct ConvexityReport {
  Convexity grid = Convexity::StrictlyConvex;  // literal check of the two conditions on the grid
  std::optional<double> violated_at;           // first grid point that fails
  Convexity power_law = Convexity::StrictlyConvex;  // closed-form classification of s^gamma/gamma
};

/// Checks M'(s)/s >= -D^2 C_Omega where M'' >= M'/s, and M'' >= -D^2 C_Omega
/// elsewhere, at every s of the grid. Strict inequalities everywhere give
/// StrictlyConvex.
ConvexityReport check_convexity_conditions(const MetabolicLaw& law, double D, double poincare,
                                           std::span<const double> s_grid);

/// Logarithmic grid on [1e-6, 1e3].
std::vector<double> default_convexity_grid(std::size_t points = 200);

}  // namespace netflow::flow

#pragma once

// P1 finite elements for -div((r I + C) grad p) = S with homogeneous Neumann
// conditions, the associated energies, and checks of the exact identities
// linking the FEM problem to the rescaled network model.

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "netflow/linalg.hpp"
#include "netflow/mesh.hpp"
#include "netflow/tensor.hpp"

namespace netflow::fem {

using mesh::Vec2;
using tensor::CellTensorField;
using tensor::MetabolicLaw;
using tensor::SymTensor2;
using ScalarFunction = std::function<double(Vec2)>;
using TensorFunction = std::function<SymTensor2(Vec2)>;

struct StiffnessSystem {
  linalg::CsrMatrix matrix;
  std::vector<double> mass;  // lumped mass, also the gauge weights
  /// Smallest eigenvalue of the per-triangle total permeability r I + mean(C_T).
  double min_permeability = 0.0;
};

/// K_uv = sum_T area(T) grad(phi_u) . (r_T I + mean(C_T)) grad(phi_v).
///
/// Throws IndefinitePermeability when some triangle has a negative total
/// permeability eigenvalue and PreconditionError when the smallest one is zero
/// (r = 0 is accepted only for a uniformly positive definite field).
StiffnessSystem assemble(const mesh::TriMesh& mesh, const CellTensorField& perm,
                         std::span<const double> r_cell);
StiffnessSystem assemble(const mesh::TriMesh& mesh, const CellTensorField& perm, double r);

/// Vertex values with the per-triangle constant gradients.
struct PressureField {
  std::vector<double> values;
  std::vector<Vec2> gradients;
};

PressureField make_pressure_field(const mesh::TriMesh& mesh, std::vector<double> values);

enum class SolverKind { Auto, Direct, Iterative };

struct PoissonOptions {
  SolverKind solver = SolverKind::Auto;  // Auto: dense below 200 vertices, else CG
  double rel_tol = 1e-11;
};

struct PoissonSolution {
  PressureField p;
  std::vector<double> load;
  double residual = 0.0;  // ||K P - load||_2
  std::size_t iterations = 0;
};

/// Solves K P = load in the gauge sum_i mass_i P_i = 0. The load must sum to zero.
PoissonSolution solve_system(const mesh::TriMesh& mesh, const StiffnessSystem& system,
                             std::vector<double> load, const PoissonOptions& options = {});

PoissonSolution solve_poisson(const mesh::TriMesh& mesh, const CellTensorField& perm, double r,
                              const ScalarFunction& S, const PoissonOptions& options = {});
PoissonSolution solve_poisson(const mesh::TriMesh& mesh, const CellTensorField& perm, double r,
                              std::vector<double> load, const PoissonOptions& options = {});

struct EnergyReport {
  double pumping = 0.0;         // sum_T area grad p . (r I + C) grad p
  double pumping_source = 0.0;  // sum_i P_i S_i, equal to `pumping` at the solution
  double metabolic = 0.0;       // sum over pieces of (piece area) M(|C|)
  double total() const noexcept { return pumping + metabolic; }
};

EnergyReport evaluate_energy(const mesh::TriMesh& mesh, const CellTensorField& perm, double r,
                             const PoissonSolution& solution, const MetabolicLaw& law);

EnergyReport semi_discrete_energy(const mesh::TriMesh& mesh, const CellTensorField& perm, double r,
                                  const ScalarFunction& S, const MetabolicLaw& law);

/// The three equal-weight Gauss points of triangle t.
std::array<Vec2, 3> gauss_points(const mesh::TriMesh& mesh, std::size_t t);

/// Samples a smooth tensor field at the Gauss points (three pieces per triangle).
CellTensorField sample_at_gauss_points(const mesh::TriMesh& mesh, const TensorFunction& perm);

struct Prop1Report {
  std::vector<double> residual;  // per vertex
  double max_residual = 0.0;
  double relative = 0.0;  // max_residual / ||S||_2
  double source_norm = 0.0;
};

/// Solves the FEM problem with perm = lift of C and r = 0, then evaluates the
/// rescaled Kirchhoff law at the vertex pressures.
Prop1Report verify_prop1(const mesh::TriMesh& mesh, const mesh::DiamondMap& diamonds,
                         std::span<const double> C, const ScalarFunction& S);

struct Prop2Report {
  double discrete = 0.0;       // rescaled discrete energy at the FEM vertex pressures
  double semi_discrete = 0.0;  // semi-discrete energy of the lifted field
  double gap = 0.0;            // |discrete - semi_discrete| / |semi_discrete|
  double metabolic_discrete = 0.0;
  double metabolic_semi_discrete = 0.0;
};

Prop2Report verify_prop2(const mesh::TriMesh& mesh, const mesh::DiamondMap& diamonds,
                         std::span<const double> C, const ScalarFunction& S, const MetabolicLaw& law);

struct ConvergenceProblem {
  mesh::Rect rect{};
  TensorFunction perm;  // empty: zero tensor
  double r = 1.0;
  ScalarFunction source;
  MetabolicLaw law{2.0};
  std::size_t reference_factor = 4;
  std::optional<double> exact_energy;  // reported alongside, not used as the reference
};

struct ConvergenceRow {
  std::size_t nx = 0;
  double h = 0.0;
  double energy = 0.0;
  double gap = 0.0;
  double order_running = 0.0;  // NaN on the first row
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  std::size_t reference_nx = 0;
  double reference_energy = 0.0;
  double reference_exact_gap = 0.0;  // |reference - exact| when the exact value is known, else NaN
  double order = 0.0;                // least-squares slope of log gap against log h
  double r_squared = 0.0;
};

/// Energy gaps on nx x nx structured meshes of `rect` (nx from `levels`) against
/// a reference computed with reference_factor times the finest nx.
ConvergenceTable convergence_study(std::span<const std::size_t> levels, const ConvergenceProblem& problem);

}  // namespace netflow::fem

#pragma once

// Steady states: the pointwise 1D problem, the gamma > 1 p-Laplacian
// minimization, the penalized gamma = 1 free-boundary problem and the recovery
// of the conductance tensor from a pressure field.

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "netflow/fem.hpp"
#include "netflow/mesh.hpp"
#include "netflow/tensor.hpp"

namespace netflow::steady {

using mesh::Vec2;

/// Values on the uniform grid x_k = k / N, k = 0..N.
struct Profile1D {
  std::vector<double> x;
  std::vector<double> values;

  std::size_t size() const noexcept { return x.size(); }
};

Profile1D uniform_grid(std::size_t N);

/// B(x) = -int_0^x S by the trapezoid rule on the grid.
Profile1D flux_profile(const std::function<double(double)>& S, std::size_t N = 1024);

enum class Regime { UniqueRoot, Active, Inactive, TwoRoots, Tangent, Extinction };

std::string_view to_string(Regime r);

struct SteadyPoint {
  Regime regime = Regime::UniqueRoot;
  double C = 0.0;             // the stable steady state (C2 for two roots, 0 on extinction)
  double C_unstable = 0.0;    // C1 for two roots, the tangent point for tangent, else 0
};

struct SteadyReport {
  std::vector<SteadyPoint> points;
  double threshold = 0.0;  // r_gamma for gamma in (0, 1), else 0
  Profile1D C;             // stable branch
};

/// Minimum of (r + C)^2 C^(gamma - 1) over C > 0, for gamma in (0, 1).
double extinction_threshold(double gamma, double r);

/// argmin of (r + C)^2 C^(gamma - 1), i.e. (1 - gamma) r / (1 + gamma).
double threshold_point(double gamma, double r);

/// Solves (r + C)^2 C^(gamma - 1) = c^2 B^2 at one point.
SteadyPoint steady_point(double gamma, double r, double c, double B);

SteadyReport steady_1d(double gamma, double r, double c, const Profile1D& B);

struct Flow1DResult {
  std::vector<double> C;             // state at t_end
  std::vector<double> extinction_time;  // first time the point reached 0 (NaN if never)
  double t_end = 0.0;
  std::size_t steps = 0;
};

/// Explicit Euler for dC/dt = c^2 B^2 / (r + C)^2 - M'(C), clipped at 0. For
/// gamma < 1 a point that reaches 0 stays there. For gamma = 1 the M' term is
/// the subgradient element 1.
Flow1DResult flow_1d(double gamma, double r, double c, std::span<const double> B,
                     std::span<const double> C0, double dt, double t_end);

struct NewtonReport {
  std::size_t iterations = 0;
  double gradient_norm = 0.0;  // ||grad F||_2 over the zero-mean subspace
  double roundoff_floor = 0.0;  // estimated rounding error of that norm at the final iterate
  double objective = 0.0;
  bool converged = false;
};

struct PLaplacianOptions {
  std::size_t max_iterations = 200;
  /// Stop when ||grad F|| <= tol (1 + ||S||), or once it reaches the
  /// rounding-error floor of its own evaluation.
  double tol = 1e-11;
  std::vector<double> initial;  // empty: zero
};

struct PLaplacianResult {
  fem::PressureField p;
  std::vector<double> load;
  NewtonReport report;
  double weak_residual = 0.0;  // max_i |int (r + c^q |grad p|^(2/(gamma-1))) grad p . grad phi_i - S_i|
};

/// Minimizes F[p] = int r |grad p|^2 / 2 + (gamma-1)/(2 gamma) c^q |grad p|^(2 gamma/(gamma-1)) - S p
/// (q = 2/(gamma-1)) over zero-mean P1 functions by damped Newton with Armijo
/// backtracking. Its Euler-Lagrange equation is
/// -div((r + c^q |grad p|^(2/(gamma-1))) grad p) = S.
PLaplacianResult p_laplacian_solve(const mesh::TriMesh& mesh, std::vector<double> load, double r,
                                   double c, double gamma, const PLaplacianOptions& options = {});
PLaplacianResult p_laplacian_solve(const mesh::TriMesh& mesh, const fem::ScalarFunction& S, double r,
                                   double c, double gamma, const PLaplacianOptions& options = {});

/// Scalar root of (r + c^q s^(2/(gamma-1))) s = B with s >= 0 (integrated 1D form).
double p_laplacian_1d_slope(double r, double c, double gamma, double B);

struct PenalizedOptions {
  std::size_t max_iterations = 200;
  double tol = 1e-11;
  double active_tol = 1e-6;  // active set: c |grad p| > 1 - active_tol
  std::vector<double> initial;
};

struct PenalizedResult {
  double eps = 0.0;
  fem::PressureField p;
  std::vector<double> load;
  std::vector<double> multiplier;  // a^2 per triangle
  NewtonReport report;
  double max_c_grad = 0.0;         // max_T c |grad p|
  double active_fraction = 0.0;    // area fraction of the active set
  double complementarity = 0.0;    // max_T a^2 |c^2 |grad p|^2 - 1|
};

/// Minimizes J[p] = int r |grad p|^2 / 2 + ((|grad p|^2 - 1/c^2)_+)^2 / (4 eps) - S p.
/// The first variation has the coefficient r + (|grad p|^2 - 1/c^2)_+ / eps.
PenalizedResult penalized_solve(const mesh::TriMesh& mesh, std::vector<double> load, double r, double c,
                                double eps, const PenalizedOptions& options = {});

/// Solves for each eps in order, warm-starting from the previous solution.
std::vector<PenalizedResult> penalized_sweep(const mesh::TriMesh& mesh, std::vector<double> load, double r,
                                             double c, std::span<const double> eps,
                                             const PenalizedOptions& options = {});

/// Penalty density and its derivative with respect to s = |grad p|^2.
double penalty_density(double s, double c, double eps);
double penalty_derivative(double s, double c, double eps);

/// gamma > 1: C_T = c^(2/(gamma-1)) |grad p|^(-2(gamma-2)/(gamma-1)) grad p (x) grad p, zero
/// where grad p = 0.
tensor::CellTensorField recover_tensor(const mesh::TriMesh& mesh, const fem::PressureField& p, double c,
                                       double gamma);

/// gamma = 1: C_T = a^2 grad p (x) grad p / |grad p|^2 with the penalized multiplier
/// a^2, so that (r + C) grad p = (r + a^2) grad p and |C| = a^2.
tensor::CellTensorField recover_tensor(const mesh::TriMesh& mesh, const PenalizedResult& result);

/// Per-cell | c^2 g (x) g - m(|C|) C | of the stationary tensor equation.
std::vector<double> stationary_residual(const tensor::CellTensorField& C, const fem::PressureField& p,
                                        double c, const tensor::MetabolicLaw& law);

}  // namespace netflow::steady

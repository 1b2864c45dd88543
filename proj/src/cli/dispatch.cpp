#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "netflow/cli.hpp"
#include "netflow/fem.hpp"
#include "netflow/io.hpp"
#include "netflow/mesh.hpp"
#include "netflow/network.hpp"
#include "netflow/pdeflow.hpp"
#include "netflow/rng.hpp"
#include "netflow/steady.hpp"

namespace netflow::cli {

namespace {

using std::numbers::pi;
using mesh::Vec2;

/// Files written by a workflow, in creation order.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::filesystem::path add(const std::string& name) {
    if (seen_.insert(name).second) names_.push_back(name);
    return dir_ / name;
  }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
  std::set<std::string> seen_;
};

/// Raised when a verify run completes but its checks fail.
class VerifyFailed : public Error {
 public:
  using Error::Error;
};

mesh::TriMesh make_mesh(const RunConfig& c, std::ostream& log) {
  if (c.mesh_file.empty()) return mesh::build_structured_triangulation(c.nx, c.ny);
  std::vector<std::string> warnings;
  mesh::TriMesh m = mesh::load_mesh(c.mesh_file, &warnings);
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  return m;
}

fem::ScalarFunction source_2d(const RunConfig& c) {
  const double A = c.amplitude;
  if (c.source == "cos") return [A](Vec2 p) { return A * pi * pi * std::cos(pi * p.x); };
  if (c.source == "cos2d") return [A](Vec2 p) { return A * (std::cos(pi * p.x) + std::cos(pi * p.y)); };
  if (c.source == "cosxy") return [A](Vec2 p) { return A * 2.0 * pi * pi * std::cos(pi * p.x) * std::cos(pi * p.y); };
  return [](Vec2) { return 0.0; };
}

std::vector<double> random_conductivities(std::size_t n, std::uint64_t seed) {
  Lcg64 rng(seed);
  std::vector<double> C(n);
  for (double& v : C) v = rng.uniform(0.1, 2.0);
  return C;
}

void run_discrete(const RunConfig& c, Artifacts& files, std::ostream& log) {
  const mesh::TriMesh m = make_mesh(c, log);
  const mesh::DiamondMap d = mesh::compute_diamonds(m);
  const auto graph = network::NetworkGraph::from_mesh(m, d);
  const auto C0 = random_conductivities(m.edge_count(), c.seed);
  const auto S = network::project_source(m, source_2d(c));
  const tensor::MetabolicLaw law(c.gamma);
  const auto traj = network::run_adaptation(graph, C0, S, law, c.dt, c.t_end, c.rescaled, c.snapshot_every);

  io::CsvWriter csv(files.add("trajectory.csv"), {"t", "energy", "max_dC", "min_C"});
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    csv << traj.times[k] << traj.energy[k] << traj.max_dC[k] << traj.min_C[k];
    csv.end_row();
  }
  csv.close();
  const auto& final_C = traj.snapshots.back();
  io::CsvWriter snap(files.add("conductivity.csv"), {"edge_i", "edge_j", "C"});
  for (std::size_t e = 0; e < graph.edge_count(); ++e) {
    snap << static_cast<std::size_t>(graph.edges()[e].i) << static_cast<std::size_t>(graph.edges()[e].j)
         << final_C[e];
    snap.end_row();
  }
  snap.close();
  const auto lifted = tensor::lift_Qh(m, d, final_C);
  io::write_vtk(files.add("tensor_final.vtk"), m, &lifted);
  log << "discrete: " << traj.times.size() - 1 << " steps, final energy " << io::format_double(traj.energy.back())
      << ", stable dt bound " << io::format_double(traj.stable_dt) << (traj.stationary ? " (stationary)" : "")
      << '\n';
}

void run_verify(const RunConfig& c, Artifacts& files, std::ostream& log) {
  const mesh::TriMesh m = make_mesh(c, log);
  const mesh::DiamondMap d = mesh::compute_diamonds(m);
  const auto C = random_conductivities(m.edge_count(), c.seed);
  const auto S = source_2d(c);
  const tensor::MetabolicLaw law(c.gamma);
  const fem::Prop1Report p1 = fem::verify_prop1(m, d, C, S);
  const fem::Prop2Report p2 = fem::verify_prop2(m, d, C, S, law);

  io::CsvWriter r1(files.add("prop1_residual.csv"), {"vertex", "residual"});
  for (std::size_t i = 0; i < p1.residual.size(); ++i) {
    r1 << i << p1.residual[i];
    r1.end_row();
  }
  r1.close();
  io::CsvWriter r2(files.add("prop2_gap.csv"), {"discrete", "semi_discrete", "gap"});
  r2 << p2.discrete << p2.semi_discrete << p2.gap;
  r2.end_row();
  r2.close();
  const bool ok1 = p1.relative <= 1e-8;
  const bool ok2 = p2.gap <= 1e-10;
  log << "verify: kirchhoff residual / |S| = " << io::format_double(p1.relative) << (ok1 ? " ok" : " FAILED") << '\n'
      << "verify: energy gap = " << io::format_double(p2.gap) << (ok2 ? " ok" : " FAILED") << '\n';
  if (!ok1 || !ok2) throw VerifyFailed("verification thresholds not met");
}

tensor::NodalTensorField initial_tensor(const RunConfig& c, const mesh::TriMesh& m) {
  tensor::NodalTensorField C0(m.vertex_count());
  Vec2 lo{m.vertices()[0]}, hi{m.vertices()[0]};
  for (const Vec2& p : m.vertices()) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  for (std::size_t v = 0; v < m.vertex_count(); ++v) {
    const Vec2 p = m.vertices()[v];
    const double x = (p.x - lo.x) / (hi.x - lo.x);
    const double y = (p.y - lo.y) / (hi.y - lo.y);
    if (c.c0 == "bump") {
      const double w = 16.0 * x * (1.0 - x) * y * (1.0 - y);
      C0[v] = w * tensor::SymTensor2{1.0 + x, 0.3, 1.0 + y};
    } else if (c.c0 == "identity") {
      C0[v] = tensor::SymTensor2::identity();
    }
    if (c.D > 0.0 && m.boundary_vertex(v)) C0[v] = {};
  }
  return C0;
}

void run_flow(const RunConfig& c, Artifacts& files, std::ostream& log) {
  const mesh::TriMesh m = make_mesh(c, log);
  flow::ModelParams params;
  params.r = c.r;
  params.c2 = c.c2;
  params.D = c.D;
  params.law = tensor::MetabolicLaw(c.gamma);
  params.dt = c.dt;
  params.t_end = c.t_end;
  params.psd_tol = c.psd_tol;
  const flow::FlowProblem problem(m, params, source_2d(c));
  flow::RunFlowOptions opts;
  opts.snapshot_every = c.snapshot_every;

  const auto conv = flow::check_convexity_conditions(params.law, c.D, c.poincare, flow::default_convexity_grid());
  io::CsvWriter cc(files.add("convexity.csv"), {"grid", "power_law", "violated_at"});
  cc << flow::to_string(conv.grid) << flow::to_string(conv.power_law)
     << (conv.violated_at ? *conv.violated_at : std::nan(""));
  cc.end_row();
  cc.close();

  const auto traj = flow::run_flow(problem, initial_tensor(c, m), opts);
  io::CsvWriter csv(files.add("flow_log.csv"), {"t", "E_D", "dissipation_cum", "min_eig", "dt"});
  for (const auto& row : traj.log) {
    csv << row.t << row.energy << row.dissipation_cum << row.min_eig << row.dt;
    csv.end_row();
  }
  csv.close();
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
    std::ostringstream name;
    name << "snapshot_" << std::setw(4) << std::setfill('0') << k << ".vtk";
    const auto cells = tensor::nodal_to_cell(m, traj.snapshots[k].C);
    io::write_vtk(files.add(name.str()), m, &cells, traj.snapshots[k].C);
  }
  log << "flow: " << traj.log.size() - 1 << " accepted steps, " << traj.rejected_steps << " rejected, "
      << traj.breaches << " PSD breaches, energy " << io::format_double(traj.log.front().energy) << " -> "
      << io::format_double(traj.log.back().energy) << ", dissipation gap " << io::format_double(traj.dissipation_gap)
      << ", convexity " << flow::to_string(conv.power_law) << '\n';
}

void run_steady1d(const RunConfig& c, Artifacts& files, std::ostream& log) {
  if (c.source != "cos" && c.source != "zero") throw ConfigError("steady1d supports source=cos or source=zero");
  const double A = c.amplitude;
  const bool zero = c.source == "zero";
  const auto B = steady::flux_profile(
      [A, zero](double x) { return zero ? 0.0 : A * pi * pi * std::cos(pi * x); }, c.N);
  const auto rep = steady::steady_1d(c.gamma, c.r, std::sqrt(c.c2), B);
  io::CsvWriter csv(files.add("steady1d.csv"), {"x", "B", "C", "regime"});
  for (std::size_t k = 0; k < B.size(); ++k) {
    csv << B.x[k] << B.values[k] << rep.C.values[k] << steady::to_string(rep.points[k].regime);
    csv.end_row();
  }
  csv.close();
  log << "steady1d: " << B.size() << " points";
  if (c.gamma < 1.0) log << ", threshold r_gamma = " << io::format_double(rep.threshold);
  log << '\n';
}

void run_plap(const RunConfig& c, Artifacts& files, std::ostream& log) {
  const mesh::TriMesh m = make_mesh(c, log);
  const double cc = std::sqrt(c.c2);
  const auto res = steady::p_laplacian_solve(m, source_2d(c), c.r, cc, c.gamma);
  io::CsvWriter csv(files.add("plap_summary.csv"), {"iterations", "gradient_norm", "weak_residual", "objective"});
  csv << res.report.iterations << res.report.gradient_norm << res.weak_residual << res.report.objective;
  csv.end_row();
  csv.close();
  const auto C = steady::recover_tensor(m, res.p, cc, c.gamma);
  const io::NamedScalars pressure{"pressure", res.p.values};
  io::write_vtk(files.add("plap.vtk"), m, &C, {}, std::span(&pressure, 1));
  log << "steady-plap: " << res.report.iterations << " Newton iterations, gradient norm "
      << io::format_double(res.report.gradient_norm) << '\n';
}

void run_penalized(const RunConfig& c, Artifacts& files, std::ostream& log) {
  const mesh::TriMesh m = make_mesh(c, log);
  const double cc = std::sqrt(c.c2);
  const auto load = network::project_source(m, source_2d(c));
  const auto sweep = steady::penalized_sweep(m, load, c.r, cc, c.eps);
  io::CsvWriter csv(files.add("penalized_sweep.csv"), {"eps", "max_c_grad_p", "active_fraction"});
  for (const auto& s : sweep) {
    csv << s.eps << s.max_c_grad << s.active_fraction;
    csv.end_row();
  }
  csv.close();
  const auto C = steady::recover_tensor(m, sweep.back());
  const io::NamedScalars pressure{"pressure", sweep.back().p.values};
  io::write_vtk(files.add("penalized.vtk"), m, &C, {}, std::span(&pressure, 1));
  log << "steady-penalized: final eps " << io::format_double(sweep.back().eps) << ", max c|grad p| "
      << io::format_double(sweep.back().max_c_grad) << '\n';
}

void run_converge(const RunConfig& c, Artifacts& files, std::ostream& log) {
  std::vector<std::size_t> levels;
  for (std::size_t k = 0; k < c.levels; ++k) levels.push_back(c.coarse_nx << k);
  fem::ConvergenceProblem prob;
  prob.r = c.r;
  prob.source = source_2d(c);
  prob.law = tensor::MetabolicLaw(c.gamma);
  if (c.source == "cos") prob.exact_energy = c.amplitude * c.amplitude * pi * pi / (2.0 * c.r);
  if (!(c.r > 0.0)) throw ConfigError("r must be positive for command 'converge'");
  const auto table = fem::convergence_study(levels, prob);
  io::CsvWriter csv(files.add("convergence.csv"), {"h", "gap", "order_running"});
  for (const auto& row : table.rows) {
    csv << row.h << row.gap << row.order_running;
    csv.end_row();
  }
  csv.close();
  io::CsvWriter fit(files.add("convergence_fit.csv"),
                    {"order", "r_squared", "reference_nx", "reference_energy", "reference_exact_gap"});
  fit << table.order << table.r_squared << table.reference_nx << table.reference_energy << table.reference_exact_gap;
  fit.end_row();
  fit.close();
  log << "converge: order " << io::format_double(table.order) << ", R^2 " << io::format_double(table.r_squared)
      << '\n';
}

}  // namespace

int dispatch(const RunConfig& config, std::ostream& log) {
  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) {
    log << "error: cannot create output directory " << config.out << ": " << ec.message() << '\n';
    return kConfigError;
  }
  Artifacts files(config.out);
  int code = kOk;
  std::string message;
  try {
    if (config.command == "discrete") run_discrete(config, files, log);
    else if (config.command == "verify") run_verify(config, files, log);
    else if (config.command == "flow") run_flow(config, files, log);
    else if (config.command == "steady1d") run_steady1d(config, files, log);
    else if (config.command == "steady-plap") run_plap(config, files, log);
    else if (config.command == "steady-penalized") run_penalized(config, files, log);
    else if (config.command == "converge") run_converge(config, files, log);
    else throw ConfigError("unknown command '" + config.command + "'");
  } catch (const VerifyFailed& e) {
    code = kVerifyFailure;
    message = e.what();
  } catch (const ConfigError& e) {
    code = kConfigError;
    message = e.what();
  } catch (const ParseError& e) {
    code = kConfigError;
    message = e.what();
  } catch (const ValidationError& e) {
    code = kConfigError;
    message = e.what();
  } catch (const std::exception& e) {
    code = kSolverFailure;
    message = e.what();
  }
  if (!message.empty()) log << "error: " << message << '\n';
  write_manifest(config.out, config, files.names(), code, message);
  return code;
}

int main(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = parse_config(args);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    if (std::string_view(e.what()).find("missing command") == std::string_view::npos) err << usage();
    return kConfigError;
  }
  return dispatch(config, out);
}

}  // namespace netflow::cli

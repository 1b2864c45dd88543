#include "netflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "netflow/error.hpp"
#include "netflow/linalg.hpp"

namespace netflow::network {

namespace {

constexpr std::size_t kDenseLimit = 200;

double norm1(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s;
}

}  // namespace

void NetworkGraph::build_adjacency() {
  const std::size_t n = positions_.size();
  adj_ptr_.assign(n + 1, 0);
  for (const GraphEdge& e : edges_) {
    ++adj_ptr_[e.i + 1];
    ++adj_ptr_[e.j + 1];
  }
  for (std::size_t i = 0; i < n; ++i) adj_ptr_[i + 1] += adj_ptr_[i];
  adjacency_.resize(adj_ptr_[n]);
  std::vector<std::size_t> next(adj_ptr_.begin(), adj_ptr_.end() - 1);
  for (std::uint32_t k = 0; k < edges_.size(); ++k) {
    adjacency_[next[edges_[k].i]++] = {edges_[k].j, k};
    adjacency_[next[edges_[k].j]++] = {edges_[k].i, k};
  }
}

NetworkGraph NetworkGraph::from_mesh(const mesh::TriMesh& mesh, const mesh::DiamondMap& diamonds) {
  NetworkGraph g;
  g.positions_.assign(mesh.vertices().begin(), mesh.vertices().end());
  g.edges_.reserve(mesh.edge_count());
  for (const mesh::Edge& e : mesh.edges()) g.edges_.push_back({e.v0, e.v1});
  g.length_ = diamonds.length;
  g.volume_ = diamonds.volume;
  g.build_adjacency();
  return g;
}

NetworkGraph NetworkGraph::from_edges(std::vector<Vec2> positions, std::vector<GraphEdge> edges,
                                      std::vector<double> volumes) {
  if (!volumes.empty() && volumes.size() != edges.size())
    throw ValidationError("volume vector length != edge count");
  NetworkGraph g;
  g.positions_ = std::move(positions);
  g.length_.reserve(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    GraphEdge& e = edges[k];
    if (e.i >= g.positions_.size() || e.j >= g.positions_.size())
      throw ValidationError("edge " + std::to_string(k) + " references a missing vertex");
    if (e.i == e.j) throw ValidationError("edge " + std::to_string(k) + " is a loop");
    if (e.i > e.j) std::swap(e.i, e.j);
    const double L = mesh::norm(g.positions_[e.i] - g.positions_[e.j]);
    if (!(L > 0.0)) throw InvalidGeometry("edge " + std::to_string(k) + " has zero length");
    g.length_.push_back(L);
  }
  g.edges_ = std::move(edges);
  g.volume_ = volumes.empty() ? g.length_ : std::move(volumes);
  g.build_adjacency();
  return g;
}

PressureVec solve_kirchhoff(const NetworkGraph& graph, std::span<const double> C,
                            std::span<const double> S, bool rescaled) {
  const std::size_t n = graph.vertex_count();
  if (C.size() != graph.edge_count()) throw ValidationError("conductivity vector length != edge count");
  if (S.size() != n) throw ValidationError("source vector length != vertex count");
  for (double c : C)
    if (!(c >= 0.0) || !std::isfinite(c)) throw PreconditionError("conductivities must be finite and nonnegative");
  const double s1 = norm1(S);
  const double total = std::accumulate(S.begin(), S.end(), 0.0);
  if (std::abs(total) > 1e-12 * s1)
    throw PreconditionError("source is not balanced: sum S_i = " + std::to_string(total));

  PressureVec P(n, 0.0);
  if (s1 == 0.0) return P;

  // Components of the positive-conductivity subgraph.
  constexpr std::uint32_t kUnset = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> comp(n, kUnset);
  std::uint32_t ncomp = 0;
  std::vector<std::uint32_t> stack;
  for (std::size_t root = 0; root < n; ++root) {
    if (comp[root] != kUnset) continue;
    comp[root] = ncomp;
    stack.assign(1, static_cast<std::uint32_t>(root));
    while (!stack.empty()) {
      const std::uint32_t v = stack.back();
      stack.pop_back();
      for (const auto& nb : graph.neighbors(v))
        if (C[nb.edge] > 0.0 && comp[nb.vertex] == kUnset) {
          comp[nb.vertex] = ncomp;
          stack.push_back(nb.vertex);
        }
    }
    ++ncomp;
  }
  std::uint32_t source_comp = kUnset;
  for (std::size_t i = 0; i < n; ++i) {
    if (S[i] == 0.0) continue;
    if (source_comp == kUnset) {
      source_comp = comp[i];
    } else if (comp[i] != source_comp) {
      throw SingularSystem("positive-conductivity subgraph is disconnected: vertex " +
                           std::to_string(i) + " carries a source but lies in component " +
                           std::to_string(comp[i]) + ", apart from the component of the other sources");
    }
  }

  std::vector<std::uint32_t> local(n, kUnset);
  std::vector<std::uint32_t> members;
  for (std::size_t i = 0; i < n; ++i)
    if (comp[i] == source_comp) {
      local[i] = static_cast<std::uint32_t>(members.size());
      members.push_back(static_cast<std::uint32_t>(i));
    }
  const std::size_t m = members.size();

  std::vector<linalg::Triplet> triplets;
  triplets.reserve(4 * graph.edge_count());
  const auto edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!(C[e] > 0.0) || local[edges[e].i] == kUnset) continue;
    const double w = graph.weight(e, C[e], rescaled);
    const std::uint32_t a = local[edges[e].i];
    const std::uint32_t b = local[edges[e].j];
    triplets.push_back({a, a, w});
    triplets.push_back({b, b, w});
    triplets.push_back({a, b, -w});
    triplets.push_back({b, a, -w});
  }
  const linalg::CsrMatrix A = linalg::CsrMatrix::from_triplets(m, triplets);
  std::vector<double> b(m);
  for (std::size_t k = 0; k < m; ++k) b[k] = S[members[k]];
  linalg::remove_weighted_mean(b);

  std::vector<double> x;
  if (m < kDenseLimit) {
    x = linalg::solve_constant_kernel_direct(A, b, linalg::Gauge::RankOne);
  } else {
    x.assign(m, 0.0);
    linalg::CgOptions opts;
    opts.deflate_constants = true;
    opts.rel_tol = 1e-12;
    const auto report = linalg::conjugate_gradient(A, b, x, opts);
    if (!report.converged)
      throw SolverFailure("Kirchhoff conjugate gradients did not converge", report.iterations,
                          report.residual);
  }
  for (std::size_t k = 0; k < m; ++k) P[members[k]] = x[k];
  linalg::remove_weighted_mean(P);

  const double res = kirchhoff_residual(graph, C, S, P, rescaled);
  const double s2 = linalg::norm2(S);
  if (res > 1e-10 * s2)
    throw SolverFailure("Kirchhoff residual above tolerance", 0, res);
  return P;
}

double kirchhoff_residual(const NetworkGraph& graph, std::span<const double> C,
                          std::span<const double> S, std::span<const double> P, bool rescaled) {
  std::vector<double> flux(graph.vertex_count(), 0.0);
  const auto edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double q = graph.weight(e, C[e], rescaled) * (P[edges[e].i] - P[edges[e].j]);
    flux[edges[e].i] += q;
    flux[edges[e].j] -= q;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < flux.size(); ++i) worst = std::max(worst, std::abs(flux[i] - S[i]));
  return worst;
}

SourceVec project_source(const mesh::TriMesh& mesh, const std::function<double(Vec2)>& S) {
  // Degree-2 rule with equal weights; point k sits at barycentric weight 2/3 on corner k.
  constexpr double kMajor = 2.0 / 3.0;
  constexpr double kMinor = 1.0 / 6.0;
  SourceVec F(mesh.vertex_count(), 0.0);
  const auto verts = mesh.vertices();
  const auto tris = mesh.triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const Vec2 p[3] = {verts[tris[t][0]], verts[tris[t][1]], verts[tris[t][2]]};
    const double w = mesh.area(t) / 3.0;
    for (int k = 0; k < 3; ++k) {
      double bary[3] = {kMinor, kMinor, kMinor};
      bary[k] = kMajor;
      const Vec2 x = bary[0] * p[0] + bary[1] * p[1] + bary[2] * p[2];
      const double value = S(x);
      for (int i = 0; i < 3; ++i) F[tris[t][i]] += w * value * bary[i];
    }
  }
  const std::vector<double> lumped = mesh.lumped_mass();
  const double mean = std::accumulate(F.begin(), F.end(), 0.0) / mesh.total_area();
  for (std::size_t i = 0; i < F.size(); ++i) F[i] -= mean * lumped[i];
  // The shift leaves a roundoff-sized remainder; put it on the largest-mass vertex.
  const double rest = std::accumulate(F.begin(), F.end(), 0.0);
  const auto heavy = static_cast<std::size_t>(std::max_element(lumped.begin(), lumped.end()) - lumped.begin());
  F[heavy] -= rest;
  return F;
}

double discrete_energy(const NetworkGraph& graph, std::span<const double> C,
                       std::span<const double> P, const tensor::MetabolicLaw& law, bool rescaled) {
  const auto edges = graph.edges();
  const auto L = graph.lengths();
  const auto vol = graph.volumes();
  double e_sum = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double g = (P[edges[e].j] - P[edges[e].i]) / L[e];
    e_sum += (C[e] * g * g + law.M(C[e])) * (rescaled ? vol[e] : L[e]);
  }
  return e_sum;
}

namespace {

ConductivityVec step_from(const NetworkGraph& graph, std::span<const double> C,
                          std::span<const double> P, const tensor::MetabolicLaw& law, double dt,
                          bool rescaled, const AdaptationOptions& options) {
  const auto edges = graph.edges();
  const auto L = graph.lengths();
  const auto vol = graph.volumes();
  ConductivityVec next(C.begin(), C.end());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (law.gamma() < 1.0 && C[e] == 0.0 && options.freeze_extinct) continue;
    const double g = (P[edges[e].j] - P[edges[e].i]) / L[e];
    const double rate = (g * g - law.dM(C[e])) * (rescaled ? vol[e] : L[e]);
    const double value = C[e] + dt * rate;
    if (!std::isfinite(value)) throw NonFiniteUpdate("non-finite conductivity update", e);
    next[e] = std::max(0.0, value);
  }
  return next;
}

}  // namespace

ConductivityVec adaptation_step(const NetworkGraph& graph, std::span<const double> C,
                                std::span<const double> S, const tensor::MetabolicLaw& law,
                                double dt, bool rescaled, const AdaptationOptions& options) {
  if (!(dt > 0.0)) throw PreconditionError("dt must be positive");
  const PressureVec P = solve_kirchhoff(graph, C, S, rescaled);
  return step_from(graph, C, P, law, dt, rescaled, options);
}

AdaptationTrajectory run_adaptation(const NetworkGraph& graph, std::span<const double> C0,
                                    std::span<const double> S, const tensor::MetabolicLaw& law,
                                    double dt, double t_end, bool rescaled,
                                    std::size_t snapshot_every, const AdaptationOptions& options) {
  if (!(dt > 0.0)) throw PreconditionError("dt must be positive");
  if (!(t_end >= 0.0)) throw PreconditionError("t_end must be nonnegative");
  const auto L = graph.lengths();
  const auto vol = graph.volumes();
  AdaptationTrajectory traj;
  traj.stable_dt = std::numeric_limits<double>::infinity();
  ConductivityVec C(C0.begin(), C0.end());
  double t = 0.0;
  double last_dC = 0.0;
  std::size_t step = 0;

  auto log_state = [&](const PressureVec& P) {
    traj.times.push_back(t);
    traj.energy.push_back(discrete_energy(graph, C, P, law, rescaled));
    traj.max_dC.push_back(last_dC);
    traj.min_C.push_back(C.empty() ? 0.0 : *std::min_element(C.begin(), C.end()));
    double stiff = 0.0;
    for (std::size_t e = 0; e < C.size(); ++e)
      if (C[e] > 0.0 || law.gamma() >= 2.0)
        stiff = std::max(stiff, law.d2M(C[e]) * (rescaled ? vol[e] : L[e]));
    if (stiff > 0.0) traj.stable_dt = std::min(traj.stable_dt, 1.0 / stiff);
  };

  PressureVec P = solve_kirchhoff(graph, C, S, rescaled);
  log_state(P);
  traj.snapshots.push_back(C);
  const double eps_t = 1e-12 * std::max(1.0, t_end);
  while (t < t_end - eps_t) {
    const double h = std::min(dt, t_end - t);
    ConductivityVec next = step_from(graph, C, P, law, h, rescaled, options);
    last_dC = 0.0;
    for (std::size_t e = 0; e < C.size(); ++e) last_dC = std::max(last_dC, std::abs(next[e] - C[e]));
    C = std::move(next);
    t += h;
    ++step;
    P = solve_kirchhoff(graph, C, S, rescaled);
    log_state(P);
    const bool done = last_dC < 1e-12 || t >= t_end - eps_t;
    if (done || (snapshot_every && step % snapshot_every == 0)) traj.snapshots.push_back(C);
    if (last_dC < 1e-12) {
      traj.stationary = true;
      break;
    }
  }
  return traj;
}

}  // namespace netflow::network

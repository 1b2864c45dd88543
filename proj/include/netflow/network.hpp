#pragma once

// The discrete transport network: Kirchhoff law, discrete energies and the
// conductivity adaptation ODE, in the plain and the rescaled scaling.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "netflow/mesh.hpp"
#include "netflow/tensor.hpp"

namespace netflow::network {

using mesh::Vec2;
using mesh::VertexId;

struct GraphEdge {
  VertexId i;
  VertexId j;
};

/// Undirected graph with per-edge length L_ij and diamond volume vol_ij.
class NetworkGraph {
 public:
  /// Edges, lengths and volumes of a triangulation (edge e of the mesh is edge e here).
  static NetworkGraph from_mesh(const mesh::TriMesh& mesh, const mesh::DiamondMap& diamonds);

  /// Lengths from the positions; `volumes` may be empty (then vol_ij = L_ij).
  static NetworkGraph from_edges(std::vector<Vec2> positions, std::vector<GraphEdge> edges,
                                 std::vector<double> volumes = {});

  std::size_t vertex_count() const noexcept { return positions_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  std::span<const Vec2> positions() const noexcept { return positions_; }
  std::span<const GraphEdge> edges() const noexcept { return edges_; }
  std::span<const double> lengths() const noexcept { return length_; }
  std::span<const double> volumes() const noexcept { return volume_; }

  struct Neighbor {
    VertexId vertex;
    std::uint32_t edge;
  };
  /// N(i) with the connecting edge indices.
  std::span<const Neighbor> neighbors(std::size_t i) const noexcept {
    return {adjacency_.data() + adj_ptr_[i], adj_ptr_[i + 1] - adj_ptr_[i]};
  }

  /// Kirchhoff edge weight: C/L (plain) or C vol / L^2 (rescaled).
  double weight(std::size_t e, double C, bool rescaled) const noexcept {
    return rescaled ? C * volume_[e] / (length_[e] * length_[e]) : C / length_[e];
  }

 private:
  void build_adjacency();

  std::vector<Vec2> positions_;
  std::vector<GraphEdge> edges_;
  std::vector<double> length_;
  std::vector<double> volume_;
  std::vector<std::size_t> adj_ptr_;
  std::vector<Neighbor> adjacency_;
};

using ConductivityVec = std::vector<double>;
using SourceVec = std::vector<double>;
using PressureVec = std::vector<double>;

/// Zero-mean P with -sum_j w_ij (P_j - P_i) = S_i.
///
/// The positive-conductivity subgraph must connect every vertex with S_i != 0.
/// Components without sources carry P = 0 before the global mean is removed.
PressureVec solve_kirchhoff(const NetworkGraph& graph, std::span<const double> C,
                            std::span<const double> S, bool rescaled);

/// max_i |sum_j w_ij (P_i - P_j) - S_i|
double kirchhoff_residual(const NetworkGraph& graph, std::span<const double> C,
                          std::span<const double> S, std::span<const double> P, bool rescaled);

/// S_i = integral of S against the hat function of vertex i (three-point Gauss
/// rule per triangle), then shifted by the lumped mass times the mean source so
/// that the entries sum to zero.
SourceVec project_source(const mesh::TriMesh& mesh, const std::function<double(Vec2)>& S);

/// plain: sum_e (C (dP/L)^2 + M(C)) L;  rescaled: sum_e (C (dP/L)^2 + M(C)) vol.
double discrete_energy(const NetworkGraph& graph, std::span<const double> C,
                       std::span<const double> P, const tensor::MetabolicLaw& law, bool rescaled);

struct AdaptationOptions {
  /// gamma < 1: edges at zero stay at zero. When false a singular update throws NonFiniteUpdate.
  bool freeze_extinct = true;
};

/// One forward Euler step C += dt w ((dP/L)^2 - M'(C)), clipped at zero, with P
/// from the current C and w = L (plain) or vol (rescaled).
ConductivityVec adaptation_step(const NetworkGraph& graph, std::span<const double> C,
                                std::span<const double> S, const tensor::MetabolicLaw& law,
                                double dt, bool rescaled, const AdaptationOptions& options = {});

struct AdaptationTrajectory {
  std::vector<double> times;
  std::vector<double> energy;
  std::vector<double> max_dC;  // |C(t_k) - C(t_{k-1})|_inf, 0 for the initial row
  std::vector<double> min_C;
  std::vector<ConductivityVec> snapshots;  // taken every `snapshot_every` steps and at the end
  /// min over logged states of 1 / max_e (w_e M''(C_e)); infinite when M'' vanishes.
  double stable_dt = 0.0;
  bool stationary = false;  // stopped early because |dC|_inf < 1e-12
};

AdaptationTrajectory run_adaptation(const NetworkGraph& graph, std::span<const double> C0,
                                    std::span<const double> S, const tensor::MetabolicLaw& law,
                                    double dt, double t_end, bool rescaled,
                                    std::size_t snapshot_every = 1,
                                    const AdaptationOptions& options = {});

}  // namespace netflow::network

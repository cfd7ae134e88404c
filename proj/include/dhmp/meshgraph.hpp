#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dhmp/tensor_types.hpp"

namespace dhmp::mesh {

enum class NodeType : std::uint8_t { Interior = 0, Boundary = 1, Source = 2 };
inline constexpr int kNumNodeTypes = 3;

/// Nodes of these types hold Dirichlet values and are not integrated.
inline bool is_pinned(NodeType t) { return t != NodeType::Interior; }

enum class Mode { Eulerian, Lagrangian };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

using Vec2 = std::array<double, 2>;
using Triangle = std::array<std::int32_t, 3>;

/// Directed edge (i, j). Message passing aggregates into i from j.
struct Edge {
  std::int32_t i;
  std::int32_t j;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};
using EdgeList = std::vector<Edge>;

struct MeshGraph {
  std::int32_t node_count = 0;
  EdgeList edges;  // sorted (i, j), bi-directed, one self-loop per node
  std::vector<Vec2> mesh_positions;
  std::vector<Vec2> world_positions;
  std::vector<NodeType> node_types;
  std::vector<Triangle> cells;
  Mode mode = Mode::Eulerian;
};

/// Builds the bi-directed graph with self-loops from triangle cells.
/// `world_positions` may be empty, in which case mesh positions are reused.
MeshGraph build_bidirected(const std::vector<Triangle>& cells,
                           const std::vector<Vec2>& positions,
                           const std::vector<NodeType>& node_types,
                           const std::vector<Vec2>& world_positions = {},
                           Mode mode = Mode::Eulerian);

/// Throws InvalidArgument describing the first violated graph invariant.
void validate(const MeshGraph& g);
void validate_edges(const EdgeList& edges, std::int32_t node_count);

/// Union of `edges` with every pair reachable in at most K directed hops.
/// Self-loops are kept but never extend reachability. Sorted, deduplicated.
EdgeList k_hop_closure(const EdgeList& edges, int k);

struct CoarseGraph {
  std::vector<std::uint8_t> selected;       // per fine node
  std::vector<std::int32_t> fine_index_of;  // coarse -> fine, ascending
  std::vector<std::int32_t> coarse_index_of;  // fine -> coarse, -1 if dropped
  EdgeList edges;  // coarse indices, sorted

  std::int32_t node_count() const {
    return static_cast<std::int32_t>(fine_index_of.size());
  }
};

CoarseGraph restrict_to_selected(const EdgeList& enhanced,
                                 const std::vector<std::uint8_t>& selected);

/// nx*ny nodes on the unit square, two triangles per quad. Interior nodes are
/// jittered by up to `jitter_scale` grid spacings per axis.
MeshGraph generate_grid_mesh(int nx, int ny, double jitter_scale,
                             std::uint64_t rng_seed);

/// Per-edge [X_ij, |X_ij|] and, in Lagrangian mode, [x_ij, |x_ij|], where
/// X_ij = X_j - X_i.
Matrix compute_edge_offsets(const EdgeList& edges,
                            const std::vector<Vec2>& mesh_positions,
                            const std::vector<Vec2>& world_positions,
                            Mode mode);
Matrix compute_edge_offsets(const MeshGraph& g, Mode mode);

inline int edge_offset_width(Mode m) { return m == Mode::Eulerian ? 3 : 6; }

/// Number of connected components of the undirected graph over the edges.
int count_components(const EdgeList& edges, std::int32_t node_count);

std::vector<int> degrees_without_self_loops(const MeshGraph& g);

/// Mesh file: `<stem>.json` manifest + `<stem>.bin` little-endian f64 blob
/// laid out as [mesh_positions row-major | world_positions row-major].
void save_mesh(const MeshGraph& g, const std::filesystem::path& stem);
MeshGraph load_mesh(const std::filesystem::path& stem);

}  // namespace dhmp::mesh

#include "dhmp/meshgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dhmp/error.hpp"
#include "dhmp/io.hpp"
#include "dhmp/rng.hpp"

namespace dhmp::mesh {

std::string to_string(Mode m) {
  return m == Mode::Eulerian ? "eulerian" : "lagrangian";
}

Mode mode_from_string(const std::string& s) {
  if (s == "eulerian") return Mode::Eulerian;
  if (s == "lagrangian") return Mode::Lagrangian;
  throw InvalidArgument("unknown mesh mode '" + s +
                        "' (expected eulerian or lagrangian)");
}

MeshGraph build_bidirected(const std::vector<Triangle>& cells,
                           const std::vector<Vec2>& positions,
                           const std::vector<NodeType>& node_types,
                           const std::vector<Vec2>& world_positions,
                           Mode mode) {
  if (cells.empty()) throw InvalidArgument("build_bidirected: no cells");
  const auto n = static_cast<std::int32_t>(positions.size());
  if (node_types.size() != positions.size()) {
    throw InvalidArgument("build_bidirected: node_types has " +
                          std::to_string(node_types.size()) +
                          " entries for " + std::to_string(n) + " nodes");
  }
  if (!world_positions.empty() && world_positions.size() != positions.size()) {
    throw InvalidArgument("build_bidirected: world_positions size mismatch");
  }

  std::vector<Edge> edges;
  edges.reserve(cells.size() * 6 + static_cast<std::size_t>(n));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& t = cells[c];
    for (auto v : t) {
      if (v < 0 || v >= n) {
        throw InvalidArgument("cell " + std::to_string(c) + " references node " +
                              std::to_string(v) + " but node_count is " +
                              std::to_string(n));
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw InvalidArgument("cell " + std::to_string(c) +
                            " is degenerate (repeated vertex)");
    }
    for (int a = 0; a < 3; ++a) {
      const auto u = t[a];
      const auto v = t[(a + 1) % 3];
      edges.push_back({u, v});
      edges.push_back({v, u});
    }
  }
  for (std::int32_t v = 0; v < n; ++v) edges.push_back({v, v});
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  MeshGraph g;
  g.node_count = n;
  g.edges = std::move(edges);
  g.mesh_positions = positions;
  g.world_positions = world_positions.empty() ? positions : world_positions;
  g.node_types = node_types;
  g.cells = cells;
  g.mode = mode;
  return g;
}

void validate_edges(const EdgeList& edges, std::int32_t node_count) {
  if (!std::is_sorted(edges.begin(), edges.end())) {
    throw InvalidArgument("edge list is not sorted by (i, j)");
  }
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw InvalidArgument("edge list has duplicate edges");
  }
  std::vector<std::uint8_t> has_loop(static_cast<std::size_t>(node_count), 0);
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= node_count || e.j >= node_count) {
      throw InvalidArgument("edge (" + std::to_string(e.i) + "," +
                            std::to_string(e.j) + ") out of range");
    }
    if (e.i == e.j) {
      has_loop[static_cast<std::size_t>(e.i)] = 1;
    } else if (!std::binary_search(edges.begin(), edges.end(),
                                   Edge{e.j, e.i})) {
      throw InvalidArgument("edge (" + std::to_string(e.i) + "," +
                            std::to_string(e.j) + ") has no reverse edge");
    }
  }
  for (std::int32_t v = 0; v < node_count; ++v) {
    if (!has_loop[static_cast<std::size_t>(v)]) {
      throw InvalidArgument("node " + std::to_string(v) + " has no self-loop");
    }
  }
}

void validate(const MeshGraph& g) {
  const auto n = static_cast<std::size_t>(g.node_count);
  if (g.mesh_positions.size() != n || g.world_positions.size() != n ||
      g.node_types.size() != n) {
    throw InvalidArgument("mesh per-node arrays do not match node_count");
  }
  validate_edges(g.edges, g.node_count);
  for (const auto& t : g.cells) {
    for (int a = 0; a < 3; ++a) {
      const Edge e{t[a], t[(a + 1) % 3]};
      if (!std::binary_search(g.edges.begin(), g.edges.end(), e)) {
        throw InvalidArgument("cell edge missing from edge list");
      }
    }
  }
}

EdgeList k_hop_closure(const EdgeList& edges, int k) {
  if (k < 1) throw InvalidArgument("k_hop_closure: K must be >= 1");
  std::int32_t n = 0;
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0) {
      throw InvalidArgument("k_hop_closure: negative node index");
    }
    n = std::max({n, e.i + 1, e.j + 1});
  }
  if (k == 1) {
    EdgeList out = edges;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // Loop-free CSR adjacency.
  std::vector<std::int32_t> offsets(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& e : edges) {
    if (e.i != e.j) ++offsets[static_cast<std::size_t>(e.i) + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::int32_t> adj(static_cast<std::size_t>(offsets.back()));
  {
    auto fill = offsets;
    for (const auto& e : edges) {
      if (e.i != e.j) adj[static_cast<std::size_t>(fill[e.i]++)] = e.j;
    }
  }

  EdgeList out = edges;
  std::vector<int> depth(static_cast<std::size_t>(n), -1);
  std::vector<std::int32_t> frontier, next, touched;
  for (std::int32_t s = 0; s < n; ++s) {
    frontier.assign(1, s);
    touched.clear();
    for (int d = 1; d <= k && !frontier.empty(); ++d) {
      next.clear();
      for (auto u : frontier) {
        for (auto p = offsets[u]; p < offsets[u + 1]; ++p) {
          const auto v = adj[static_cast<std::size_t>(p)];
          if (depth[static_cast<std::size_t>(v)] >= 0) continue;
          depth[static_cast<std::size_t>(v)] = d;
          touched.push_back(v);
          out.push_back({s, v});
          // The source may be re-reached through a cycle; it never needs to
          // be expanded again.
          if (v != s) next.push_back(v);
        }
      }
      frontier.swap(next);
    }
    for (auto v : touched) depth[static_cast<std::size_t>(v)] = -1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

CoarseGraph restrict_to_selected(const EdgeList& enhanced,
                                 const std::vector<std::uint8_t>& selected) {
  CoarseGraph cg;
  cg.selected = selected;
  cg.coarse_index_of.assign(selected.size(), -1);
  for (std::size_t v = 0; v < selected.size(); ++v) {
    if (selected[v]) {
      cg.coarse_index_of[v] = static_cast<std::int32_t>(cg.fine_index_of.size());
      cg.fine_index_of.push_back(static_cast<std::int32_t>(v));
    }
  }
  if (cg.fine_index_of.empty()) {
    throw InvalidArgument("restrict_to_selected: no node selected");
  }
  const auto n = static_cast<std::int32_t>(selected.size());
  for (const auto& e : enhanced) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) {
      throw InvalidArgument("restrict_to_selected: edge index out of range");
    }
    const auto ci = cg.coarse_index_of[static_cast<std::size_t>(e.i)];
    const auto cj = cg.coarse_index_of[static_cast<std::size_t>(e.j)];
    if (ci >= 0 && cj >= 0) cg.edges.push_back({ci, cj});
  }
  // Monotone re-indexing keeps the lexicographic order.
  return cg;
}

MeshGraph generate_grid_mesh(int nx, int ny, double jitter_scale,
                             std::uint64_t rng_seed) {
  if (nx < 2 || ny < 2) {
    throw InvalidArgument("generate_grid_mesh: nx and ny must be >= 2");
  }
  if (!(jitter_scale >= 0.0 && jitter_scale < 0.5)) {
    throw InvalidArgument("generate_grid_mesh: jitter_scale must be in [0, 0.5)");
  }
  const double hx = 1.0 / (nx - 1);
  const double hy = 1.0 / (ny - 1);
  rng::Stream stream(rng::hash_key({rng_seed, 0x6d657368ULL}));

  std::vector<Vec2> pos;
  std::vector<NodeType> types;
  pos.reserve(static_cast<std::size_t>(nx * ny));
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      const bool boundary = x == 0 || y == 0 || x == nx - 1 || y == ny - 1;
      Vec2 p{x * hx, y * hy};
      if (!boundary && jitter_scale > 0.0) {
        p[0] += stream.uniform(-jitter_scale, jitter_scale) * hx;
        p[1] += stream.uniform(-jitter_scale, jitter_scale) * hy;
      }
      pos.push_back(p);
      types.push_back(boundary ? NodeType::Boundary : NodeType::Interior);
    }
  }
  std::vector<Triangle> cells;
  cells.reserve(static_cast<std::size_t>(2 * (nx - 1) * (ny - 1)));
  for (int y = 0; y + 1 < ny; ++y) {
    for (int x = 0; x + 1 < nx; ++x) {
      const std::int32_t a = y * nx + x;
      const std::int32_t b = a + 1;
      const std::int32_t c = a + nx;
      const std::int32_t d = c + 1;
      cells.push_back({a, b, d});
      cells.push_back({a, d, c});
    }
  }
  return build_bidirected(cells, pos, types);
}

Matrix compute_edge_offsets(const EdgeList& edges,
                            const std::vector<Vec2>& mesh_positions,
                            const std::vector<Vec2>& world_positions,
                            Mode mode) {
  const int width = edge_offset_width(mode);
  if (mode == Mode::Lagrangian && world_positions.size() != mesh_positions.size()) {
    throw InvalidArgument("compute_edge_offsets: world positions missing");
  }
  Matrix out(static_cast<Eigen::Index>(edges.size()), width);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    const auto& xi = mesh_positions[static_cast<std::size_t>(e.i)];
    const auto& xj = mesh_positions[static_cast<std::size_t>(e.j)];
    const double dx = xj[0] - xi[0];
    const double dy = xj[1] - xi[1];
    const auto r = static_cast<Eigen::Index>(k);
    out(r, 0) = dx;
    out(r, 1) = dy;
    out(r, 2) = std::hypot(dx, dy);
    if (mode == Mode::Lagrangian) {
      const auto& wi = world_positions[static_cast<std::size_t>(e.i)];
      const auto& wj = world_positions[static_cast<std::size_t>(e.j)];
      const double wx = wj[0] - wi[0];
      const double wy = wj[1] - wi[1];
      out(r, 3) = wx;
      out(r, 4) = wy;
      out(r, 5) = std::hypot(wx, wy);
    }
  }
  return out;
}

Matrix compute_edge_offsets(const MeshGraph& g, Mode mode) {
  return compute_edge_offsets(g.edges, g.mesh_positions, g.world_positions,
                              mode);
}

int count_components(const EdgeList& edges, std::int32_t node_count) {
  std::vector<std::int32_t> parent(static_cast<std::size_t>(node_count));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::int32_t v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  int components = node_count;
  for (const auto& e : edges) {
    const auto a = find(e.i);
    const auto b = find(e.j);
    if (a != b) {
      parent[std::max(a, b)] = std::min(a, b);
      --components;
    }
  }
  return components;
}

std::vector<int> degrees_without_self_loops(const MeshGraph& g) {
  std::vector<int> deg(static_cast<std::size_t>(g.node_count), 0);
  for (const auto& e : g.edges) {
    if (e.i != e.j) ++deg[static_cast<std::size_t>(e.i)];
  }
  return deg;
}

namespace {

std::vector<double> flatten(const std::vector<Vec2>& v) {
  std::vector<double> out;
  out.reserve(v.size() * 2);
  for (const auto& p : v) {
    out.push_back(p[0]);
    out.push_back(p[1]);
  }
  return out;
}

}  // namespace

void save_mesh(const MeshGraph& g, const std::filesystem::path& stem) {
  auto values = flatten(g.mesh_positions);
  const auto world = flatten(g.world_positions);
  values.insert(values.end(), world.begin(), world.end());
  const auto blob = io::encode_f64_le(values);

  nlohmann::json manifest;
  manifest["format"] = "dhmp-mesh-v1";
  manifest["node_count"] = g.node_count;
  manifest["cells"] = g.cells;
  std::vector<int> types;
  for (auto t : g.node_types) types.push_back(static_cast<int>(t));
  manifest["node_types"] = types;
  manifest["mode"] = to_string(g.mode);
  auto blob_path = stem;
  blob_path += ".bin";
  manifest["blob"] = blob_path.filename().string();
  manifest["blob_sha256"] = io::sha256_hex(blob);

  auto json_path = stem;
  json_path += ".json";
  io::write_file(blob_path, blob);
  io::write_file(json_path, manifest.dump(1) + "\n");
}

MeshGraph load_mesh(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed mesh manifest " + json_path.string() + ": " +
                  e.what());
  }
  const auto blob_path = json_path.parent_path() /
                         manifest.at("blob").get<std::string>();
  const auto blob = io::read_file(blob_path);
  if (io::sha256_hex(blob) != manifest.at("blob_sha256").get<std::string>()) {
    throw IoError("mesh blob " + blob_path.string() +
                  " does not match manifest sha256");
  }
  const auto n = manifest.at("node_count").get<std::int32_t>();
  const auto values = io::decode_f64_le(blob);
  if (values.size() != static_cast<std::size_t>(4 * n)) {
    throw IoError("mesh blob has wrong length");
  }
  std::vector<Vec2> mesh_pos(static_cast<std::size_t>(n)), world(mesh_pos);
  for (std::size_t v = 0; v < static_cast<std::size_t>(n); ++v) {
    mesh_pos[v] = {values[2 * v], values[2 * v + 1]};
    world[v] = {values[2 * n + 2 * v], values[2 * n + 2 * v + 1]};
  }
  std::vector<NodeType> types;
  for (int t : manifest.at("node_types").get<std::vector<int>>()) {
    if (t < 0 || t >= kNumNodeTypes) throw IoError("invalid node type in mesh");
    types.push_back(static_cast<NodeType>(t));
  }
  return build_bidirected(manifest.at("cells").get<std::vector<Triangle>>(),
                          mesh_pos, types, world,
                          mode_from_string(manifest.at("mode").get<std::string>()));
}

}  // namespace dhmp::mesh

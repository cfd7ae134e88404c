#include "dhmp/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dhmp/error.hpp"
#include "dhmp/rng.hpp"

namespace dhmp::model {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::DHMP: return "DHMP";
    case Variant::M1: return "M1";
    case Variant::M2: return "M2";
    case Variant::M3: return "M3";
    case Variant::FLAT: return "FLAT";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (auto v : {Variant::DHMP, Variant::M1, Variant::M2, Variant::M3,
                 Variant::FLAT}) {
    if (s == to_string(v)) return v;
  }
  throw InvalidArgument("unknown variant '" + s +
                        "' (expected DHMP, M1, M2, M3 or FLAT)");
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("model config: " + what);
  };
  require(levels >= 1, "levels must be >= 1");
  require(hops >= 1, "hops must be >= 1");
  require(latent >= 1 && hidden >= 1, "latent and hidden widths must be >= 1");
  require(node_input_width >= 1, "node_input_width must be >= 1");
  require(output_width >= 1, "output_width must be >= 1");
  require(down_layers >= 1 && up_layers >= 1, "layer counts must be >= 1");
  require(flat_passes >= 1, "flat_passes must be >= 1");
  require(tau_min > 0.0 && tau_min < tau0, "need 0 < tau_min < tau0");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"variant", to_string(c.variant)},
                     {"levels", c.levels},
                     {"hops", c.hops},
                     {"latent", c.latent},
                     {"hidden", c.hidden},
                     {"node_input_width", c.node_input_width},
                     {"output_width", c.output_width},
                     {"mode", mesh::to_string(c.mode)},
                     {"down_layers", c.down_layers},
                     {"up_layers", c.up_layers},
                     {"flat_passes", c.flat_passes},
                     {"raw_alpha", c.raw_alpha},
                     {"tau0", c.tau0},
                     {"tau_min", c.tau_min},
                     {"gamma", c.gamma}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::vector<std::string> kKeys = {
      "variant",   "levels",      "hops",        "latent",    "hidden",
      "node_input_width", "output_width", "mode", "down_layers", "up_layers",
      "flat_passes", "raw_alpha", "tau0",        "tau_min",   "gamma"};
  if (!j.is_object()) throw InvalidArgument("model config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw InvalidArgument("model config: unknown key '" + key + "'");
    }
  }
  ModelConfig d;
  c = d;
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"]);
  if (j.contains("mode")) c.mode = mesh::mode_from_string(j["mode"]);
  c.levels = j.value("levels", d.levels);
  c.hops = j.value("hops", d.hops);
  c.latent = j.value("latent", d.latent);
  c.hidden = j.value("hidden", d.hidden);
  c.node_input_width = j.value("node_input_width", d.node_input_width);
  c.output_width = j.value("output_width", d.output_width);
  c.down_layers = j.value("down_layers", d.down_layers);
  c.up_layers = j.value("up_layers", d.up_layers);
  c.flat_passes = j.value("flat_passes", d.flat_passes);
  c.raw_alpha = j.value("raw_alpha", d.raw_alpha);
  c.tau0 = j.value("tau0", d.tau0);
  c.tau_min = j.value("tau_min", d.tau_min);
  c.gamma = j.value("gamma", d.gamma);
}

Matrix EdgeNormalizer::apply(const Matrix& raw) const {
  if (mean.empty()) return raw;
  if (static_cast<Eigen::Index>(mean.size()) != raw.cols() ||
      std.size() != mean.size()) {
    throw InvalidArgument("edge normaliser width " + std::to_string(mean.size()) +
                          " does not match offsets width " +
                          std::to_string(raw.cols()));
  }
  Matrix out = raw;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    out.col(c) = (raw.col(c).array() - mean[static_cast<std::size_t>(c)]) /
                 std[static_cast<std::size_t>(c)];
  }
  return out;
}

LevelGraph LevelGraph::from_edges(mesh::EdgeList edges, std::int32_t node_count,
                                  std::vector<mesh::Vec2> mesh_positions,
                                  std::vector<mesh::Vec2> world_positions,
                                  std::vector<std::int64_t> keys) {
  LevelGraph g;
  g.node_count = node_count;
  g.recv.reserve(edges.size());
  g.send.reserve(edges.size());
  for (const auto& e : edges) {
    g.recv.push_back(e.i);
    g.send.push_back(e.j);
  }
  g.edges = std::move(edges);
  g.mesh_positions = std::move(mesh_positions);
  g.world_positions = std::move(world_positions);
  g.keys = std::move(keys);
  return g;
}

// ---- Model construction ----------------------------------------------------

Parameter* Model::add_param(const std::string& name, Matrix value) {
  params_.push_back(std::make_unique<Parameter>(
      Parameter{name, std::move(value), Matrix()}));
  return params_.back().get();
}

Mlp Model::make_mlp(const std::string& name, int in, int hidden, int out,
                    int ln_width) {
  rng::Stream stream(rng::hash_key({init_state_, params_.size()}));
  auto uniform = [&](int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      m.data()[k] = stream.uniform(-bound, bound);
    }
    return m;
  };
  Mlp mlp;
  mlp.w1 = add_param(name + ".w1", uniform(in, hidden));
  mlp.b1 = add_param(name + ".b1", Matrix::Zero(1, hidden));
  mlp.w2 = add_param(name + ".w2", uniform(hidden, out));
  mlp.b2 = add_param(name + ".b2", Matrix::Zero(1, out));
  mlp.ln_width = ln_width;
  if (ln_width > 0) {
    mlp.ln_gain = add_param(name + ".ln_gain", Matrix::Ones(1, ln_width));
    mlp.ln_bias = add_param(name + ".ln_bias", Matrix::Zero(1, ln_width));
  }
  return mlp;
}

AmpParams Model::make_amp(const std::string& name, bool prob_head) {
  const int f = config_.latent;
  AmpParams p;
  p.prob_head = prob_head;
  p.edge = make_mlp(name + ".edge", 3 * f, config_.hidden, f, f);
  p.weight = make_mlp(name + ".weight", 3 * f, config_.hidden, 1, 0);
  p.node = make_mlp(name + ".node", 2 * f, config_.hidden,
                    f + (prob_head ? 1 : 0), f);
  return p;
}

Model::Model(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config), init_state_(rng::hash_key({init_seed, 0x696e6974ULL})) {
  config_.validate();
  const int f = config_.latent;
  const int levels = config_.effective_levels();
  node_encoder_ = make_mlp("encoder.node", config_.node_input_width,
                           config_.hidden, f, f);
  edge_encoder_ = make_mlp("encoder.edge", config_.edge_input_width(),
                           config_.hidden, f, f);
  if (config_.variant == Variant::FLAT) {
    for (int k = 0; k < config_.flat_passes; ++k) {
      flat_.push_back(make_amp("flat." + std::to_string(k), false));
    }
  } else {
    if (levels > 1) {
      coarse_edge_encoder_ = make_mlp("encoder.coarse_edge",
                                      config_.edge_input_width(),
                                      config_.hidden, f, f);
    }
    const bool dynamic = dynamic_hierarchy(config_.variant);
    for (int l = 0; l + 1 < levels; ++l) {
      const auto prefix = "level" + std::to_string(l);
      std::vector<AmpParams> down, up;
      for (int k = 0; k < config_.down_layers; ++k) {
        const bool head = dynamic && k + 1 == config_.down_layers;
        down.push_back(make_amp(prefix + ".down." + std::to_string(k), head));
      }
      for (int k = 0; k < config_.up_layers; ++k) {
        up.push_back(make_amp(prefix + ".mix." + std::to_string(k), false));
      }
      down_.push_back(std::move(down));
      up_.push_back(std::move(up));
    }
    for (int k = 0; k < config_.down_layers; ++k) {
      bottom_.push_back(make_amp("bottom." + std::to_string(k), false));
    }
  }
  decoder_ = make_mlp("decoder", f, config_.hidden, config_.output_width, 0);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

// ---- building blocks -------------------------------------------------------

namespace {

Tensor mlp_tail(Tape& tape, const Mlp& mlp, const Tensor& pre_activation) {
  Tensor h = ad::relu(ad::add_bias(pre_activation, tape.parameter(*mlp.b1)));
  Tensor y = ad::add_bias(ad::matmul(h, tape.parameter(*mlp.w2)),
                          tape.parameter(*mlp.b2));
  if (mlp.ln_width == 0) return y;
  Tensor gain = tape.parameter(*mlp.ln_gain);
  Tensor bias = tape.parameter(*mlp.ln_bias);
  if (mlp.ln_width == y.cols()) return ad::layer_norm(y, gain, bias);
  Tensor normed = ad::layer_norm(ad::slice_cols(y, 0, mlp.ln_width), gain, bias);
  Tensor rest = ad::slice_cols(y, mlp.ln_width, y.cols() - mlp.ln_width);
  return ad::concat_cols({normed, rest});
}

}  // namespace

Tensor mlp_forward(Tape& tape, const Mlp& mlp, const Tensor& x) {
  if (x.cols() != mlp.in_width()) {
    throw InvalidArgument("mlp input width " + std::to_string(x.cols()) +
                          " != expected " + std::to_string(mlp.in_width()));
  }
  return mlp_tail(tape, mlp, ad::matmul(x, tape.parameter(*mlp.w1)));
}

Tensor edge_mlp_forward(Tape& tape, const Mlp& mlp, const Tensor& edges,
                        const Tensor& nodes, const LevelGraph& g) {
  const auto fe = edges.cols();
  const auto f = nodes.cols();
  if (fe + 2 * f != mlp.in_width()) {
    throw InvalidArgument("edge mlp input width mismatch");
  }
  if (edges.rows() != static_cast<Eigen::Index>(g.edges.size()) ||
      nodes.rows() != g.node_count) {
    throw InvalidArgument("latent graph does not match its level graph");
  }
  // [e, v_i, v_j] W1 = e W_e + (V W_i)[i] + (V W_j)[j]
  Tensor w1 = tape.parameter(*mlp.w1);
  Tensor pre = ad::matmul(edges, ad::slice_rows(w1, 0, fe));
  Tensor vi = ad::matmul(nodes, ad::slice_rows(w1, fe, f));
  Tensor vj = ad::matmul(nodes, ad::slice_rows(w1, fe + f, f));
  pre = ad::add(pre, ad::gather_rows(vi, g.recv));
  pre = ad::add(pre, ad::gather_rows(vj, g.send));
  return mlp_tail(tape, mlp, pre);
}

Tensor encode_nodes(Tape& tape, const Model& model, const Matrix& node_inputs) {
  if (node_inputs.cols() != model.config().node_input_width) {
    throw InvalidArgument("encode: node input width " +
                          std::to_string(node_inputs.cols()) + " != config " +
                          std::to_string(model.config().node_input_width));
  }
  return mlp_forward(tape, model.node_encoder(), tape.constant(node_inputs));
}

Tensor encode_edges(Tape& tape, const Mlp& encoder, const LevelGraph& g,
                    mesh::Mode mode, const EdgeNormalizer& norm) {
  Matrix raw = mesh::compute_edge_offsets(g.edges, g.mesh_positions,
                                          g.world_positions, mode);
  return mlp_forward(tape, encoder, tape.constant(norm.apply(raw)));
}

AmpOutput amp_forward(Tape& tape, const LevelGraph& g, const LatentGraph& in,
                      const AmpParams& params) {
  if (g.edges.empty() || g.recv.size() != g.edges.size()) {
    throw InvalidArgument("amp_forward: level graph has no edges");
  }
  const auto n = static_cast<Eigen::Index>(g.node_count);
  const auto f = in.nodes.cols();
  Tensor e_hat = edge_mlp_forward(tape, params.edge, in.edges, in.nodes, g);
  Tensor w = edge_mlp_forward(tape, params.weight, in.edges, in.nodes, g);
  Tensor alpha = ad::segment_softmax(w, g.recv);
  Tensor messages =
      ad::scatter_add_rows(ad::row_scale(e_hat, alpha), g.recv, n);
  Tensor node_out =
      mlp_forward(tape, params.node, ad::concat_cols({in.nodes, messages}));

  AmpOutput out;
  Tensor update = params.prob_head ? ad::slice_cols(node_out, 0, f) : node_out;
  out.latent.nodes = ad::add(in.nodes, update);
  out.latent.edges = ad::add(in.edges, e_hat);
  out.alpha = alpha;
  if (params.prob_head) out.keep_logit = ad::slice_cols(node_out, f, 1);
  return out;
}

Selection diff_select(Tape& tape, const Tensor& keep_logit, const LevelGraph& g,
                      int level, const SelectionOptions& options) {
  const auto n = keep_logit.rows();
  if (n != g.node_count || keep_logit.cols() != 1) {
    throw InvalidArgument("diff_select: keep logits do not match level graph");
  }
  Matrix noise = Matrix::Zero(n, 2);
  if (options.sample_noise) {
    Matrix u(n, 2);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto key = static_cast<std::uint64_t>(g.keys[static_cast<std::size_t>(r)]);
      for (int c = 0; c < 2; ++c) {
        u(r, c) = rng::keyed_uniform({options.noise_seed, options.step,
                                      static_cast<std::uint64_t>(level), key,
                                      static_cast<std::uint64_t>(c)});
      }
    }
    noise = ad::gumbel_from_uniform(u);
  }
  Tensor drop_logit = tape.constant(Matrix::Zero(n, 1));
  auto sample = ad::gumbel_softmax_st(keep_logit, drop_logit,
                                      options.temperature, noise);

  Selection sel;
  sel.mask.assign(static_cast<std::size_t>(n), 0);
  const auto& hard = sample.hard.value();
  bool any = false;
  for (Eigen::Index r = 0; r < n; ++r) {
    sel.mask[static_cast<std::size_t>(r)] = hard(r, 0) > 0.5 ? 1 : 0;
    any = any || hard(r, 0) > 0.5;
  }
  Tensor gate_source = sample.hard;
  if (!any) {
    // Keep the most probable node; lowest index wins ties.
    Eigen::Index best = 0;
    keep_logit.value().col(0).maxCoeff(&best);
    sel.mask[static_cast<std::size_t>(best)] = 1;
    sel.fallback_used = true;
    Matrix forced = Matrix::Zero(n, 2);
    for (Eigen::Index r = 0; r < n; ++r) {
      forced(r, sel.mask[static_cast<std::size_t>(r)] ? 0 : 1) = 1.0;
    }
    gate_source = ad::straight_through(sample.soft, forced);
  }
  sel.gate = ad::slice_cols(options.soft_forward ? sample.soft : gate_source, 0, 1);
  sel.keep_probs = (1.0 / (1.0 + (-keep_logit.value().array()).exp())).matrix();
  return sel;
}

std::vector<std::uint8_t> static_selection(const LevelGraph& g) {
  const auto n = static_cast<std::size_t>(g.node_count);
  std::vector<std::vector<std::int32_t>> adj(n);
  for (const auto& e : g.edges) {
    if (e.i != e.j) adj[static_cast<std::size_t>(e.i)].push_back(e.j);
  }
  std::vector<std::uint8_t> seen(n, 0), mask(n, 0);
  std::size_t order = 0;
  for (std::size_t root = 0; root < n; ++root) {
    if (seen[root]) continue;
    std::deque<std::int32_t> queue{static_cast<std::int32_t>(root)};
    seen[root] = 1;
    while (!queue.empty()) {
      const auto v = static_cast<std::size_t>(queue.front());
      queue.pop_front();
      if (order++ % 2 == 0) mask[v] = 1;
      for (auto w : adj[v]) {
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          queue.push_back(w);
        }
      }
    }
  }
  return mask;
}

InterLevelWeights inter_level_weights(Tape& tape, const LevelGraph& g,
                                      const Tensor& alpha,
                                      const mesh::CoarseGraph& coarse,
                                      bool renormalise) {
  (void)tape;
  if (alpha.rows() != static_cast<Eigen::Index>(g.edges.size())) {
    throw InvalidArgument("inter_level_weights: alpha does not match edges");
  }
  InterLevelWeights w;
  ad::IndexVec picked;
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const auto& e = g.edges[k];
    const auto cj = coarse.coarse_index_of[static_cast<std::size_t>(e.j)];
    if (cj < 0) continue;
    w.recv.push_back(e.i);
    w.send_fine.push_back(e.j);
    w.send_coarse.push_back(cj);
    picked.push_back(static_cast<std::int32_t>(k));
  }
  Tensor sub = ad::gather_rows(alpha, picked);
  if (!renormalise) {
    w.weights = sub;
    return w;
  }
  Tensor sums = ad::scatter_add_rows(sub, w.recv, g.node_count);
  w.weights = ad::div(sub, ad::gather_rows(sums, w.recv));
  return w;
}

Tensor uniform_alpha(Tape& tape, const LevelGraph& g) {
  std::vector<int> deg(static_cast<std::size_t>(g.node_count), 0);
  for (auto i : g.recv) ++deg[static_cast<std::size_t>(i)];
  Matrix a(static_cast<Eigen::Index>(g.edges.size()), 1);
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    a(static_cast<Eigen::Index>(k), 0) =
        1.0 / deg[static_cast<std::size_t>(g.recv[k])];
  }
  return tape.constant(std::move(a));
}

LevelGraph coarsen(const LevelGraph& g, const mesh::CoarseGraph& coarse) {
  std::vector<mesh::Vec2> mp, wp;
  std::vector<std::int64_t> keys;
  for (auto v : coarse.fine_index_of) {
    mp.push_back(g.mesh_positions[static_cast<std::size_t>(v)]);
    wp.push_back(g.world_positions[static_cast<std::size_t>(v)]);
    keys.push_back(g.keys[static_cast<std::size_t>(v)]);
  }
  return LevelGraph::from_edges(coarse.edges, coarse.node_count(), std::move(mp),
                                std::move(wp), std::move(keys));
}

Tensor reduce(const Tensor& fine_nodes, const HierarchyLevel& level) {
  const auto& w = level.inter;
  Tensor contrib =
      ad::row_scale(ad::gather_rows(fine_nodes, w.send_fine), w.weights);
  Tensor agg = ad::scatter_add_rows(contrib, w.recv, level.fine.node_count);
  Tensor coarse = ad::gather_rows(agg, level.coarse.fine_index_of);
  return ad::row_scale(coarse,
                       ad::gather_rows(level.keep_gate, level.coarse.fine_index_of));
}

Tensor expand(const Tensor& coarse_nodes, const HierarchyLevel& level) {
  if (coarse_nodes.rows() != level.coarse.node_count()) {
    throw InvalidArgument("expand: coarse features do not match the level");
  }
  const auto& w = level.inter;
  Tensor contrib =
      ad::row_scale(ad::gather_rows(coarse_nodes, w.send_coarse), w.weights);
  return ad::scatter_add_rows(contrib, w.recv, level.fine.node_count);
}

Tensor feature_mixing(Tape& tape, const LevelGraph& g, const Tensor& expanded,
                      const Tensor& fine_edges, const Tensor& skip,
                      std::span<const AmpParams> mix_params) {
  if (expanded.rows() != g.node_count || skip.rows() != g.node_count ||
      expanded.cols() != skip.cols()) {
    throw InvalidArgument("feature_mixing: latents are not on the same graph");
  }
  LatentGraph lat{expanded, fine_edges};
  for (const auto& p : mix_params) lat = amp_forward(tape, g, lat, p).latent;
  return ad::add(lat.nodes, skip);
}

// ---- forward ---------------------------------------------------------------

ForwardResult Model::forward(Tape& tape, const mesh::MeshGraph& mesh,
                             const Matrix& node_inputs,
                             const EdgeNormalizer& edge_norm,
                             const SelectionOptions& selection,
                             std::span<const std::int64_t> node_keys) const {
  if (node_inputs.rows() != mesh.node_count) {
    throw InvalidArgument("forward: node inputs have " +
                          std::to_string(node_inputs.rows()) + " rows for " +
                          std::to_string(mesh.node_count) + " nodes");
  }
  std::vector<std::int64_t> keys(static_cast<std::size_t>(mesh.node_count));
  if (node_keys.empty()) {
    std::iota(keys.begin(), keys.end(), 0);
  } else if (node_keys.size() == keys.size()) {
    std::copy(node_keys.begin(), node_keys.end(), keys.begin());
  } else {
    throw InvalidArgument("forward: node_keys size mismatch");
  }

  ForwardResult result;
  LevelGraph g = LevelGraph::from_edges(mesh.edges, mesh.node_count,
                                        mesh.mesh_positions,
                                        mesh.world_positions, std::move(keys));
  LatentGraph lat{encode_nodes(tape, *this, node_inputs),
                  encode_edges(tape, edge_encoder_, g, config_.mode, edge_norm)};
  result.nodes_per_level.push_back(g.node_count);
  result.components_per_level.push_back(
      mesh::count_components(g.edges, g.node_count));

  if (config_.variant == Variant::FLAT) {
    for (const auto& p : flat_) {
      auto out = amp_forward(tape, g, lat, p);
      lat = out.latent;
      result.bottom_alpha = out.alpha.value();
    }
    result.prediction = mlp_forward(tape, decoder_, lat.nodes);
    result.bottom = std::move(g);
    return result;
  }

  const int levels = config_.effective_levels();
  const bool dynamic = dynamic_hierarchy(config_.variant);
  std::vector<Tensor> skips, fine_edges;
  for (int l = 0; l + 1 < levels; ++l) {
    AmpOutput out;
    for (const auto& p : down_[static_cast<std::size_t>(l)]) {
      out = amp_forward(tape, g, lat, p);
      lat = out.latent;
    }
    HierarchyLevel level;
    level.level = l;
    level.alpha = out.alpha.value();
    if (dynamic) {
      auto sel = diff_select(tape, *out.keep_logit, g, l, selection);
      level.keep_mask = std::move(sel.mask);
      level.keep_probs = std::move(sel.keep_probs);
      level.keep_gate = sel.gate;
      level.fallback_used = sel.fallback_used;
    } else {
      level.keep_mask = static_selection(g);
      level.keep_gate = tape.constant(Matrix::Ones(g.node_count, 1));
    }
    level.coarse = mesh::restrict_to_selected(
        mesh::k_hop_closure(g.edges, config_.hops), level.keep_mask);
    Tensor alpha = learnable_inter_level(config_.variant) ? out.alpha
                                                          : uniform_alpha(tape, g);
    level.inter =
        inter_level_weights(tape, g, alpha, level.coarse, !config_.raw_alpha);
    level.fine = g;

    Tensor coarse_nodes = reduce(lat.nodes, level);
    skips.push_back(lat.nodes);
    fine_edges.push_back(lat.edges);
    g = coarsen(g, level.coarse);
    lat = LatentGraph{coarse_nodes, encode_edges(tape, *coarse_edge_encoder_, g,
                                                 config_.mode, edge_norm)};
    result.nodes_per_level.push_back(g.node_count);
    result.components_per_level.push_back(
        mesh::count_components(g.edges, g.node_count));
    result.levels.push_back(std::move(level));
  }

  for (const auto& p : bottom_) {
    auto out = amp_forward(tape, g, lat, p);
    lat = out.latent;
    result.bottom_alpha = out.alpha.value();
  }
  result.bottom = std::move(g);

  Tensor nodes = lat.nodes;
  for (int l = levels - 2; l >= 0; --l) {
    const auto& level = result.levels[static_cast<std::size_t>(l)];
    Tensor expanded = expand(nodes, level);
    nodes = feature_mixing(tape, level.fine, expanded,
                           fine_edges[static_cast<std::size_t>(l)],
                           skips[static_cast<std::size_t>(l)],
                           up_[static_cast<std::size_t>(l)]);
  }
  result.prediction = mlp_forward(tape, decoder_, nodes);
  return result;
}

}  // namespace dhmp::model

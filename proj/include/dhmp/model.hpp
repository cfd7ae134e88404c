#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dhmp/autodiff.hpp"
#include "dhmp/meshgraph.hpp"

namespace dhmp::model {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;

/// DHMP: dynamic hierarchy, learnable inter-level weights.
/// M1: static hierarchy, uniform inter-level weights.
/// M2: static hierarchy, learnable inter-level weights.
/// M3: dynamic hierarchy, uniform inter-level weights.
/// FLAT: single level, `flat_passes` AMP layers.
enum class Variant { DHMP, M1, M2, M3, FLAT };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
inline bool dynamic_hierarchy(Variant v) {
  return v == Variant::DHMP || v == Variant::M3;
}
inline bool learnable_inter_level(Variant v) {
  return v == Variant::DHMP || v == Variant::M2;
}

struct ModelConfig {
  Variant variant = Variant::DHMP;
  int levels = 3;
  int hops = 2;
  int latent = 128;
  int hidden = 128;
  int node_input_width = 1;  // normalised dynamic + static channels + one-hot
  int output_width = 1;
  mesh::Mode mode = mesh::Mode::Eulerian;
  int down_layers = 1;  // AMP layers per level on the down path
  int up_layers = 1;    // FeatureMixing AMP layers per level on the up path
  int flat_passes = 15;
  bool raw_alpha = false;  // skip renormalising alpha over contributors
  double tau0 = 5.0;
  double tau_min = 0.1;
  double gamma = 0.999;

  int edge_input_width() const { return mesh::edge_offset_width(mode); }
  /// Levels actually built (FLAT forces 1).
  int effective_levels() const {
    return variant == Variant::FLAT ? 1 : levels;
  }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Per-channel affine map applied to raw edge offsets before encoding.
struct EdgeNormalizer {
  std::vector<double> mean;
  std::vector<double> std;
  Matrix apply(const Matrix& raw) const;
};

/// Two-layer MLP: Linear -> ReLU -> Linear, optional LayerNorm over the first
/// `ln_width` output columns.
struct Mlp {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;
  Parameter* ln_gain = nullptr;
  Parameter* ln_bias = nullptr;
  int ln_width = 0;

  int in_width() const { return static_cast<int>(w1->value.rows()); }
  int out_width() const { return static_cast<int>(w2->value.cols()); }
};

struct AmpParams {
  Mlp edge;    // [e_ij, v_i, v_j] -> F, LayerNorm
  Mlp node;    // [v_i, m_i] -> F (+1 keep logit), LayerNorm on the F columns
  Mlp weight;  // [e_ij, v_i, v_j] -> 1, no LayerNorm
  bool prob_head = false;
};

/// Topology and geometry of one hierarchy level.
struct LevelGraph {
  std::int32_t node_count = 0;
  mesh::EdgeList edges;
  ad::IndexVec recv;  // edges[k].i
  ad::IndexVec send;  // edges[k].j
  std::vector<mesh::Vec2> mesh_positions;
  std::vector<mesh::Vec2> world_positions;
  /// Stable per-node key (the level-1 node key) addressing selection noise.
  std::vector<std::int64_t> keys;

  static LevelGraph from_edges(mesh::EdgeList edges, std::int32_t node_count,
                               std::vector<mesh::Vec2> mesh_positions,
                               std::vector<mesh::Vec2> world_positions,
                               std::vector<std::int64_t> keys);
};

struct LatentGraph {
  Tensor nodes;  // N x F
  Tensor edges;  // E x F
};

struct AmpOutput {
  LatentGraph latent;
  Tensor alpha;                     // E x 1, softmax over each receiver
  std::optional<Tensor> keep_logit;  // N x 1 when prob_head
};

/// Edges contributing to REDUCE/EXPAND at one level: fine edges (i, j) whose
/// neighbour j is selected, with weights normalised per receiver i.
struct InterLevelWeights {
  ad::IndexVec recv;         // fine receiver i
  ad::IndexVec send_fine;    // fine neighbour j
  ad::IndexVec send_coarse;  // coarse index of j
  Tensor weights;            // C x 1
};

struct HierarchyLevel {
  int level = 0;  // fine level index (0-based)
  LevelGraph fine;
  Matrix keep_probs;  // N x 1 in (0,1); empty for static hierarchies
  std::vector<std::uint8_t> keep_mask;
  Matrix alpha;  // E x 1 as produced by the down-path AMP layer
  mesh::CoarseGraph coarse;
  InterLevelWeights inter;
  Tensor keep_gate;  // N x 1 straight-through keep indicator (or soft)
  bool fallback_used = false;
};

/// Controls Gumbel-Softmax node selection.
struct SelectionOptions {
  double temperature = 5.0;
  /// false: zero Gumbel noise, i.e. deterministic argmax (p >= 0.5 keeps).
  bool sample_noise = true;
  /// true: forward gate uses the soft keep probability instead of the hard
  /// straight-through value (used for finite-difference checks).
  bool soft_forward = false;
  std::uint64_t noise_seed = 0;
  std::uint64_t step = 0;
};

struct ForwardResult {
  Tensor prediction;  // N x output_width (normalised units)
  std::vector<HierarchyLevel> levels;
  LevelGraph bottom;   // coarsest level graph
  Matrix bottom_alpha;  // alpha of the last AMP layer on `bottom`
  std::vector<std::int32_t> nodes_per_level;
  std::vector<int> components_per_level;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;

  const Mlp& node_encoder() const { return node_encoder_; }
  const Mlp& edge_encoder() const { return edge_encoder_; }
  const Mlp& decoder() const { return decoder_; }
  const std::vector<std::vector<AmpParams>>& down() const { return down_; }
  const std::vector<std::vector<AmpParams>>& up() const { return up_; }
  const std::vector<AmpParams>& bottom() const { return bottom_; }
  const std::optional<Mlp>& coarse_edge_encoder() const {
    return coarse_edge_encoder_;
  }

  /// Full encode-process-decode pass. `node_inputs` is N x node_input_width
  /// (already normalised). `node_keys` addresses per-node selection noise and
  /// defaults to the node index.
  ForwardResult forward(Tape& tape, const mesh::MeshGraph& mesh,
                        const Matrix& node_inputs,
                        const EdgeNormalizer& edge_norm,
                        const SelectionOptions& selection,
                        std::span<const std::int64_t> node_keys = {}) const;

 private:
  Mlp make_mlp(const std::string& name, int in, int hidden, int out,
               int ln_width);
  AmpParams make_amp(const std::string& name, bool prob_head);
  Parameter* add_param(const std::string& name, Matrix value);

  ModelConfig config_;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::uint64_t init_state_;
  Mlp node_encoder_;
  Mlp edge_encoder_;
  std::optional<Mlp> coarse_edge_encoder_;
  std::vector<std::vector<AmpParams>> down_;
  std::vector<std::vector<AmpParams>> up_;
  std::vector<AmpParams> bottom_;
  std::vector<AmpParams> flat_;
  Mlp decoder_;
};

// ---- building blocks, exposed for tests ----------------------------------

Tensor mlp_forward(Tape& tape, const Mlp& mlp, const Tensor& x);

/// Applies an MLP whose input is [e_ij, v_i, v_j] without materialising the
/// concatenation: the first layer is split into edge and endpoint blocks.
Tensor edge_mlp_forward(Tape& tape, const Mlp& mlp, const Tensor& edges,
                        const Tensor& nodes, const LevelGraph& g);

Tensor encode_nodes(Tape& tape, const Model& model, const Matrix& node_inputs);
Tensor encode_edges(Tape& tape, const Mlp& encoder, const LevelGraph& g,
                    mesh::Mode mode, const EdgeNormalizer& norm);

AmpOutput amp_forward(Tape& tape, const LevelGraph& g, const LatentGraph& in,
                      const AmpParams& params);

/// Keep gate, mask and probabilities from the down-path AMP keep logits.
struct Selection {
  Tensor gate;  // N x 1
  std::vector<std::uint8_t> mask;
  Matrix keep_probs;
  bool fallback_used = false;
};
Selection diff_select(Tape& tape, const Tensor& keep_logit, const LevelGraph& g,
                      int level, const SelectionOptions& options);

/// Deterministic stride-2 sampling over a BFS ordering from node 0.
std::vector<std::uint8_t> static_selection(const LevelGraph& g);

/// Per-receiver weights over selected neighbours. `alpha` is E x 1 over
/// g.edges; when `renormalise` is false the raw alpha values are used.
InterLevelWeights inter_level_weights(Tape& tape, const LevelGraph& g,
                                      const Tensor& alpha,
                                      const mesh::CoarseGraph& coarse,
                                      bool renormalise);
/// 1/deg weights over each receiver's neighbourhood (self-loop included).
Tensor uniform_alpha(Tape& tape, const LevelGraph& g);

LevelGraph coarsen(const LevelGraph& g, const mesh::CoarseGraph& coarse);

Tensor reduce(const Tensor& fine_nodes, const HierarchyLevel& level);
Tensor expand(const Tensor& coarse_nodes, const HierarchyLevel& level);
/// AMP pass(es) over the expanded features plus the skip connection.
Tensor feature_mixing(Tape& tape, const LevelGraph& g, const Tensor& expanded,
                      const Tensor& fine_edges, const Tensor& skip,
                      std::span<const AmpParams> mix_params);

}  // namespace dhmp::model

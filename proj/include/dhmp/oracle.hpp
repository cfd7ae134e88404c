#pragma once

// Ground-truth physics: explicit advection-diffusion of a scalar field on a
// triangle mesh, plus dataset generation and normalisation statistics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dhmp/meshgraph.hpp"
#include "dhmp/tensor_types.hpp"

namespace dhmp::oracle {

enum class Task { Diffusion, Advection };
std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct Trajectory {
  std::string name;
  Task task = Task::Advection;
  mesh::MeshGraph mesh;
  double kappa = 0.0;
  double dt = 1.0;
  /// (steps + 1) x node_count; row t is the field at step t.
  Matrix u;
  /// node_count x 2 static velocity (all zero for diffusion).
  Matrix velocity;
  std::int32_t source_node = -1;  // -1: no source

  int steps() const { return static_cast<int>(u.rows()) - 1; }
  std::int32_t node_count() const { return mesh.node_count; }
};

/// Largest dt satisfying dt * kappa * max_degree <= 0.5.
double diffusion_dt_limit(const mesh::MeshGraph& mesh, double kappa);
/// Largest dt satisfying dt * |v|_max / min_edge_length <= 0.5.
double advection_dt_limit(const mesh::MeshGraph& mesh, const Matrix& velocity);

/// u_i += dt * kappa * sum_{j != i} (u_j - u_i); pinned nodes keep u0.
/// Returns (steps + 1) x N.
Matrix simulate_diffusion(const mesh::MeshGraph& mesh, const Eigen::VectorXd& u0,
                          double kappa, double dt, int steps);

/// Diffusion plus first-order upwind transport along `velocity` (N x 2):
/// each interior node pulls from its most upwind neighbour.
Matrix simulate_advection(const mesh::MeshGraph& mesh, const Eigen::VectorXd& u0,
                          const Matrix& velocity, double kappa, double dt,
                          int steps);

/// Per-channel mean and standard deviation.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;

  Matrix normalize(const Matrix& x) const;
  Matrix denormalize(const Matrix& x) const;
};
/// Population stats over the rows of `samples`; std below 1e-12 is clamped to 1.
ChannelStats compute_channel_stats(const Matrix& samples);
void to_json(nlohmann::json& j, const ChannelStats& s);
void from_json(const nlohmann::json& j, ChannelStats& s);

struct NormStats {
  ChannelStats inputs;   // [u] or [u, vx, vy]
  ChannelStats targets;  // [du]
  ChannelStats edges;    // raw edge offsets
};
void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

/// Physical input channels per node: [u] for diffusion, [u, vx, vy] for
/// advection. Rows are nodes.
Matrix physical_inputs(const Trajectory& traj, const Eigen::VectorXd& u);
int physical_input_width(Task task);

NormStats compute_norm_stats(const std::vector<Trajectory>& train);

struct DatasetConfig {
  Task task = Task::Advection;
  int train = 64;
  int val = 8;
  int test = 8;
  int ood = 8;
  int mesh_min = 8;
  int mesh_max = 16;
  int ood_size = 24;
  double jitter = 0.2;
  int steps = 50;
  double dt = 1.0;
  double kappa = 0.05;
  double max_speed = 0.01;
  double source_probability = 0.5;
  /// Initial Gaussian blob widths (unit-square lengths).
  double blob_sigma_min = 0.08;
  double blob_sigma_max = 0.15;

  void validate() const;
};
void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names = {"train", "val", "test", "ood"};
  return names;
}

/// Deterministic trajectory `index` of `split`.
Trajectory generate_trajectory(const DatasetConfig& config, std::uint64_t seed,
                               const std::string& split, int index);

struct Dataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<Trajectory>> splits;
  NormStats norm;

  const std::vector<Trajectory>& split(const std::string& name) const;
  /// sha256 of the physics/task settings; checkpoints record it.
  std::string fingerprint() const;
};

/// Generates every split (parallel across trajectories, capped by the
/// DHMP_THREADS environment variable) and the training-split NormStats.
Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed);

/// Writes manifest.json, meshes/ and trajectories/ under `dir`. Returns the
/// manifest's sha256.
std::string write_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Reads and verifies every file hash listed in the manifest.
Dataset load_dataset(const std::filesystem::path& dir);

/// generate_dataset + write_dataset.
std::string make_dataset(const DatasetConfig& config, std::uint64_t seed,
                         const std::filesystem::path& dir);

}  // namespace dhmp::oracle

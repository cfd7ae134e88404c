#pragma once

// One-step supervised training, evaluation (RMSE-1 / RMSE-all), checkpoints
// and the ablation / K-sweep harnesses.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dhmp/autodiff.hpp"
#include "dhmp/model.hpp"
#include "dhmp/oracle.hpp"

namespace dhmp::train {

struct TrainConfig {
  std::int64_t total_steps = 20000;
  int batch_size = 1;  // (mesh, step) samples per optimiser step
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  double noise_scale = 0.02;  // fraction of the per-channel data std
  std::uint64_t seed = 0;
  std::int64_t eval_interval = 2000;  // 0 disables periodic validation
  std::int64_t checkpoint_interval = 5000;  // 0 disables periodic checkpoints
  int eval_horizon = 0;  // 0: full trajectory length

  void validate() const;
};
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// lr_start * (lr_end / lr_start)^(step / total_steps), 0 <= step <= total.
double lr_schedule(std::int64_t step, const TrainConfig& config);
/// max(tau_min, tau0 * gamma^step).
double temperature_schedule(std::int64_t step, double tau0, double tau_min,
                            double gamma);
double temperature_schedule(std::int64_t step, const model::ModelConfig& config);

/// Model node input: normalised physical channels followed by the node-type
/// one-hot.
Matrix node_features(const oracle::Trajectory& traj, const Eigen::VectorXd& u,
                     const oracle::NormStats& norm);
int node_input_width(oracle::Task task);
model::EdgeNormalizer edge_normalizer(const oracle::NormStats& norm);

/// Model config whose input/output widths match the dataset task.
model::ModelConfig config_for_task(model::ModelConfig base, oracle::Task task);

struct Sample {
  const oracle::Trajectory* traj = nullptr;
  int t = 0;  // predicts u[t+1] - u[t]
};

/// Training sample drawn for `step` (counter-based, independent of history).
Sample draw_sample(const std::vector<oracle::Trajectory>& train,
                   const TrainConfig& config, std::int64_t step, int slot = 0);

/// Gaussian noise (std = noise_scale * std of u) added to the u channel.
Eigen::VectorXd input_noise(const Sample& sample, const oracle::NormStats& norm,
                            const TrainConfig& config, std::int64_t step,
                            int slot = 0);

struct LossResult {
  ad::Tensor loss;  // 1 x 1
  model::ForwardResult forward;
};

/// Records the one-step loss for `sample` on `tape`.
LossResult one_step_loss(ad::Tape& tape, const model::Model& model,
                         const Sample& sample, const oracle::NormStats& norm,
                         const Eigen::VectorXd& noise,
                         const model::SelectionOptions& selection);

struct StepStats {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double tau = 0.0;
  std::vector<std::int32_t> nodes_kept;
};

/// Forward, backward and one Adam update at lr(step), tau(step). Throws
/// NumericError with diagnostics when the loss is not finite.
StepStats train_step(model::Model& model, ad::Adam& optimizer,
                     const std::vector<oracle::Trajectory>& train,
                     const oracle::NormStats& norm, const TrainConfig& config,
                     std::int64_t step);

// ---- evaluation ------------------------------------------------------------

struct EvalOptions {
  int horizon = 0;  // 0: full trajectory length
  bool deterministic_select = false;
  std::uint64_t eval_seed = 0;
  bool rollout = true;
};

/// Predicted physical delta u[t+1] - u[t] for one trajectory state.
struct PredictContext {
  const oracle::Trajectory* traj;
  std::size_t traj_index;
  int t;
  bool rollout;
};
struct Prediction {
  Eigen::VectorXd delta;
  std::vector<std::int32_t> nodes_per_level;
  std::vector<int> components_per_level;
  bool fallback_used = false;
};
using Predictor =
    std::function<Prediction(const PredictContext&, const Eigen::VectorXd& u)>;

Predictor model_predictor(const model::Model& model,
                          const oracle::NormStats& norm,
                          const EvalOptions& options);
Predictor zero_delta_predictor();
Predictor ground_truth_predictor();

struct MetricsReport {
  double rmse_1 = 0.0;
  double rmse_all = 0.0;
  std::vector<double> rollout_curve;  // RMSE at rollout steps 1..horizon
  int horizon = 0;
  int trajectories = 0;
  std::vector<double> mean_nodes_per_level;
  std::vector<double> mean_components_per_level;
  int fallback_count = 0;
  int non_decreasing_levels = 0;  // forwards where some level did not shrink
  double wall_seconds = 0.0;
};
void to_json(nlohmann::json& j, const MetricsReport& r);

/// RMSE-1 over t < horizon with the true state as input; RMSE-all over rollout
/// steps 1..horizon fed by the predictor's own output. Pinned nodes keep their
/// prescribed values. Errors are in physical units.
MetricsReport evaluate(const Predictor& predictor,
                       const std::vector<oracle::Trajectory>& split,
                       const EvalOptions& options);
MetricsReport evaluate(const model::Model& model, const oracle::NormStats& norm,
                       const std::vector<oracle::Trajectory>& split,
                       const EvalOptions& options);

struct RepeatSummary {
  std::vector<MetricsReport> runs;
  double rmse_1_mean = 0.0, rmse_1_std = 0.0;
  double rmse_all_mean = 0.0, rmse_all_std = 0.0;
};
void to_json(nlohmann::json& j, const RepeatSummary& r);
/// Evaluates `repeats` times with eval seeds base, base+1, ...
RepeatSummary evaluate_repeats(const model::Model& model,
                               const oracle::NormStats& norm,
                               const std::vector<oracle::Trajectory>& split,
                               EvalOptions options, int repeats);

/// Mean and sample (n - 1) standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
  model::ModelConfig model;
  TrainConfig train;
  std::uint64_t init_seed = 0;
  std::int64_t step = 0;
  oracle::NormStats norm;
  std::string dataset_fingerprint;
  std::vector<std::string> names;
  std::vector<Matrix> params;
  std::int64_t adam_step = 0;
  std::vector<Matrix> adam_m;
  std::vector<Matrix> adam_v;
};

/// Writes <stem>.json (header) and <stem>.bin (parameters, then Adam moments).
void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& stem);
Checkpoint snapshot(const model::Model& model, const ad::Adam* optimizer,
                    const TrainConfig& train, std::uint64_t init_seed,
                    std::int64_t step, const oracle::NormStats& norm,
                    const std::string& fingerprint);
/// Copies parameter values (shapes and names must match).
void restore_parameters(model::Model& model, const Checkpoint& ckpt);

// ---- training loop ---------------------------------------------------------

struct TrainRun {
  std::int64_t final_step = 0;
  std::vector<double> losses;  // one per executed step
  std::optional<MetricsReport> final_val;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // metrics + checkpoints
  std::optional<Checkpoint> resume;
  std::uint64_t init_seed = 0;
  bool final_eval = true;
  std::ostream* log = nullptr;  // progress lines
  std::int64_t log_interval = 1000;
  /// Stop after this step (for interruption tests); -1 runs to total_steps.
  std::int64_t stop_after = -1;
};

/// Trains `model` on the dataset's train split. With out_dir, appends
/// metrics.jsonl lines, writes checkpoints (ckpt_<step>, final) and
/// report.json.
TrainRun train(model::Model& model, const oracle::Dataset& data,
               const TrainConfig& config, const TrainOptions& options);

// ---- harnesses -------------------------------------------------------------

struct AblationRow {
  std::string label;  // variant name or K value
  std::string description;
  std::vector<double> rmse_1;
  std::vector<double> rmse_all;
};

struct AblationSpec {
  model::ModelConfig base;
  TrainConfig train;
  std::vector<std::uint64_t> seeds;
  EvalOptions eval;
  std::string eval_split = "test";
  std::ostream* log = nullptr;
};

std::string variant_description(model::Variant v);

/// Trains and evaluates every variant x seed with identical budgets.
std::vector<AblationRow> run_ablation(const oracle::Dataset& data,
                                      const std::vector<model::Variant>& variants,
                                      const AblationSpec& spec);
/// DHMP over the given K values.
std::vector<AblationRow> run_ksweep(const oracle::Dataset& data,
                                    const std::vector<int>& ks,
                                    const AblationSpec& spec);
/// model,rmse_1_mean,rmse_1_std,rmse_all_mean,rmse_all_std,seeds
std::string ablation_csv(const std::vector<AblationRow>& rows,
                         const std::string& key_column);

}  // namespace dhmp::train

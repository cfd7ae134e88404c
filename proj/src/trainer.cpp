#include "dhmp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dhmp/error.hpp"
#include "dhmp/io.hpp"
#include "dhmp/rng.hpp"

namespace dhmp::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
// Stream tags keep the counter-based draws of different purposes apart.
constexpr std::uint64_t kSampleTag = 0x73616d706c65ULL;
constexpr std::uint64_t kNoiseTag = 0x6e6f697365ULL;
constexpr std::uint64_t kGumbelTag = 0x67756d62656cULL;
constexpr std::uint64_t kEvalTag = 0x6576616cULL;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

// ---- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("train config: " + what);
  };
  require(total_steps >= 1, "total_steps must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(lr_start > 0.0 && lr_end > 0.0 && lr_end < lr_start,
          "need 0 < lr_end < lr_start");
  require(noise_scale >= 0.0 && noise_scale < 1.0, "noise_scale must lie in [0, 1)");
  require(eval_interval >= 0 && checkpoint_interval >= 0,
          "intervals must be >= 0");
  require(eval_horizon >= 0, "eval_horizon must be >= 0");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"total_steps", c.total_steps},
           {"batch_size", c.batch_size},
           {"lr_start", c.lr_start},
           {"lr_end", c.lr_end},
           {"noise_scale", c.noise_scale},
           {"seed", c.seed},
           {"eval_interval", c.eval_interval},
           {"checkpoint_interval", c.checkpoint_interval},
           {"eval_horizon", c.eval_horizon}};
}

void from_json(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw InvalidArgument("train config must be an object");
  json defaults;
  to_json(defaults, TrainConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) {
      throw InvalidArgument("train config: unknown key '" + key + "'");
    }
  }
  TrainConfig d;
  c.total_steps = j.value("total_steps", d.total_steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr_start = j.value("lr_start", d.lr_start);
  c.lr_end = j.value("lr_end", d.lr_end);
  c.noise_scale = j.value("noise_scale", d.noise_scale);
  c.seed = j.value("seed", d.seed);
  c.eval_interval = j.value("eval_interval", d.eval_interval);
  c.checkpoint_interval = j.value("checkpoint_interval", d.checkpoint_interval);
  c.eval_horizon = j.value("eval_horizon", d.eval_horizon);
}

double lr_schedule(std::int64_t step, const TrainConfig& config) {
  if (step < 0 || step > config.total_steps) {
    throw InvalidArgument("lr_schedule: step " + std::to_string(step) +
                          " outside [0, " + std::to_string(config.total_steps) + "]");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(config.total_steps);
  return config.lr_start * std::pow(config.lr_end / config.lr_start, frac);
}

double temperature_schedule(std::int64_t step, double tau0, double tau_min,
                            double gamma) {
  if (step < 0) throw InvalidArgument("temperature_schedule: negative step");
  return std::max(tau_min, tau0 * std::pow(gamma, static_cast<double>(step)));
}

double temperature_schedule(std::int64_t step, const model::ModelConfig& c) {
  return temperature_schedule(step, c.tau0, c.tau_min, c.gamma);
}

// ---- features --------------------------------------------------------------

int node_input_width(oracle::Task task) {
  return oracle::physical_input_width(task) + mesh::kNumNodeTypes;
}

Matrix node_features(const oracle::Trajectory& traj, const Eigen::VectorXd& u,
                     const oracle::NormStats& norm) {
  Matrix phys = norm.inputs.normalize(oracle::physical_inputs(traj, u));
  Matrix x = Matrix::Zero(traj.node_count(), phys.cols() + mesh::kNumNodeTypes);
  x.leftCols(phys.cols()) = phys;
  for (std::int32_t i = 0; i < traj.node_count(); ++i) {
    const auto type = static_cast<int>(traj.mesh.node_types[static_cast<std::size_t>(i)]);
    x(i, phys.cols() + type) = 1.0;
  }
  return x;
}

model::EdgeNormalizer edge_normalizer(const oracle::NormStats& norm) {
  return model::EdgeNormalizer{norm.edges.mean, norm.edges.std};
}

model::ModelConfig config_for_task(model::ModelConfig base, oracle::Task task) {
  base.node_input_width = node_input_width(task);
  base.output_width = 1;
  base.mode = mesh::Mode::Eulerian;
  return base;
}

Sample draw_sample(const std::vector<oracle::Trajectory>& train,
                   const TrainConfig& config, std::int64_t step, int slot) {
  if (train.empty()) throw InvalidArgument("training split is empty");
  rng::Stream stream(rng::hash_key({config.seed, kSampleTag,
                                    static_cast<std::uint64_t>(step),
                                    static_cast<std::uint64_t>(slot)}));
  Sample s;
  s.traj = &train[stream.below(train.size())];
  s.t = static_cast<int>(stream.below(static_cast<std::uint64_t>(s.traj->steps())));
  return s;
}

Eigen::VectorXd input_noise(const Sample& sample, const oracle::NormStats& norm,
                            const TrainConfig& config, std::int64_t step,
                            int slot) {
  const auto n = sample.traj->node_count();
  Eigen::VectorXd noise = Eigen::VectorXd::Zero(n);
  if (config.noise_scale == 0.0) return noise;
  rng::Stream stream(rng::hash_key({config.seed, kNoiseTag,
                                    static_cast<std::uint64_t>(step),
                                    static_cast<std::uint64_t>(slot)}));
  const double sd = config.noise_scale * norm.inputs.std[0];
  for (std::int32_t i = 0; i < n; ++i) noise[i] = sd * stream.normal();
  return noise;
}

LossResult one_step_loss(ad::Tape& tape, const model::Model& model,
                         const Sample& sample, const oracle::NormStats& norm,
                         const Eigen::VectorXd& noise,
                         const model::SelectionOptions& selection) {
  const auto& traj = *sample.traj;
  Eigen::VectorXd u = traj.u.row(sample.t).transpose();
  Matrix x = node_features(traj, u + noise, norm);
  Matrix delta = (traj.u.row(sample.t + 1) - traj.u.row(sample.t)).transpose();
  Matrix target = norm.targets.normalize(delta);
  LossResult r;
  r.forward = model.forward(tape, traj.mesh, x, edge_normalizer(norm), selection);
  r.loss = ad::mse(r.forward.prediction, tape.constant(std::move(target)));
  return r;
}

StepStats train_step(model::Model& model, ad::Adam& optimizer,
                     const std::vector<oracle::Trajectory>& train,
                     const oracle::NormStats& norm, const TrainConfig& config,
                     std::int64_t step) {
  StepStats st;
  st.step = step;
  st.lr = lr_schedule(step, config);
  st.tau = temperature_schedule(step, model.config());
  auto diagnostics = [&] {
    std::ostringstream os;
    os << " (step " << step << ", tau " << st.tau << ", lr " << st.lr
       << ", nodes per level [";
    for (std::size_t k = 0; k < st.nodes_kept.size(); ++k) {
      os << (k ? ", " : "") << st.nodes_kept[k];
    }
    os << "])";
    return os.str();
  };

  ad::Tape tape;
  ad::Tensor total;
  try {
    for (int slot = 0; slot < config.batch_size; ++slot) {
      const Sample sample = draw_sample(train, config, step, slot);
      model::SelectionOptions sel;
      sel.temperature = st.tau;
      sel.noise_seed = rng::hash_key({config.seed, kGumbelTag,
                                      static_cast<std::uint64_t>(slot)});
      sel.step = static_cast<std::uint64_t>(step);
      auto r = one_step_loss(tape, model, sample, norm,
                             input_noise(sample, norm, config, step, slot), sel);
      if (slot == 0) st.nodes_kept = r.forward.nodes_per_level;
      total = slot == 0 ? r.loss : ad::add(total, r.loss);
    }
    if (config.batch_size > 1) total = ad::scale(total, 1.0 / config.batch_size);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + diagnostics());
  }
  st.loss = total.value()(0, 0);
  if (!std::isfinite(st.loss)) throw NumericError("non-finite loss" + diagnostics());
  tape.backward(total);
  optimizer.step(st.lr);
  return st;
}

// ---- evaluation ------------------------------------------------------------

Predictor model_predictor(const model::Model& model, const oracle::NormStats& norm,
                          const EvalOptions& options) {
  auto edge_norm = edge_normalizer(norm);
  return [&model, norm, options, edge_norm](const PredictContext& ctx,
                                            const Eigen::VectorXd& u) {
    ad::Tape tape;
    model::SelectionOptions sel;
    sel.temperature = model.config().tau_min;
    sel.sample_noise = !options.deterministic_select;
    sel.noise_seed = rng::hash_key({options.eval_seed, kEvalTag, ctx.traj_index});
    sel.step = static_cast<std::uint64_t>(ctx.t);
    auto r = model.forward(tape, ctx.traj->mesh, node_features(*ctx.traj, u, norm),
                           edge_norm, sel);
    Prediction p;
    p.delta = norm.targets.denormalize(r.prediction.value()).col(0);
    p.nodes_per_level = r.nodes_per_level;
    p.components_per_level = r.components_per_level;
    for (const auto& l : r.levels) p.fallback_used = p.fallback_used || l.fallback_used;
    return p;
  };
}

Predictor zero_delta_predictor() {
  return [](const PredictContext&, const Eigen::VectorXd& u) {
    Prediction p;
    p.delta = Eigen::VectorXd::Zero(u.size());
    return p;
  };
}

Predictor ground_truth_predictor() {
  return [](const PredictContext& ctx, const Eigen::VectorXd& u) {
    Prediction p;
    p.delta = ctx.traj->u.row(ctx.t + 1).transpose() - u;
    return p;
  };
}

void to_json(json& j, const MetricsReport& r) {
  j = json{{"rmse_1", r.rmse_1},
           {"rmse_all", r.rmse_all},
           {"rollout_curve", r.rollout_curve},
           {"horizon", r.horizon},
           {"trajectories", r.trajectories},
           {"mean_nodes_per_level", r.mean_nodes_per_level},
           {"mean_components_per_level", r.mean_components_per_level},
           {"fallback_count", r.fallback_count},
           {"non_decreasing_levels", r.non_decreasing_levels},
           {"wall_seconds", r.wall_seconds}};
}

namespace {

struct HierarchyTally {
  std::vector<double> nodes, components;
  std::int64_t calls = 0;
  int fallbacks = 0;
  int non_decreasing = 0;

  void add(const Prediction& p) {
    if (p.nodes_per_level.empty()) return;
    if (nodes.size() < p.nodes_per_level.size()) {
      nodes.resize(p.nodes_per_level.size(), 0.0);
      components.resize(p.nodes_per_level.size(), 0.0);
    }
    for (std::size_t l = 0; l < p.nodes_per_level.size(); ++l) {
      nodes[l] += p.nodes_per_level[l];
      components[l] += p.components_per_level[l];
      if (l > 0 && p.nodes_per_level[l] >= p.nodes_per_level[l - 1]) ++non_decreasing;
    }
    fallbacks += p.fallback_used ? 1 : 0;
    ++calls;
  }
};

void apply_prediction(const oracle::Trajectory& traj, int t,
                      const Eigen::VectorXd& delta, Eigen::VectorXd& u) {
  if (delta.size() != u.size()) throw InvalidArgument("predictor returned wrong size");
  u += delta;
  for (std::int32_t i = 0; i < traj.node_count(); ++i) {
    if (mesh::is_pinned(traj.mesh.node_types[static_cast<std::size_t>(i)])) {
      u[i] = traj.u(t + 1, i);
    }
  }
}

}  // namespace

MetricsReport evaluate(const Predictor& predictor,
                       const std::vector<oracle::Trajectory>& split,
                       const EvalOptions& options) {
  if (split.empty()) throw InvalidArgument("evaluate: split is empty");
  const auto t0 = std::chrono::steady_clock::now();
  int min_steps = split.front().steps();
  for (const auto& t : split) min_steps = std::min(min_steps, t.steps());
  const int horizon = options.horizon == 0 ? min_steps : options.horizon;
  if (horizon < 1 || horizon > min_steps) {
    throw InvalidArgument("horizon " + std::to_string(horizon) +
                          " must lie in [1, " + std::to_string(min_steps) + "]");
  }
  MetricsReport rep;
  rep.horizon = horizon;
  rep.trajectories = static_cast<int>(split.size());
  HierarchyTally tally;

  double one_sq = 0.0;
  double count = 0.0;
  std::vector<double> curve_sq(static_cast<std::size_t>(horizon), 0.0);
  for (std::size_t k = 0; k < split.size(); ++k) {
    const auto& traj = split[k];
    for (int t = 0; t < horizon; ++t) {
      Eigen::VectorXd u = traj.u.row(t).transpose();
      auto p = predictor({&traj, k, t, false}, u);
      tally.add(p);
      apply_prediction(traj, t, p.delta, u);
      one_sq += (u - traj.u.row(t + 1).transpose()).squaredNorm();
    }
    count += static_cast<double>(traj.node_count());
    if (!options.rollout) continue;
    Eigen::VectorXd u = traj.u.row(0).transpose();
    for (int t = 0; t < horizon; ++t) {
      auto p = predictor({&traj, k, t, true}, u);
      tally.add(p);
      apply_prediction(traj, t, p.delta, u);
      if (!u.allFinite()) throw NumericError("rollout diverged in " + traj.name);
      curve_sq[static_cast<std::size_t>(t)] +=
          (u - traj.u.row(t + 1).transpose()).squaredNorm();
    }
  }
  rep.rmse_1 = std::sqrt(one_sq / (count * horizon));
  if (options.rollout) {
    double all = 0.0;
    for (double c : curve_sq) {
      rep.rollout_curve.push_back(std::sqrt(c / count));
      all += c;
    }
    rep.rmse_all = std::sqrt(all / (count * horizon));
  }
  for (std::size_t l = 0; l < tally.nodes.size(); ++l) {
    rep.mean_nodes_per_level.push_back(tally.nodes[l] / static_cast<double>(tally.calls));
    rep.mean_components_per_level.push_back(tally.components[l] /
                                            static_cast<double>(tally.calls));
  }
  rep.fallback_count = tally.fallbacks;
  rep.non_decreasing_levels = tally.non_decreasing;
  rep.wall_seconds = seconds_since(t0);
  return rep;
}

MetricsReport evaluate(const model::Model& model, const oracle::NormStats& norm,
                       const std::vector<oracle::Trajectory>& split,
                       const EvalOptions& options) {
  return evaluate(model_predictor(model, norm, options), split, options);
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

void to_json(json& j, const RepeatSummary& r) {
  j = json{{"repeats", r.runs.size()},
           {"rmse_1_mean", r.rmse_1_mean},
           {"rmse_1_std", r.rmse_1_std},
           {"rmse_all_mean", r.rmse_all_mean},
           {"rmse_all_std", r.rmse_all_std},
           {"runs", r.runs}};
}

RepeatSummary evaluate_repeats(const model::Model& model,
                               const oracle::NormStats& norm,
                               const std::vector<oracle::Trajectory>& split,
                               EvalOptions options, int repeats) {
  if (repeats < 1) throw InvalidArgument("repeats must be >= 1");
  RepeatSummary s;
  std::vector<double> r1, ra;
  const auto base = options.eval_seed;
  for (int k = 0; k < repeats; ++k) {
    options.eval_seed = base + static_cast<std::uint64_t>(k);
    s.runs.push_back(evaluate(model, norm, split, options));
    r1.push_back(s.runs.back().rmse_1);
    ra.push_back(s.runs.back().rmse_all);
  }
  std::tie(s.rmse_1_mean, s.rmse_1_std) = mean_std(r1);
  std::tie(s.rmse_all_mean, s.rmse_all_std) = mean_std(ra);
  return s;
}

// ---- checkpoints -----------------------------------------------------------

namespace {
constexpr const char* kCheckpointFormat = "dhmp-checkpoint-v1";

fs::path with_ext(const fs::path& stem, const char* ext) {
  return fs::path(stem.string() + ext);
}
}  // namespace

Checkpoint snapshot(const model::Model& model, const ad::Adam* optimizer,
                    const TrainConfig& train, std::uint64_t init_seed,
                    std::int64_t step, const oracle::NormStats& norm,
                    const std::string& fingerprint) {
  Checkpoint c;
  c.model = model.config();
  c.train = train;
  c.init_seed = init_seed;
  c.step = step;
  c.norm = norm;
  c.dataset_fingerprint = fingerprint;
  for (const auto* p : model.parameters()) {
    c.names.push_back(p->name);
    c.params.push_back(p->value);
  }
  if (optimizer) {
    c.adam_step = optimizer->step_count();
    c.adam_m = optimizer->first_moments();
    c.adam_v = optimizer->second_moments();
  }
  return c;
}

void save_checkpoint(const fs::path& stem, const Checkpoint& ckpt) {
  std::vector<double> blob;
  json shapes = json::array();
  for (std::size_t k = 0; k < ckpt.params.size(); ++k) {
    const auto& m = ckpt.params[k];
    shapes.push_back({{"name", ckpt.names[k]}, {"rows", m.rows()}, {"cols", m.cols()}});
    blob.insert(blob.end(), m.data(), m.data() + m.size());
  }
  const bool moments = !ckpt.adam_m.empty();
  if (moments) {
    for (const auto* set : {&ckpt.adam_m, &ckpt.adam_v}) {
      if (set->size() != ckpt.params.size()) {
        throw InvalidArgument("checkpoint: Adam moments do not match parameters");
      }
      for (const auto& m : *set) blob.insert(blob.end(), m.data(), m.data() + m.size());
    }
  }
  const auto bytes = io::encode_f64_le(blob);
  io::write_file(with_ext(stem, ".bin"), bytes);
  json header{{"format", kCheckpointFormat},
              {"model", ckpt.model},
              {"train", ckpt.train},
              {"init_seed", ckpt.init_seed},
              {"step", ckpt.step},
              {"rng", {{"seed", ckpt.train.seed}, {"step", ckpt.step}}},
              {"norm_stats", ckpt.norm},
              {"dataset_fingerprint", ckpt.dataset_fingerprint},
              {"params", shapes},
              {"adam", {{"step", ckpt.adam_step}, {"moments", moments}}},
              {"blob", with_ext(stem, ".bin").filename().string()},
              {"blob_sha256", io::sha256_hex(bytes)}};
  io::write_file(with_ext(stem, ".json"), header.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& stem) {
  json header;
  try {
    header = json::parse(io::read_file(with_ext(stem, ".json")));
  } catch (const json::exception& e) {
    throw IoError("checkpoint header: " + std::string(e.what()));
  }
  if (header.value("format", "") != kCheckpointFormat) {
    throw IoError("unsupported checkpoint format: " + with_ext(stem, ".json").string());
  }
  const auto bin = stem.parent_path() / header.at("blob").get<std::string>();
  const auto bytes = io::read_file(bin);
  if (io::sha256_hex(bytes) != header.at("blob_sha256").get<std::string>()) {
    throw IoError("checkpoint blob sha256 mismatch: " + bin.string());
  }
  Checkpoint c;
  c.model = header.at("model").get<model::ModelConfig>();
  c.train = header.at("train").get<TrainConfig>();
  c.init_seed = header.at("init_seed");
  c.step = header.at("step");
  c.norm = header.at("norm_stats").get<oracle::NormStats>();
  c.dataset_fingerprint = header.at("dataset_fingerprint");
  c.adam_step = header.at("adam").at("step");
  const bool moments = header.at("adam").at("moments");
  const auto values = io::decode_f64_le(bytes);
  std::size_t offset = 0;
  auto take = [&](Eigen::Index rows, Eigen::Index cols) {
    const auto n = static_cast<std::size_t>(rows * cols);
    if (offset + n > values.size()) throw IoError("checkpoint blob is truncated");
    Matrix m = Eigen::Map<const Matrix>(values.data() + offset, rows, cols);
    offset += n;
    return m;
  };
  std::vector<std::pair<Eigen::Index, Eigen::Index>> dims;
  for (const auto& s : header.at("params")) {
    c.names.push_back(s.at("name"));
    dims.emplace_back(s.at("rows"), s.at("cols"));
    c.params.push_back(take(dims.back().first, dims.back().second));
  }
  if (moments) {
    for (auto* set : {&c.adam_m, &c.adam_v}) {
      for (const auto& [r, k] : dims) set->push_back(take(r, k));
    }
  }
  if (offset != values.size()) throw IoError("checkpoint blob has trailing data");
  return c;
}

void restore_parameters(model::Model& model, const Checkpoint& ckpt) {
  auto params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw InvalidArgument("checkpoint has " + std::to_string(ckpt.params.size()) +
                          " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->name != ckpt.names[k] ||
        params[k]->value.rows() != ckpt.params[k].rows() ||
        params[k]->value.cols() != ckpt.params[k].cols()) {
      throw InvalidArgument("checkpoint parameter '" + ckpt.names[k] +
                            "' does not match the model");
    }
    params[k]->value = ckpt.params[k];
  }
}

// ---- training loop ---------------------------------------------------------

TrainRun train(model::Model& model, const oracle::Dataset& data,
               const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto& train_split = data.split("train");
  ad::Adam optimizer(model.parameters());
  std::int64_t step = 0;
  if (options.resume) {
    restore_parameters(model, *options.resume);
    if (!options.resume->adam_m.empty()) {
      optimizer.restore(options.resume->adam_step, options.resume->adam_m,
                        options.resume->adam_v);
    }
    step = options.resume->step;
  }

  std::ofstream metrics;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    const auto path = *options.out_dir / "metrics.jsonl";
    metrics.open(path, options.resume ? std::ios::app : std::ios::trunc);
    if (!metrics) throw IoError("cannot open " + path.string());
  }
  auto save = [&](const std::string& name, std::int64_t at) {
    if (!options.out_dir) return;
    save_checkpoint(*options.out_dir / name,
                    snapshot(model, &optimizer, config, options.init_seed, at,
                             data.norm, data.fingerprint()));
  };
  EvalOptions quick;
  quick.rollout = false;
  quick.horizon = config.eval_horizon;
  quick.eval_seed = config.seed;

  TrainRun run;
  while (step < config.total_steps) {
    const auto st = train_step(model, optimizer, train_split, data.norm, config, step);
    run.losses.push_back(st.loss);
    ++step;
    if (metrics) {
      metrics << json{{"step", st.step}, {"loss", st.loss}, {"lr", st.lr},
                      {"tau", st.tau}, {"nodes_kept", st.nodes_kept}}
                     .dump()
              << "\n";
    }
    if (config.eval_interval > 0 && step % config.eval_interval == 0 &&
        step < config.total_steps && !data.split("val").empty()) {
      const auto rep = evaluate(model, data.norm, data.split("val"), quick);
      if (metrics) metrics << json{{"step", step}, {"val_rmse_1", rep.rmse_1}}.dump() << "\n";
      if (options.log) *options.log << "step " << step << " val_rmse_1 " << rep.rmse_1 << "\n";
    }
    if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0) {
      save("ckpt_" + std::to_string(step), step);
    }
    if (options.log && options.log_interval > 0 && step % options.log_interval == 0) {
      *options.log << "step " << step << " loss " << st.loss << " lr " << st.lr
                   << " tau " << st.tau << "\n";
    }
    if (options.stop_after >= 0 && step >= options.stop_after) break;
  }
  run.final_step = step;
  if (metrics) metrics.flush();
  save("final", step);

  if (options.final_eval && !data.split("val").empty()) {
    EvalOptions full;
    full.horizon = config.eval_horizon;
    full.eval_seed = config.seed;
    run.final_val = evaluate(model, data.norm, data.split("val"), full);
  }
  run.wall_seconds = seconds_since(t0);
  if (options.out_dir) {
    json report{{"final_step", run.final_step},
                {"model", model.config()},
                {"train", config},
                {"init_seed", options.init_seed},
                {"parameter_count", model.parameter_count()},
                {"final_loss", run.losses.empty() ? 0.0 : run.losses.back()},
                {"wall_seconds", run.wall_seconds}};
    if (run.final_val) report["val"] = *run.final_val;
    io::write_file(*options.out_dir / "report.json", report.dump(2) + "\n");
  }
  return run;
}

// ---- harnesses -------------------------------------------------------------

std::string variant_description(model::Variant v) {
  switch (v) {
    case model::Variant::DHMP: return "Dynamic-Anisotropic-Learnable (DHMP)";
    case model::Variant::M1: return "Static-Anisotropic-Unlearnable (M1)";
    case model::Variant::M2: return "Static-Anisotropic-Learnable (M2)";
    case model::Variant::M3: return "Dynamic-Anisotropic-Unlearnable (M3)";
    case model::Variant::FLAT: return "Flat single-level baseline (FLAT)";
  }
  return "?";
}

namespace {

AblationRow run_row(const oracle::Dataset& data, const model::ModelConfig& cfg,
                    const AblationSpec& spec, std::string label,
                    std::string description) {
  AblationRow row{std::move(label), std::move(description), {}, {}};
  for (auto seed : spec.seeds) {
    model::Model m(config_for_task(cfg, data.config.task), seed);
    TrainConfig tc = spec.train;
    tc.seed = seed;
    tc.eval_interval = 0;
    tc.checkpoint_interval = 0;
    TrainOptions opts;
    opts.init_seed = seed;
    opts.final_eval = false;
    train(m, data, tc, opts);
    EvalOptions eval = spec.eval;
    const auto rep = evaluate(m, data.norm, data.split(spec.eval_split), eval);
    row.rmse_1.push_back(rep.rmse_1);
    row.rmse_all.push_back(rep.rmse_all);
    if (spec.log) {
      *spec.log << row.label << " seed " << seed << " rmse_1 " << rep.rmse_1
                << " rmse_all " << rep.rmse_all << "\n";
    }
  }
  return row;
}

}  // namespace

std::vector<AblationRow> run_ablation(const oracle::Dataset& data,
                                      const std::vector<model::Variant>& variants,
                                      const AblationSpec& spec) {
  if (variants.empty() || spec.seeds.empty()) {
    throw InvalidArgument("ablation needs at least one variant and one seed");
  }
  std::vector<AblationRow> rows;
  for (auto v : variants) {
    model::ModelConfig cfg = spec.base;
    cfg.variant = v;
    rows.push_back(run_row(data, cfg, spec, model::to_string(v), variant_description(v)));
  }
  return rows;
}

std::vector<AblationRow> run_ksweep(const oracle::Dataset& data,
                                    const std::vector<int>& ks,
                                    const AblationSpec& spec) {
  if (ks.empty() || spec.seeds.empty()) {
    throw InvalidArgument("K sweep needs at least one K and one seed");
  }
  std::vector<AblationRow> rows;
  for (int k : ks) {
    model::ModelConfig cfg = spec.base;
    cfg.variant = model::Variant::DHMP;
    cfg.hops = k;
    cfg.validate();
    rows.push_back(run_row(data, cfg, spec, std::to_string(k),
                           "DHMP with K=" + std::to_string(k) + " edge enhancement"));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows,
                         const std::string& key_column) {
  std::ostringstream os;
  os << key_column << ",description,rmse_1_mean,rmse_1_std,rmse_all_mean,rmse_all_std,seeds\n";
  char buf[256];
  for (const auto& r : rows) {
    const auto [m1, s1] = mean_std(r.rmse_1);
    const auto [ma, sa] = mean_std(r.rmse_all);
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g", m1, s1, ma, sa);
    os << r.label << "," << r.description << "," << buf << "," << r.rmse_1.size() << "\n";
  }
  return os.str();
}

}  // namespace dhmp::train

#include "dhmp/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dhmp/error.hpp"
#include "dhmp/io.hpp"
#include "dhmp/rng.hpp"
#include "dhmp/trainer.hpp"

#ifndef DHMP_VERSION
#define DHMP_VERSION "0.0.0"
#endif
#ifndef DHMP_GIT_DESCRIBE
#define DHMP_GIT_DESCRIBE "unknown"
#endif

namespace dhmp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version_string() {
  return std::string("dhmp ") + DHMP_VERSION + " (" + DHMP_GIT_DESCRIBE + ")";
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
  std::string config;
};

/// Parsed --config file: {"dataset": {...}, "model": {...}, "train": {...}}.
json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw InvalidArgument("config file not found: " + path);
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw InvalidArgument("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("config file must hold a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "dataset" && key != "model" && key != "train") {
      throw InvalidArgument("config file: unknown section '" + key +
                            "' (expected dataset, model, train)");
    }
  }
  return j;
}

template <class T>
T section(const json& config, const char* name) {
  if (!config.contains(name)) return T{};
  try {
    return config.at(name).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config section '") + name + "': " + e.what());
  }
}

void prepare_out_dir(const Globals& g) {
  if (g.out.empty()) throw InvalidArgument("--out is required");
  const fs::path dir(g.out);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw InvalidArgument(g.out + " exists and is not a directory");
    if (!fs::is_empty(dir) && !g.force) {
      throw InvalidArgument("output directory " + g.out +
                            " is not empty; pass --force to overwrite");
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + g.out + ": " + ec.message());
}

json artifact_hashes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  json out = json::object();
  for (const auto& f : files) {
    out[fs::relative(f, dir).generic_string()] = io::sha256_file(f);
  }
  return out;
}

struct Manifest {
  json doc;
  fs::path dir;

  void finish(const std::string& status, const std::string& error = {}) {
    if (dir.empty()) return;
    doc["finished_at"] = utc_now();
    doc["status"] = status;
    if (!error.empty()) doc["error"] = error;
    doc["artifacts"] = artifact_hashes(dir);
    io::write_file(dir / "run_manifest.json", doc.dump(2) + "\n");
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(std::string("invalid ") + what + " '" + s + "'");
  }
}

const oracle::Trajectory& find_trajectory(const oracle::Dataset& data,
                                          const std::string& name) {
  for (const auto& [_, trajs] : data.splits) {
    for (const auto& t : trajs) {
      if (t.name == name) return t;
    }
  }
  throw InvalidArgument("trajectory '" + name + "' not found in dataset");
}

void check_compatible(const train::Checkpoint& ckpt, const oracle::Dataset& data) {
  if (ckpt.dataset_fingerprint != data.fingerprint()) {
    throw InvalidArgument("checkpoint was trained on a dataset with different "
                          "physics settings (fingerprint mismatch)");
  }
  if (ckpt.model.node_input_width != train::node_input_width(data.config.task)) {
    throw InvalidArgument("checkpoint input width does not match the dataset task");
  }
}

std::unique_ptr<model::Model> model_from_checkpoint(const train::Checkpoint& ckpt) {
  auto m = std::make_unique<model::Model>(ckpt.model, ckpt.init_seed);
  train::restore_parameters(*m, ckpt);
  return m;
}

std::vector<model::Variant> parse_variants(const std::string& s) {
  std::vector<model::Variant> out;
  for (const auto& name : split_list(s)) out.push_back(model::variant_from_string(name));
  if (out.empty()) throw InvalidArgument("--variants is empty");
  return out;
}

}  // namespace

// ---- export ----------------------------------------------------------------

ExportSummary export_trajectory(const model::Model& model,
                                const oracle::NormStats& norm,
                                const oracle::Trajectory& traj,
                                const std::vector<int>& steps,
                                bool deterministic_select,
                                std::uint64_t eval_seed, const fs::path& out_dir) {
  ExportSummary summary;
  const auto n = traj.node_count();
  for (int t : steps) {
    if (t < 0 || t >= traj.steps()) {
      throw InvalidArgument("export step " + std::to_string(t) + " outside [0, " +
                            std::to_string(traj.steps() - 1) + "]");
    }
  }
  auto write = [&](const std::string& name, const std::string& text) {
    io::write_file(out_dir / name, text);
    summary.files.push_back(name);
  };
  char buf[512];
  for (int t : steps) {
    ad::Tape tape;
    model::SelectionOptions sel;
    sel.temperature = model.config().tau_min;
    sel.sample_noise = !deterministic_select;
    sel.noise_seed = rng::hash_key({eval_seed, 0x6578706fULL});
    sel.step = static_cast<std::uint64_t>(t);
    Eigen::VectorXd u = traj.u.row(t).transpose();
    auto fwd = model.forward(tape, traj.mesh, train::node_features(traj, u, norm),
                             train::edge_normalizer(norm), sel);
    Eigen::VectorXd pred = u + norm.targets.denormalize(fwd.prediction.value()).col(0);
    Eigen::VectorXd truth = traj.u.row(t + 1).transpose();
    for (std::int32_t i = 0; i < n; ++i) {
      if (mesh::is_pinned(traj.mesh.node_types[static_cast<std::size_t>(i)])) {
        pred[i] = truth[i];
      }
    }
    Eigen::VectorXd err = (pred - truth).cwiseAbs();

    // Level membership of every fine node; level 1 holds all of them.
    const std::size_t levels = fwd.levels.size() + 1;
    std::vector<std::vector<std::int32_t>> index_at(levels, std::vector<std::int32_t>(n, -1));
    std::iota(index_at[0].begin(), index_at[0].end(), 0);
    for (std::size_t l = 1; l < levels; ++l) {
      const auto& coarse = fwd.levels[l - 1].coarse;
      for (std::int32_t i = 0; i < n; ++i) {
        const auto prev = index_at[l - 1][static_cast<std::size_t>(i)];
        if (prev >= 0) index_at[l][static_cast<std::size_t>(i)] =
            coarse.coarse_index_of[static_cast<std::size_t>(prev)];
      }
    }
    const std::string suffix = "_t" + std::to_string(t) + ".csv";

    std::ostringstream nodes;
    nodes << "node,x,y,node_type,u,true_next,pred_next,abs_error";
    for (std::size_t l = 2; l <= levels; ++l) nodes << ",in_level" << l;
    nodes << "\n";
    for (std::int32_t i = 0; i < n; ++i) {
      const auto& p = traj.mesh.mesh_positions[static_cast<std::size_t>(i)];
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g", i,
                    p[0], p[1],
                    static_cast<int>(traj.mesh.node_types[static_cast<std::size_t>(i)]),
                    u[i], truth[i], pred[i], err[i]);
      nodes << buf;
      for (std::size_t l = 1; l < levels; ++l) {
        nodes << "," << (index_at[l][static_cast<std::size_t>(i)] >= 0 ? 1 : 0);
      }
      nodes << "\n";
    }
    write("nodes" + suffix, nodes.str());

    std::ostringstream edges;
    edges << "level,receiver,sender,receiver_node,sender_node,alpha,alpha_variance\n";
    std::vector<std::ostringstream> hier(levels);
    for (std::size_t l = 0; l < levels; ++l) {
      const bool bottom = l + 1 == levels;
      const auto& g = bottom ? fwd.bottom : fwd.levels[l].fine;
      const Matrix& alpha = bottom ? fwd.bottom_alpha : fwd.levels[l].alpha;
      std::vector<double> sum(static_cast<std::size_t>(g.node_count), 0.0),
          sum_sq(sum.size(), 0.0), cnt(sum.size(), 0.0);
      for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const auto i = static_cast<std::size_t>(g.recv[k]);
        const double a = alpha(static_cast<Eigen::Index>(k), 0);
        sum[i] += a;
        sum_sq[i] += a * a;
        cnt[i] += 1.0;
      }
      hier[l] << "receiver_node,sender_node,receiver_x,receiver_y,sender_x,sender_y\n";
      for (std::size_t k = 0; k < g.edges.size(); ++k) {
        const auto i = static_cast<std::size_t>(g.recv[k]);
        const auto j = static_cast<std::size_t>(g.send[k]);
        const double mean = sum[i] / cnt[i];
        const double var = std::max(0.0, sum_sq[i] / cnt[i] - mean * mean);
        std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%lld,%lld,%.17g,%.17g", l + 1, i, j,
                      static_cast<long long>(g.keys[i]), static_cast<long long>(g.keys[j]),
                      alpha(static_cast<Eigen::Index>(k), 0), var);
        edges << buf << "\n";
        const auto& pi = g.mesh_positions[i];
        const auto& pj = g.mesh_positions[j];
        std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g,%.17g,%.17g",
                      static_cast<long long>(g.keys[i]), static_cast<long long>(g.keys[j]),
                      pi[0], pi[1], pj[0], pj[1]);
        hier[l] << buf << "\n";
      }
    }
    write("edges" + suffix, edges.str());
    for (std::size_t l = 0; l < levels; ++l) {
      write("hierarchy_level" + std::to_string(l + 1) + suffix, hier[l].str());
    }

    // Challenging nodes: the top 10% by absolute error, lowest index on ties.
    std::vector<std::int32_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::int32_t a, std::int32_t b) { return err[a] > err[b]; });
    const auto top = static_cast<std::size_t>(std::ceil(0.1 * n));
    std::ostringstream hard;
    hard << "rank,node,abs_error";
    for (std::size_t l = 2; l <= levels; ++l) hard << ",in_level" << l;
    hard << "\n";
    std::vector<double> retained(levels, 0.0);
    for (std::size_t r = 0; r < top; ++r) {
      const auto i = static_cast<std::size_t>(order[r]);
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g", r + 1, i, err[order[r]]);
      hard << buf;
      for (std::size_t l = 0; l < levels; ++l) {
        const bool in = index_at[l][i] >= 0;
        retained[l] += in ? 1.0 : 0.0;
        if (l > 0) hard << "," << (in ? 1 : 0);
      }
      hard << "\n";
    }
    for (auto& r : retained) r /= static_cast<double>(top);
    summary.challenging_retention.push_back(retained);
    write("challenging_nodes" + suffix, hard.str());
  }

  json sj{{"trajectory", traj.name},
          {"steps", steps},
          {"variant", model::to_string(model.config().variant)},
          {"deterministic_select", deterministic_select},
          {"challenging_retention", summary.challenging_retention}};
  write("export_summary.json", sj.dump(2) + "\n");

  std::ostringstream readme;
  readme << "# Export of trajectory " << traj.name << "\n\n"
         << "Files per exported step `t` (the model predicts step t+1 from the true "
            "state at t):\n\n"
         << "- `nodes_t<t>.csv`: `node`, mesh position `x`,`y`, `node_type` (0 interior, "
            "1 boundary, 2 source), current field `u`, `true_next`, `pred_next`, "
            "`abs_error` = |pred_next - true_next|, and `in_level<l>` = 1 when the node "
            "survives to hierarchy level l. Pinned nodes take their prescribed value, so "
            "their error is 0.\n"
         << "- `edges_t<t>.csv`: one row per directed edge (receiver i, sender j) and "
            "level. `receiver`/`sender` are level-local indices, `receiver_node`/"
            "`sender_node` the original mesh node ids. `alpha` is the softmax-normalised "
            "importance weight (it sums to 1 over each receiver's rows within a level); "
            "`alpha_variance` is the variance of alpha over that receiver's edges.\n"
         << "- `hierarchy_level<l>_t<t>.csv`: edge list of level l in mesh node ids with "
            "endpoint positions, for drawing the coarse graphs.\n"
         << "- `challenging_nodes_t<t>.csv`: the ceil(10%) nodes with the largest "
            "`abs_error` and their level membership.\n"
         << "- `export_summary.json`: fraction of challenging nodes present at each level "
            "(`challenging_retention[step][level]`).\n";
  write("README.md", readme.str());
  return summary;
}

// ---- commands --------------------------------------------------------------

namespace {

struct Context {
  Globals g;
  std::ostream& out;
  std::ostream& err;
  Manifest manifest;
  std::vector<std::string> argv;
};

void begin(Context& c, const std::string& command, json resolved, json inputs) {
  prepare_out_dir(c.g);
  c.manifest.dir = c.g.out;
  c.manifest.doc = json{{"command", command},
                        {"argv", c.argv},
                        {"config", std::move(resolved)},
                        {"seeds", {{"seed", c.g.seed}}},
                        {"version", version_string()},
                        {"inputs", std::move(inputs)},
                        {"outputs", fs::absolute(c.g.out).string()},
                        {"started_at", utc_now()}};
}

void cmd_gen_data(Context& c) {
  const auto config = load_config(c.g.config);
  const auto ds = section<oracle::DatasetConfig>(config, "dataset");
  ds.validate();
  begin(c, "gen-data", json{{"dataset", ds}}, json{{"config", c.g.config}});
  const auto digest = oracle::make_dataset(ds, c.g.seed, c.g.out);
  c.out << "dataset written to " << c.g.out << " (manifest sha256 " << digest << ")\n";
}

struct TrainArgs {
  std::string data;
  std::string variant;
  std::int64_t steps = -1;
  std::string resume;
};

void cmd_train(Context& c, const TrainArgs& a) {
  const auto config = load_config(c.g.config);
  const auto data = oracle::load_dataset(a.data);
  train::TrainOptions opts;
  model::ModelConfig mc;
  train::TrainConfig tc;
  if (!a.resume.empty()) {
    if (!a.variant.empty() || a.steps >= 0 || !c.g.config.empty()) {
      throw InvalidArgument("--resume takes its configuration from the checkpoint; "
                            "drop --variant/--steps/--config");
    }
    auto ckpt = train::load_checkpoint(a.resume);
    check_compatible(ckpt, data);
    mc = ckpt.model;
    tc = ckpt.train;
    opts.init_seed = ckpt.init_seed;
    opts.resume = std::move(ckpt);
  } else {
    mc = train::config_for_task(section<model::ModelConfig>(config, "model"),
                                data.config.task);
    tc = section<train::TrainConfig>(config, "train");
    if (!a.variant.empty()) mc.variant = model::variant_from_string(a.variant);
    if (a.steps >= 0) tc.total_steps = a.steps;
    tc.seed = c.g.seed;
    opts.init_seed = c.g.seed;
  }
  mc.validate();
  tc.validate();
  begin(c, "train", json{{"model", mc}, {"train", tc}, {"init_seed", opts.init_seed}},
        json{{"data", a.data}, {"resume", a.resume}, {"config", c.g.config}});
  model::Model m(mc, opts.init_seed);
  opts.out_dir = c.g.out;
  opts.log = &c.out;
  const auto run = train::train(m, data, tc, opts);
  c.out << "trained " << model::to_string(mc.variant) << " to step " << run.final_step;
  if (run.final_val) c.out << ", val rmse_1 " << run.final_val->rmse_1;
  c.out << " (" << run.wall_seconds << " s)\n";
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  int horizon = 0;
  int repeats = 1;
  bool deterministic = false;
  bool ood = false;
};

void cmd_eval(Context& c, const EvalArgs& a) {
  const auto data = oracle::load_dataset(a.data);
  const auto ckpt = train::load_checkpoint(a.checkpoint);
  check_compatible(ckpt, data);
  const std::string split = a.ood ? "ood" : a.split;
  train::EvalOptions eo;
  eo.horizon = a.horizon;
  eo.deterministic_select = a.deterministic;
  eo.eval_seed = c.g.seed;
  begin(c, "eval",
        json{{"split", split}, {"horizon", a.horizon}, {"repeats", a.repeats},
             {"deterministic_select", a.deterministic}, {"eval_seed", c.g.seed},
             {"model", ckpt.model}},
        json{{"checkpoint", a.checkpoint}, {"data", a.data}});
  auto m = model_from_checkpoint(ckpt);
  const auto summary =
      train::evaluate_repeats(*m, ckpt.norm, data.split(split), eo, a.repeats);
  json report{{"checkpoint", a.checkpoint},
              {"split", split},
              {"horizon", summary.runs.front().horizon},
              {"deterministic_select", a.deterministic},
              {"summary", summary}};
  io::write_file(fs::path(c.g.out) / "report.json", report.dump(2) + "\n");
  c.out << split << ": rmse_1 " << summary.rmse_1_mean << " +- " << summary.rmse_1_std
        << ", rmse_all " << summary.rmse_all_mean << " +- " << summary.rmse_all_std
        << " over " << a.repeats << " run(s)\n";
}

struct SweepArgs {
  std::string data;
  std::string variants = "DHMP,M1,M2,M3,FLAT";
  std::string ks = "1,2,3,4";
  int seeds = 3;
  std::int64_t steps = -1;
  std::string split = "test";
  int horizon = 0;
  bool deterministic = false;
};

train::AblationSpec sweep_spec(Context& c, const SweepArgs& a,
                               const oracle::Dataset& data, const json& config) {
  train::AblationSpec spec;
  spec.base = train::config_for_task(section<model::ModelConfig>(config, "model"),
                                     data.config.task);
  spec.train = section<train::TrainConfig>(config, "train");
  if (a.steps >= 0) spec.train.total_steps = a.steps;
  spec.train.validate();
  if (a.seeds < 1) throw InvalidArgument("--seeds must be >= 1");
  for (int k = 0; k < a.seeds; ++k) spec.seeds.push_back(c.g.seed + static_cast<std::uint64_t>(k));
  spec.eval.horizon = a.horizon;
  spec.eval.deterministic_select = a.deterministic;
  spec.eval.eval_seed = c.g.seed;
  spec.eval_split = a.split;
  spec.log = &c.out;
  data.split(a.split);
  return spec;
}

json rows_json(const std::vector<train::AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"label", r.label}, {"description", r.description},
                   {"rmse_1", r.rmse_1}, {"rmse_all", r.rmse_all}});
  }
  return out;
}

void cmd_ablate(Context& c, const SweepArgs& a) {
  const auto config = load_config(c.g.config);
  const auto data = oracle::load_dataset(a.data);
  const auto variants = parse_variants(a.variants);
  const auto spec = sweep_spec(c, a, data, config);
  begin(c, "ablate",
        json{{"variants", a.variants}, {"model", spec.base}, {"train", spec.train},
             {"seeds", spec.seeds}, {"split", a.split}, {"horizon", a.horizon}},
        json{{"data", a.data}, {"config", c.g.config}});
  const auto rows = train::run_ablation(data, variants, spec);
  const auto csv = train::ablation_csv(rows, "model");
  io::write_file(fs::path(c.g.out) / "ablation.csv", csv);
  io::write_file(fs::path(c.g.out) / "ablation.json", rows_json(rows).dump(2) + "\n");
  c.out << csv;
}

void cmd_ksweep(Context& c, const SweepArgs& a) {
  const auto config = load_config(c.g.config);
  const auto data = oracle::load_dataset(a.data);
  std::vector<int> ks;
  for (const auto& s : split_list(a.ks)) {
    const int k = parse_int(s, "K");
    if (k < 1 || k > 4) throw InvalidArgument("K values must lie in [1, 4]");
    ks.push_back(k);
  }
  if (ks.empty()) throw InvalidArgument("--ks is empty");
  const auto spec = sweep_spec(c, a, data, config);
  begin(c, "ksweep",
        json{{"ks", ks}, {"model", spec.base}, {"train", spec.train},
             {"seeds", spec.seeds}, {"split", a.split}, {"horizon", a.horizon}},
        json{{"data", a.data}, {"config", c.g.config}});
  const auto rows = train::run_ksweep(data, ks, spec);
  const auto csv = train::ablation_csv(rows, "K");
  io::write_file(fs::path(c.g.out) / "ksweep.csv", csv);
  io::write_file(fs::path(c.g.out) / "ksweep.json", rows_json(rows).dump(2) + "\n");
  c.out << csv;
}

struct ExportArgs {
  std::string checkpoint;
  std::string data;
  std::string trajectory;
  std::string steps = "0";
  bool deterministic = false;
};

void cmd_export(Context& c, const ExportArgs& a) {
  const auto data = oracle::load_dataset(a.data);
  const auto ckpt = train::load_checkpoint(a.checkpoint);
  check_compatible(ckpt, data);
  const auto& traj = find_trajectory(data, a.trajectory);
  std::vector<int> steps;
  for (const auto& s : split_list(a.steps)) steps.push_back(parse_int(s, "step"));
  if (steps.empty()) throw InvalidArgument("--steps is empty");
  begin(c, "export",
        json{{"trajectory", a.trajectory}, {"steps", steps},
             {"deterministic_select", a.deterministic}, {"eval_seed", c.g.seed}},
        json{{"checkpoint", a.checkpoint}, {"data", a.data}});
  auto m = model_from_checkpoint(ckpt);
  const auto summary = export_trajectory(*m, ckpt.norm, traj, steps, a.deterministic,
                                         c.g.seed, c.g.out);
  c.out << "exported " << summary.files.size() << " files to " << c.g.out << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic hierarchical message passing for mesh-based physics", "dhmp"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  app.fallthrough();
  Context ctx{{}, out, err, {}, std::vector<std::string>(argv, argv + argc)};
  auto& g = ctx.g;
  app.add_option("--seed", g.seed, "Seed for data generation, training or evaluation");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--force", g.force, "Allow writing into a non-empty output directory");
  app.add_option("--config", g.config,
                 "JSON config with optional dataset/model/train sections");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic trajectory dataset");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--data", ta.data, "Dataset directory")->required();
  tr->add_option("--variant", ta.variant, "DHMP, M1, M2, M3 or FLAT");
  tr->add_option("--steps", ta.steps, "Total optimiser steps");
  tr->add_option("--resume", ta.resume, "Checkpoint stem to resume from");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint stem")->required();
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--split", ea.split, "Split to evaluate (train, val, test, ood)");
  ev->add_option("--horizon", ea.horizon, "Rollout horizon (0: full trajectory)");
  ev->add_option("--repeats", ea.repeats, "Independent evaluations with eval seeds seed, seed+1, ...");
  ev->add_flag("--deterministic-select", ea.deterministic, "Argmax node selection");
  ev->add_flag("--ood", ea.ood, "Evaluate the held-out high-resolution split");

  SweepArgs aa;
  auto* ab = app.add_subcommand("ablate", "Train and compare model variants");
  SweepArgs ka;
  auto* ks = app.add_subcommand("ksweep", "Train DHMP for several K values");
  for (auto [cmd, args] : {std::pair{ab, &aa}, std::pair{ks, &ka}}) {
    cmd->add_option("--data", args->data, "Dataset directory")->required();
    cmd->add_option("--seeds", args->seeds, "Number of seeds per row");
    cmd->add_option("--steps", args->steps, "Optimiser steps per run");
    cmd->add_option("--split", args->split, "Evaluation split");
    cmd->add_option("--horizon", args->horizon, "Rollout horizon (0: full trajectory)");
    cmd->add_flag("--deterministic-select", args->deterministic, "Argmax node selection");
  }
  ab->add_option("--variants", aa.variants, "Comma-separated variant list");
  ks->add_option("--ks", ka.ks, "Comma-separated K values in [1, 4]");

  ExportArgs xa;
  auto* ex = app.add_subcommand("export", "Write plot-ready CSVs for one trajectory");
  ex->add_option("--checkpoint", xa.checkpoint, "Checkpoint stem")->required();
  ex->add_option("--data", xa.data, "Dataset directory")->required();
  ex->add_option("--trajectory", xa.trajectory, "Trajectory name, e.g. test_0000")->required();
  ex->add_option("--steps", xa.steps, "Comma-separated time steps");
  ex->add_flag("--deterministic-select", xa.deterministic, "Argmax node selection");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUserError;
  }

  int code = kOk;
  std::string message;
  try {
    if (gen->parsed()) cmd_gen_data(ctx);
    else if (tr->parsed()) cmd_train(ctx, ta);
    else if (ev->parsed()) cmd_eval(ctx, ea);
    else if (ab->parsed()) cmd_ablate(ctx, aa);
    else if (ks->parsed()) cmd_ksweep(ctx, ka);
    else if (ex->parsed()) cmd_export(ctx, xa);
  } catch (const InvalidArgument& e) {
    code = kUserError;
    message = e.what();
  } catch (const IoError& e) {
    code = kIoError;
    message = e.what();
  } catch (const NumericError& e) {
    code = kNumericError;
    message = e.what();
  } catch (const fs::filesystem_error& e) {
    code = kIoError;
    message = e.what();
  } catch (const std::exception& e) {
    code = kUnexpected;
    message = e.what();
  }
  if (code != kOk) err << "error: " << message << "\n";
  try {
    ctx.manifest.finish(code == kOk ? "ok" : "failed", message);
  } catch (const std::exception& e) {
    err << "error: cannot write run manifest: " << e.what() << "\n";
    if (code == kOk) code = kIoError;
  }
  return code;
}

}  // namespace dhmp::cli

#include "dhmp/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dhmp/error.hpp"
#include "dhmp/io.hpp"
#include "dhmp/rng.hpp"

namespace dhmp::oracle {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Task t) {
  return t == Task::Diffusion ? "diffusion" : "advection";
}

Task task_from_string(const std::string& s) {
  if (s == "diffusion") return Task::Diffusion;
  if (s == "advection") return Task::Advection;
  throw InvalidArgument("unknown task '" + s + "' (expected diffusion or advection)");
}

// ---- solvers ---------------------------------------------------------------

namespace {

struct Upwind {
  std::vector<std::int32_t> neighbour;  // -1: no upwind neighbour
  std::vector<double> coeff;
};

int max_degree(const mesh::MeshGraph& g) {
  auto deg = mesh::degrees_without_self_loops(g);
  return deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
}

double min_edge_length(const mesh::MeshGraph& g) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& e : g.edges) {
    if (e.i == e.j) continue;
    const auto& a = g.mesh_positions[static_cast<std::size_t>(e.i)];
    const auto& b = g.mesh_positions[static_cast<std::size_t>(e.j)];
    m = std::min(m, std::hypot(b[0] - a[0], b[1] - a[1]));
  }
  return m;
}

Upwind upwind_table(const mesh::MeshGraph& g, const Matrix& velocity) {
  const auto n = static_cast<std::size_t>(g.node_count);
  Upwind up{std::vector<std::int32_t>(n, -1), std::vector<double>(n, 0.0)};
  std::vector<double> best(n, 0.0);
  for (const auto& e : g.edges) {
    const auto i = static_cast<std::size_t>(e.i);
    if (e.i == e.j || mesh::is_pinned(g.node_types[i])) continue;
    const auto& a = g.mesh_positions[i];
    const auto& b = g.mesh_positions[static_cast<std::size_t>(e.j)];
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double len = std::hypot(dx, dy);
    const double along = -(velocity(e.i, 0) * dx + velocity(e.i, 1) * dy);
    if (along / len > best[i]) {
      best[i] = along / len;
      up.neighbour[i] = e.j;
      up.coeff[i] = along / (len * len);
    }
  }
  return up;
}

void check_inputs(const mesh::MeshGraph& g, const Eigen::VectorXd& u0,
                  double kappa, double dt, int steps) {
  if (u0.size() != g.node_count) {
    throw InvalidArgument("initial field has " + std::to_string(u0.size()) +
                          " values for " + std::to_string(g.node_count) + " nodes");
  }
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!(kappa >= 0.0)) throw InvalidArgument("kappa must be non-negative");
  if (!u0.allFinite()) throw InvalidArgument("initial field is not finite");
  const double limit = diffusion_dt_limit(g, kappa);
  if (dt > limit * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "diffusion stability violated: dt=" << dt << " exceeds limit "
        << limit << " (dt * kappa * max_degree <= 0.5)";
    throw InvalidArgument(msg.str());
  }
}

Matrix integrate(const mesh::MeshGraph& g, const Eigen::VectorXd& u0,
                 const Upwind& up, double kappa, double dt, int steps) {
  const auto n = static_cast<Eigen::Index>(g.node_count);
  Matrix u(steps + 1, n);
  u.row(0) = u0.transpose();
  Eigen::VectorXd lap(n);
  for (int t = 0; t < steps; ++t) {
    lap.setZero();
    for (const auto& e : g.edges) {
      if (e.i != e.j) lap[e.i] += u(t, e.j) - u(t, e.i);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      if (mesh::is_pinned(g.node_types[si])) {
        u(t + 1, i) = u0[i];
        continue;
      }
      const auto j = up.neighbour[si];
      const double transport = j < 0 ? 0.0 : up.coeff[si] * (u(t, j) - u(t, i));
      u(t + 1, i) = u(t, i) + dt * kappa * lap[i] + dt * transport;
    }
  }
  return u;
}

}  // namespace

double diffusion_dt_limit(const mesh::MeshGraph& mesh, double kappa) {
  const double rate = kappa * max_degree(mesh);
  return rate > 0.0 ? 0.5 / rate : std::numeric_limits<double>::infinity();
}

double advection_dt_limit(const mesh::MeshGraph& mesh, const Matrix& velocity) {
  const double vmax = velocity.size() ? velocity.rowwise().norm().maxCoeff() : 0.0;
  if (vmax == 0.0) return std::numeric_limits<double>::infinity();
  return 0.5 * min_edge_length(mesh) / vmax;
}

Matrix simulate_diffusion(const mesh::MeshGraph& mesh, const Eigen::VectorXd& u0,
                          double kappa, double dt, int steps) {
  check_inputs(mesh, u0, kappa, dt, steps);
  const auto n = static_cast<std::size_t>(mesh.node_count);
  Upwind none{std::vector<std::int32_t>(n, -1), std::vector<double>(n, 0.0)};
  return integrate(mesh, u0, none, kappa, dt, steps);
}

Matrix simulate_advection(const mesh::MeshGraph& mesh, const Eigen::VectorXd& u0,
                          const Matrix& velocity, double kappa, double dt,
                          int steps) {
  check_inputs(mesh, u0, kappa, dt, steps);
  if (velocity.rows() != mesh.node_count || velocity.cols() != 2 ||
      !velocity.allFinite()) {
    throw InvalidArgument("velocity must be a finite node_count x 2 matrix");
  }
  const double limit = advection_dt_limit(mesh, velocity);
  if (dt > limit * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << "CFL condition violated: dt=" << dt << " exceeds limit " << limit
        << " (dt * |v|_max / min_edge_length <= 0.5)";
    throw InvalidArgument(msg.str());
  }
  return integrate(mesh, u0, upwind_table(mesh, velocity), kappa, dt, steps);
}

// ---- statistics ------------------------------------------------------------

Matrix ChannelStats::normalize(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != mean.size()) {
    throw InvalidArgument("normalize: width " + std::to_string(x.cols()) +
                          " != stats width " + std::to_string(mean.size()));
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const auto k = static_cast<std::size_t>(c);
    out.col(c) = (x.col(c).array() - mean[k]) / std[k];
  }
  return out;
}

Matrix ChannelStats::denormalize(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != mean.size()) {
    throw InvalidArgument("denormalize: width mismatch");
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const auto k = static_cast<std::size_t>(c);
    out.col(c) = x.col(c).array() * std[k] + mean[k];
  }
  return out;
}

ChannelStats compute_channel_stats(const Matrix& samples) {
  if (samples.rows() == 0) throw InvalidArgument("no samples for statistics");
  ChannelStats s;
  const double n = static_cast<double>(samples.rows());
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    const double mean = samples.col(c).sum() / n;
    const double var = (samples.col(c).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    s.mean.push_back(mean);
    s.std.push_back(sd < 1e-12 ? 1.0 : sd);
  }
  return s;
}

void to_json(json& j, const ChannelStats& s) {
  j = json{{"mean", s.mean}, {"std", s.std}};
}
void from_json(const json& j, ChannelStats& s) {
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.std.size()) {
    throw InvalidArgument("channel stats: mean/std length mismatch");
  }
}

void to_json(json& j, const NormStats& s) {
  j = json{{"inputs", s.inputs}, {"targets", s.targets}, {"edges", s.edges}};
}

void from_json(const json& j, NormStats& s) {
  s.inputs = j.at("inputs").get<ChannelStats>();
  s.targets = j.at("targets").get<ChannelStats>();
  s.edges = j.at("edges").get<ChannelStats>();
}

int physical_input_width(Task task) { return task == Task::Diffusion ? 1 : 3; }

Matrix physical_inputs(const Trajectory& traj, const Eigen::VectorXd& u) {
  Matrix x(traj.node_count(), physical_input_width(traj.task));
  x.col(0) = u;
  if (traj.task == Task::Advection) x.rightCols(2) = traj.velocity;
  return x;
}

NormStats compute_norm_stats(const std::vector<Trajectory>& train) {
  if (train.empty()) throw InvalidArgument("norm stats need >= 1 trajectory");
  Eigen::Index in_rows = 0, edge_rows = 0;
  for (const auto& t : train) {
    in_rows += static_cast<Eigen::Index>(t.steps()) * t.node_count();
    edge_rows += static_cast<Eigen::Index>(t.mesh.edges.size());
  }
  const int width = physical_input_width(train.front().task);
  const auto mode = train.front().mesh.mode;
  Matrix inputs(in_rows, width), targets(in_rows, 1),
      edges(edge_rows, mesh::edge_offset_width(mode));
  Eigen::Index r = 0, er = 0;
  for (const auto& t : train) {
    if (t.task != train.front().task || t.mesh.mode != mode) {
      throw InvalidArgument("norm stats: mixed tasks or mesh modes");
    }
    const auto n = t.node_count();
    for (int s = 0; s < t.steps(); ++s) {
      inputs.middleRows(r, n) = physical_inputs(t, t.u.row(s).transpose());
      targets.middleRows(r, n) = (t.u.row(s + 1) - t.u.row(s)).transpose();
      r += n;
    }
    Matrix off = mesh::compute_edge_offsets(t.mesh, mode);
    edges.middleRows(er, off.rows()) = off;
    er += off.rows();
  }
  return NormStats{compute_channel_stats(inputs), compute_channel_stats(targets),
                   compute_channel_stats(edges)};
}

// ---- dataset config --------------------------------------------------------

void DatasetConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("dataset config: " + what);
  };
  require(train >= 1, "train must be >= 1");
  require(val >= 0 && test >= 0 && ood >= 0, "split counts must be >= 0");
  require(mesh_min >= 2 && mesh_max >= mesh_min, "need 2 <= mesh_min <= mesh_max");
  require(ood_size >= 2, "ood_size must be >= 2");
  require(jitter >= 0.0 && jitter < 0.5, "jitter must lie in [0, 0.5)");
  require(steps >= 1, "steps must be >= 1");
  require(dt > 0.0, "dt must be positive");
  require(kappa >= 0.0, "kappa must be non-negative");
  require(max_speed >= 0.0, "max_speed must be non-negative");
  require(source_probability >= 0.0 && source_probability <= 1.0,
          "source_probability must lie in [0, 1]");
  require(blob_sigma_min > 0.0 && blob_sigma_max >= blob_sigma_min,
          "need 0 < blob_sigma_min <= blob_sigma_max");
}

void to_json(json& j, const DatasetConfig& c) {
  j = json{{"task", to_string(c.task)},
           {"train", c.train},
           {"val", c.val},
           {"test", c.test},
           {"ood", c.ood},
           {"mesh_min", c.mesh_min},
           {"mesh_max", c.mesh_max},
           {"ood_size", c.ood_size},
           {"jitter", c.jitter},
           {"steps", c.steps},
           {"dt", c.dt},
           {"kappa", c.kappa},
           {"max_speed", c.max_speed},
           {"source_probability", c.source_probability},
           {"blob_sigma_min", c.blob_sigma_min},
           {"blob_sigma_max", c.blob_sigma_max}};
}

void from_json(const json& j, DatasetConfig& c) {
  if (!j.is_object()) throw InvalidArgument("dataset config must be an object");
  json defaults;
  to_json(defaults, DatasetConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) {
      throw InvalidArgument("dataset config: unknown key '" + key + "'");
    }
  }
  DatasetConfig d;
  c = d;
  if (j.contains("task")) c.task = task_from_string(j["task"]);
  c.train = j.value("train", d.train);
  c.val = j.value("val", d.val);
  c.test = j.value("test", d.test);
  c.ood = j.value("ood", d.ood);
  c.mesh_min = j.value("mesh_min", d.mesh_min);
  c.mesh_max = j.value("mesh_max", d.mesh_max);
  c.ood_size = j.value("ood_size", d.ood_size);
  c.jitter = j.value("jitter", d.jitter);
  c.steps = j.value("steps", d.steps);
  c.dt = j.value("dt", d.dt);
  c.kappa = j.value("kappa", d.kappa);
  c.max_speed = j.value("max_speed", d.max_speed);
  c.source_probability = j.value("source_probability", d.source_probability);
  c.blob_sigma_min = j.value("blob_sigma_min", d.blob_sigma_min);
  c.blob_sigma_max = j.value("blob_sigma_max", d.blob_sigma_max);
}

// ---- generation ------------------------------------------------------------

namespace {

std::uint64_t split_id(const std::string& split) {
  const auto& names = split_names();
  auto it = std::find(names.begin(), names.end(), split);
  if (it == names.end()) throw InvalidArgument("unknown split '" + split + "'");
  return static_cast<std::uint64_t>(it - names.begin()) + 1;
}

int split_count(const DatasetConfig& c, const std::string& split) {
  if (split == "train") return c.train;
  if (split == "val") return c.val;
  if (split == "test") return c.test;
  return c.ood;
}

Matrix velocity_field(const mesh::MeshGraph& g, rng::Stream& stream,
                      double max_speed) {
  const double swirl = stream.uniform(-1.0, 1.0);
  const double drift = stream.uniform(-1.0, 1.0);
  const double angle = stream.uniform(0.0, 2.0 * std::numbers::pi);
  const double cx = stream.uniform(0.3, 0.7), cy = stream.uniform(0.3, 0.7);
  Matrix v(g.node_count, 2);
  for (std::int32_t i = 0; i < g.node_count; ++i) {
    const auto& p = g.mesh_positions[static_cast<std::size_t>(i)];
    v(i, 0) = swirl * -(p[1] - cy) + drift * std::cos(angle);
    v(i, 1) = swirl * (p[0] - cx) + drift * std::sin(angle);
  }
  const double peak = v.rowwise().norm().maxCoeff();
  if (peak > 0.0) v *= max_speed * stream.uniform(0.5, 1.0) / peak;
  return v;
}

}  // namespace

Trajectory generate_trajectory(const DatasetConfig& config, std::uint64_t seed,
                               const std::string& split, int index) {
  rng::Stream stream(rng::hash_key(
      {seed, split_id(split), static_cast<std::uint64_t>(index)}));
  int nx = config.ood_size, ny = config.ood_size;
  if (split != "ood") {
    const auto span = static_cast<std::uint64_t>(config.mesh_max - config.mesh_min + 1);
    nx = config.mesh_min + static_cast<int>(stream.below(span));
    ny = config.mesh_min + static_cast<int>(stream.below(span));
  }
  Trajectory t;
  char name[64];
  std::snprintf(name, sizeof name, "%s_%04d", split.c_str(), index);
  t.name = name;
  t.task = config.task;
  t.kappa = config.kappa;
  t.dt = config.dt;
  t.mesh = mesh::generate_grid_mesh(nx, ny, config.jitter, stream.engine()());

  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(t.mesh.node_count);
  const int blobs = 1 + static_cast<int>(stream.below(2));
  for (int b = 0; b < blobs; ++b) {
    const double amp = stream.uniform(0.5, 1.5);
    const double sigma = stream.uniform(config.blob_sigma_min, config.blob_sigma_max);
    const double cx = stream.uniform(0.2, 0.8), cy = stream.uniform(0.2, 0.8);
    for (std::int32_t i = 0; i < t.mesh.node_count; ++i) {
      const auto& p = t.mesh.mesh_positions[static_cast<std::size_t>(i)];
      const double r2 = (p[0] - cx) * (p[0] - cx) + (p[1] - cy) * (p[1] - cy);
      u0[i] += amp * std::exp(-r2 / (2.0 * sigma * sigma));
    }
  }
  if (stream.uniform() < config.source_probability) {
    std::vector<std::int32_t> interior;
    for (std::int32_t i = 0; i < t.mesh.node_count; ++i) {
      if (!mesh::is_pinned(t.mesh.node_types[static_cast<std::size_t>(i)])) {
        interior.push_back(i);
      }
    }
    if (!interior.empty()) {
      t.source_node = interior[stream.below(interior.size())];
      t.mesh.node_types[static_cast<std::size_t>(t.source_node)] =
          mesh::NodeType::Source;
      u0[t.source_node] = 1.0;
    }
  }

  if (config.task == Task::Advection) {
    t.velocity = velocity_field(t.mesh, stream, config.max_speed);
    t.u = simulate_advection(t.mesh, u0, t.velocity, config.kappa, config.dt,
                             config.steps);
  } else {
    t.velocity = Matrix::Zero(t.mesh.node_count, 2);
    t.u = simulate_diffusion(t.mesh, u0, config.kappa, config.dt, config.steps);
  }
  return t;
}

const std::vector<Trajectory>& Dataset::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw InvalidArgument("dataset has no split '" + name + "'");
  return it->second;
}

std::string Dataset::fingerprint() const {
  json j{{"task", to_string(config.task)}, {"dt", config.dt},
         {"kappa", config.kappa}, {"max_speed", config.max_speed},
         {"mode", "eulerian"}};
  return io::sha256_hex(j.dump());
}

namespace {

int worker_count() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("DHMP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed) {
  config.validate();
  struct Job {
    std::string split;
    int index;
  };
  std::vector<Job> jobs;
  for (const auto& s : split_names()) {
    for (int i = 0; i < split_count(config, s); ++i) jobs.push_back({s, i});
  }
  std::vector<Trajectory> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        out[k] = generate_trajectory(config, seed, jobs[k].split, jobs[k].index);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(worker_count(), static_cast<int>(jobs.size()));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Dataset data;
  data.config = config;
  data.seed = seed;
  for (const auto& s : split_names()) data.splits[s];
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    data.splits[jobs[k].split].push_back(std::move(out[k]));
  }
  data.norm = compute_norm_stats(data.splits["train"]);
  return data;
}

// ---- dataset IO ------------------------------------------------------------

namespace {

constexpr const char* kDatasetFormat = "dhmp-dataset-v1";
constexpr const char* kTrajectoryFormat = "dhmp-trajectory-v1";

std::string trajectory_bytes(const Trajectory& t, const std::string& mesh_stem) {
  std::vector<double> blob(t.u.data(), t.u.data() + t.u.size());
  blob.insert(blob.end(), t.velocity.data(), t.velocity.data() + t.velocity.size());
  json header{{"format", kTrajectoryFormat},
              {"name", t.name},
              {"task", to_string(t.task)},
              {"mesh", mesh_stem},
              {"steps", t.steps()},
              {"node_count", t.node_count()},
              {"channels", 1},
              {"kappa", t.kappa},
              {"dt", t.dt},
              {"source_node", t.source_node},
              {"layout", "f64le [(steps+1) x nodes x channels field | nodes x 2 velocity]"},
              {"blob_bytes", blob.size() * sizeof(double)}};
  return header.dump() + "\n" + io::encode_f64_le(blob);
}

Trajectory parse_trajectory(const std::string& bytes, const fs::path& root) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw IoError("trajectory file has no header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw IoError(std::string("trajectory header: ") + e.what());
  }
  if (header.value("format", "") != kTrajectoryFormat) {
    throw IoError("unsupported trajectory format");
  }
  Trajectory t;
  t.name = header.at("name");
  t.task = task_from_string(header.at("task"));
  t.kappa = header.at("kappa");
  t.dt = header.at("dt");
  t.source_node = header.at("source_node");
  t.mesh = mesh::load_mesh(root / header.at("mesh").get<std::string>());
  const int steps = header.at("steps");
  const std::int32_t n = header.at("node_count");
  if (n != t.mesh.node_count) throw IoError(t.name + ": node count disagrees with mesh");
  auto values = io::decode_f64_le(std::string_view(bytes).substr(newline + 1));
  const auto field = static_cast<std::size_t>(steps + 1) * static_cast<std::size_t>(n);
  if (values.size() != field + 2 * static_cast<std::size_t>(n)) {
    throw IoError(t.name + ": blob size does not match header");
  }
  t.u = Eigen::Map<const Matrix>(values.data(), steps + 1, n);
  t.velocity = Eigen::Map<const Matrix>(values.data() + field, n, 2);
  return t;
}

}  // namespace

std::string write_dataset(const Dataset& data, const fs::path& dir) {
  json files = json::object();
  json splits = json::object();
  for (const auto& s : split_names()) {
    json names = json::array();
    auto it = data.splits.find(s);
    if (it != data.splits.end()) {
      for (const auto& t : it->second) {
        const std::string mesh_stem = "meshes/" + t.name;
        mesh::save_mesh(t.mesh, dir / mesh_stem);
        const std::string traj_rel = "trajectories/" + t.name + ".traj";
        const auto bytes = trajectory_bytes(t, mesh_stem);
        io::write_file(dir / traj_rel, bytes);
        files[traj_rel] = io::sha256_hex(bytes);
        for (const char* ext : {".json", ".bin"}) {
          const auto rel = mesh_stem + ext;
          files[rel] = io::sha256_file(dir / rel);
        }
        names.push_back(t.name);
      }
    }
    splits[s] = names;
  }
  json manifest{{"format", kDatasetFormat},
                {"seed", data.seed},
                {"config", data.config},
                {"fingerprint", data.fingerprint()},
                {"splits", splits},
                {"norm_stats", data.norm},
                {"files", files}};
  const auto text = manifest.dump(2) + "\n";
  io::write_file(dir / "manifest.json", text);
  return io::sha256_hex(text);
}

Dataset load_dataset(const fs::path& dir) {
  const auto text = io::read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("dataset manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kDatasetFormat) {
    throw IoError("unsupported dataset format in " + (dir / "manifest.json").string());
  }
  for (const auto& [rel, digest] : manifest.at("files").items()) {
    if (io::sha256_file(dir / rel) != digest.get<std::string>()) {
      throw IoError("sha256 mismatch for " + (dir / rel).string());
    }
  }
  Dataset data;
  data.seed = manifest.at("seed");
  data.config = manifest.at("config").get<DatasetConfig>();
  data.norm = manifest.at("norm_stats").get<NormStats>();
  for (const auto& s : split_names()) {
    auto& out = data.splits[s];
    if (!manifest.at("splits").contains(s)) continue;
    for (const auto& name : manifest["splits"][s]) {
      const auto rel = "trajectories/" + name.get<std::string>() + ".traj";
      out.push_back(parse_trajectory(io::read_file(dir / rel), dir));
    }
  }
  return data;
}

std::string make_dataset(const DatasetConfig& config, std::uint64_t seed,
                         const fs::path& dir) {
  return write_dataset(generate_dataset(config, seed), dir);
}

}  // namespace dhmp::oracle

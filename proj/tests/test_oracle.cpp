#include <gtest/gtest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "dhmp/error.hpp"
#include "dhmp/io.hpp"
#include "dhmp/oracle.hpp"
#include "test_util.hpp"

using namespace dhmp;
using namespace dhmp::oracle;

namespace {

mesh::MeshGraph all_interior(mesh::MeshGraph g) {
  std::fill(g.node_types.begin(), g.node_types.end(), mesh::NodeType::Interior);
  return g;
}

Eigen::VectorXd random_field(int n, std::uint64_t seed) {
  rng::Stream s(seed);
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = s.uniform(-1.0, 2.0);
  return u;
}

Matrix uniform_velocity(int n, double vx, double vy) {
  Matrix v(n, 2);
  v.col(0).setConstant(vx);
  v.col(1).setConstant(vy);
  return v;
}

DatasetConfig tiny_config() {
  DatasetConfig c;
  c.train = 3;
  c.val = 1;
  c.test = 1;
  c.ood = 1;
  c.mesh_min = 4;
  c.mesh_max = 6;
  c.ood_size = 7;
  c.steps = 5;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dhmp_oracle_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Diffusion, ConstantFieldIsStationary) {
  auto g = mesh::generate_grid_mesh(7, 6, 0.2, 1);
  auto u = simulate_diffusion(g, Eigen::VectorXd::Constant(g.node_count, 0.7), 0.05, 1.0, 20);
  EXPECT_LT((u.array() - 0.7).abs().maxCoeff(), 1e-15);
}

TEST(Diffusion, ConservesMassWithoutPinnedNodes) {
  auto g = all_interior(mesh::generate_grid_mesh(9, 8, 0.2, 4));
  auto u = simulate_diffusion(g, random_field(g.node_count, 2), 0.05, 1.0, 40);
  const double total = u.row(0).sum();
  for (int t = 1; t <= 40; ++t) EXPECT_NEAR(u.row(t).sum(), total, 1e-10);
}

TEST(Diffusion, MaximumPrinciple) {
  auto g = mesh::generate_grid_mesh(10, 9, 0.25, 5);
  auto u0 = random_field(g.node_count, 3);
  auto u = simulate_diffusion(g, u0, 0.05, diffusion_dt_limit(g, 0.05), 60);
  EXPECT_GE(u.minCoeff(), u0.minCoeff() - 1e-12);
  EXPECT_LE(u.maxCoeff(), u0.maxCoeff() + 1e-12);
}

TEST(Diffusion, PinnedNodesHoldInitialValues) {
  auto g = mesh::generate_grid_mesh(6, 6, 0.1, 8);
  auto u0 = random_field(g.node_count, 9);
  auto u = simulate_diffusion(g, u0, 0.05, 1.0, 10);
  for (int i = 0; i < g.node_count; ++i) {
    if (mesh::is_pinned(g.node_types[i])) {
      for (int t = 0; t <= 10; ++t) EXPECT_EQ(u(t, i), u0[i]);
    }
  }
}

TEST(Advection, SuperpositionIsLinear) {
  auto g = mesh::generate_grid_mesh(8, 7, 0.2, 6);
  rng::Stream s(1);
  Matrix v = dhmp::testutil::random_matrix(g.node_count, 2, s, 0.01);
  auto a = random_field(g.node_count, 4), b = random_field(g.node_count, 5);
  auto ua = simulate_advection(g, a, v, 0.05, 1.0, 25);
  auto ub = simulate_advection(g, b, v, 0.05, 1.0, 25);
  auto uab = simulate_advection(g, 2.0 * a - 0.5 * b, v, 0.05, 1.0, 25);
  EXPECT_LT((uab - (2.0 * ua - 0.5 * ub)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Advection, ZeroVelocityMatchesDiffusionExactly) {
  auto g = mesh::generate_grid_mesh(7, 7, 0.2, 2);
  auto u0 = random_field(g.node_count, 1);
  EXPECT_EQ(simulate_advection(g, u0, Matrix::Zero(g.node_count, 2), 0.05, 1.0, 15),
            simulate_diffusion(g, u0, 0.05, 1.0, 15));
}

TEST(Advection, CentroidMovesDownstream) {
  auto g = all_interior(mesh::generate_grid_mesh(21, 21, 0.0, 1));
  Eigen::VectorXd u0(g.node_count);
  for (int i = 0; i < g.node_count; ++i) {
    const auto& p = g.mesh_positions[i];
    u0[i] = std::exp(-((p[0] - 0.3) * (p[0] - 0.3) + (p[1] - 0.5) * (p[1] - 0.5)) / 0.01);
  }
  auto u = simulate_advection(g, u0, uniform_velocity(g.node_count, 0.02, 0.0), 0.0, 1.0, 20);
  auto centroid_x = [&](int t) {
    double m = 0.0, mx = 0.0;
    for (int i = 0; i < g.node_count; ++i) {
      m += u(t, i);
      mx += u(t, i) * g.mesh_positions[i][0];
    }
    return mx / m;
  };
  // Upwind transport on an axis-aligned grid moves the centroid at speed v.
  EXPECT_NEAR(centroid_x(20) - centroid_x(0), 20 * 0.02, 0.02);
}

TEST(Stability, ViolationsAreRejected) {
  auto g = mesh::generate_grid_mesh(5, 5, 0.0, 1);
  auto u0 = random_field(g.node_count, 1);
  const double limit = diffusion_dt_limit(g, 0.05);
  EXPECT_NEAR(limit, 0.5 / (0.05 * 6), 1e-15);
  EXPECT_THROW(simulate_diffusion(g, u0, 0.05, limit * 1.01, 3), InvalidArgument);
  auto v = uniform_velocity(g.node_count, 0.3, 0.4);
  EXPECT_NEAR(advection_dt_limit(g, v), 0.5 * 0.25 / 0.5, 1e-15);
  EXPECT_THROW(simulate_advection(g, u0, v, 0.0, 0.3, 3), InvalidArgument);
  EXPECT_NO_THROW(simulate_advection(g, u0, v, 0.0, 0.25, 3));
  EXPECT_THROW(simulate_diffusion(g, u0, -1.0, 1.0, 3), InvalidArgument);
}

TEST(ChannelStatsTest, PopulationStdAndRoundTrip) {
  Matrix x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  auto s = compute_channel_stats(x);
  EXPECT_DOUBLE_EQ(s.mean[0], 2.5);
  EXPECT_NEAR(s.std[0], std::sqrt(1.25), 1e-15);
  EXPECT_EQ(s.std[1], 1.0);
  EXPECT_LT((s.denormalize(s.normalize(x)) - x).cwiseAbs().maxCoeff(), 1e-15);
  nlohmann::json j = s;
  auto back = j.get<ChannelStats>();
  EXPECT_EQ(back.mean, s.mean);
  EXPECT_EQ(back.std, s.std);
}

TEST(Diffusion, HotSpotMaximumDecreasesMonotonically) {
  auto g = mesh::generate_grid_mesh(8, 8, 0.0, 1);
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(g.node_count);
  int center = 0;
  double best = 1e9;
  for (int i = 0; i < g.node_count; ++i) {
    const auto& p = g.mesh_positions[i];
    const double r = std::hypot(p[0] - 0.5, p[1] - 0.5);
    if (r < best) best = r, center = i;
  }
  u0[center] = 1.0;
  auto u = simulate_diffusion(g, u0, 0.05, diffusion_dt_limit(g, 0.05), 100);
  for (int t = 1; t <= 100; ++t) EXPECT_LT(u.row(t).maxCoeff(), u.row(t - 1).maxCoeff()) << t;
}

TEST(Advection, ZeroInflowOnZeroFieldStaysZero) {
  auto g = mesh::generate_grid_mesh(9, 9, 0.2, 3);
  rng::Stream s(5);
  Matrix v = dhmp::testutil::random_matrix(g.node_count, 2, s, 0.02);
  auto u = simulate_advection(g, Eigen::VectorXd::Zero(g.node_count), v, 0.01, 0.5, 30);
  EXPECT_EQ(u.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ChannelStatsTest, LawOfLargeNumbers) {
  rng::Stream s(3);
  Matrix x(200000, 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, 0) = 3.0 + 2.0 * s.normal();
  auto st = compute_channel_stats(x);
  EXPECT_NEAR(st.mean[0], 3.0, 0.02);
  EXPECT_NEAR(st.std[0], 2.0, 0.02);
}

TEST(DatasetConfigTest, ValidationAndJson) {
  DatasetConfig c;
  nlohmann::json j = c;
  EXPECT_EQ(nlohmann::json(j.get<DatasetConfig>()), j);
  j["unknown"] = 3;
  EXPECT_THROW(j.get<DatasetConfig>(), InvalidArgument);
  c.mesh_min = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_EQ(task_from_string("diffusion"), Task::Diffusion);
  EXPECT_THROW(task_from_string("wave"), InvalidArgument);
}

TEST(Dataset, TrajectoriesAreDeterministicAndIndependentOfSplitSizes) {
  auto c = tiny_config();
  auto a = generate_trajectory(c, 11, "train", 2);
  auto b = generate_trajectory(c, 11, "train", 2);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.mesh.edges, b.mesh.edges);
  c.train = 10;
  EXPECT_EQ(generate_trajectory(c, 11, "train", 2).u, a.u);
  EXPECT_NE(generate_trajectory(c, 12, "train", 2).u, a.u);
  EXPECT_NE(generate_trajectory(c, 11, "val", 2).u.row(0), a.u.row(0));
  EXPECT_EQ(a.steps(), 5);
  EXPECT_EQ(a.velocity.rows(), a.node_count());
  EXPECT_THROW(generate_trajectory(c, 11, "bogus", 0), InvalidArgument);
}

TEST(Dataset, SizesAndOodMeshes) {
  auto c = tiny_config();
  auto d = generate_dataset(c, 3);
  EXPECT_EQ(d.split("train").size(), 3u);
  for (const auto& t : d.split("train")) {
    EXPECT_GE(t.node_count(), 16);
    EXPECT_LE(t.node_count(), 36);
  }
  EXPECT_EQ(d.split("ood").front().node_count(), 49);
  EXPECT_EQ(d.norm.inputs.mean.size(), 3u);
  c.task = Task::Diffusion;
  auto diff = generate_dataset(c, 3);
  EXPECT_EQ(diff.norm.inputs.mean.size(), 1u);
  EXPECT_EQ(diff.split("val").front().velocity.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NE(diff.fingerprint(), d.fingerprint());
}

TEST(Dataset, WriteIsDeterministicAndLoadVerifiesHashes) {
  auto c = tiny_config();
  auto d1 = scratch("a"), d2 = scratch("b");
  const auto h1 = make_dataset(c, 21, d1);
  const auto h2 = make_dataset(c, 21, d2);
  EXPECT_EQ(h1, h2);
  EXPECT_EQ(io::read_file(d1 / "manifest.json"), io::read_file(d2 / "manifest.json"));
  auto loaded = load_dataset(d1);
  auto fresh = generate_dataset(c, 21);
  for (const auto& name : split_names()) {
    ASSERT_EQ(loaded.split(name).size(), fresh.split(name).size());
    for (std::size_t k = 0; k < fresh.split(name).size(); ++k) {
      EXPECT_EQ(loaded.split(name)[k].u, fresh.split(name)[k].u);
      EXPECT_EQ(loaded.split(name)[k].velocity, fresh.split(name)[k].velocity);
    }
  }
  EXPECT_EQ(loaded.fingerprint(), fresh.fingerprint());
  EXPECT_EQ(loaded.norm.targets.std, fresh.norm.targets.std);

  std::filesystem::path victim;
  for (const auto& e : std::filesystem::directory_iterator(d1 / "trajectories")) victim = e.path();
  auto bytes = io::read_file(victim);
  bytes.back() ^= 0x40;
  io::write_file(victim, bytes);
  EXPECT_THROW(load_dataset(d1), IoError);
  EXPECT_THROW(load_dataset(scratch("missing")), IoError);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dhmp/error.hpp"
#include "dhmp/io.hpp"
#include "dhmp/trainer.hpp"

using namespace dhmp;
using namespace dhmp::train;

namespace {

oracle::DatasetConfig tiny_data_config() {
  oracle::DatasetConfig c;
  c.train = 4;
  c.val = 2;
  c.test = 2;
  c.ood = 1;
  c.mesh_min = 4;
  c.mesh_max = 6;
  c.ood_size = 7;
  c.steps = 6;
  return c;
}

const oracle::Dataset& tiny_data() {
  static const oracle::Dataset d = oracle::generate_dataset(tiny_data_config(), 5);
  return d;
}

model::ModelConfig tiny_model(model::Variant v = model::Variant::DHMP) {
  model::ModelConfig c;
  c.variant = v;
  c.latent = 4;
  c.hidden = 4;
  c.flat_passes = 2;
  return config_for_task(c, oracle::Task::Advection);
}

TrainConfig tiny_train(std::int64_t steps) {
  TrainConfig t;
  t.total_steps = steps;
  t.eval_interval = 0;
  t.checkpoint_interval = 0;
  t.seed = 3;
  return t;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dhmp_trainer_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Schedules, TemperatureDecayAndFloor) {
  model::ModelConfig c;
  EXPECT_DOUBLE_EQ(temperature_schedule(0, c), 5.0);
  EXPECT_DOUBLE_EQ(temperature_schedule(1, c), 5.0 * 0.999);
  EXPECT_GT(temperature_schedule(3910, c), 0.1);
  EXPECT_DOUBLE_EQ(temperature_schedule(3911, c), 0.1);
  EXPECT_DOUBLE_EQ(temperature_schedule(100000, c), 0.1);
}

TEST(Schedules, LearningRateIsGeometric) {
  TrainConfig t;
  t.total_steps = 1000;
  EXPECT_DOUBLE_EQ(lr_schedule(0, t), 1e-4);
  EXPECT_NEAR(lr_schedule(1000, t), 1e-6, 1e-21);
  EXPECT_NEAR(lr_schedule(500, t), 1e-5, 1e-19);
  EXPECT_NEAR(lr_schedule(250, t) * lr_schedule(750, t), 1e-10, 1e-24);
  EXPECT_THROW(lr_schedule(1001, t), InvalidArgument);
  EXPECT_THROW(lr_schedule(-1, t), InvalidArgument);
}

TEST(TrainConfigTest, ValidationAndJson) {
  TrainConfig t;
  nlohmann::json j = t;
  EXPECT_EQ(nlohmann::json(j.get<TrainConfig>()), j);
  t.lr_end = 1e-3;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = TrainConfig{};
  t.noise_scale = 1.0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  j["extra"] = true;
  EXPECT_THROW(j.get<TrainConfig>(), InvalidArgument);
}

TEST(Features, LayoutAndNoise) {
  const auto& d = tiny_data();
  const auto& traj = d.split("train")[0];
  Eigen::VectorXd u = traj.u.row(2).transpose();
  Matrix x = node_features(traj, u, d.norm);
  ASSERT_EQ(x.cols(), 6);
  EXPECT_EQ(node_input_width(oracle::Task::Advection), 6);
  EXPECT_EQ(node_input_width(oracle::Task::Diffusion), 4);
  for (int i = 0; i < traj.node_count(); ++i) {
    EXPECT_DOUBLE_EQ(x(i, 0), (u[i] - d.norm.inputs.mean[0]) / d.norm.inputs.std[0]);
    EXPECT_EQ(x.row(i).tail(3).sum(), 1.0);
    EXPECT_EQ(x(i, 3 + static_cast<int>(traj.mesh.node_types[i])), 1.0);
  }
  auto cfg = tiny_train(10);
  Sample s{&traj, 2};
  auto n1 = input_noise(s, d.norm, cfg, 4);
  EXPECT_EQ(n1, input_noise(s, d.norm, cfg, 4));
  EXPECT_NE(n1, input_noise(s, d.norm, cfg, 5));
  cfg.noise_scale = 0.0;
  EXPECT_EQ(input_noise(s, d.norm, cfg, 4).cwiseAbs().maxCoeff(), 0.0);
  auto a = draw_sample(d.split("train"), tiny_train(10), 7);
  auto b = draw_sample(d.split("train"), tiny_train(10), 7);
  EXPECT_EQ(a.traj, b.traj);
  EXPECT_EQ(a.t, b.t);
  EXPECT_LT(a.t, a.traj->steps());
}

TEST(Evaluate, ZeroDeltaMatchesClosedForm) {
  const auto& split = tiny_data().split("val");
  EvalOptions o;
  o.horizon = 4;
  auto rep = evaluate(zero_delta_predictor(), split, o);
  // RMSE-1 of a zero prediction is the RMS of the true deltas at interior
  // nodes (pinned nodes are reset to the truth), counted over all nodes.
  double sq1 = 0.0, n1 = 0.0, sq_all = 0.0;
  for (const auto& tr : split) {
    for (int t = 0; t < 4; ++t) {
      for (int i = 0; i < tr.node_count(); ++i) {
        const double d = mesh::is_pinned(tr.mesh.node_types[i]) ? 0.0 : tr.u(t + 1, i) - tr.u(t, i);
        sq1 += d * d;
        n1 += 1;
        const double r = mesh::is_pinned(tr.mesh.node_types[i]) ? 0.0 : tr.u(t + 1, i) - tr.u(0, i);
        sq_all += r * r;
      }
    }
  }
  EXPECT_NEAR(rep.rmse_1, std::sqrt(sq1 / n1), 1e-15);
  EXPECT_NEAR(rep.rmse_all, std::sqrt(sq_all / n1), 1e-15);
  EXPECT_EQ(rep.rollout_curve.size(), 4u);
  auto truth = evaluate(ground_truth_predictor(), split, o);
  EXPECT_LT(truth.rmse_1, 1e-15);
  EXPECT_LT(truth.rmse_all, 1e-12);
  o.horizon = 100;
  EXPECT_THROW(evaluate(zero_delta_predictor(), split, o), InvalidArgument);
}

TEST(Evaluate, HorizonOneRolloutEqualsOneStep) {
  const auto& d = tiny_data();
  model::Model m(tiny_model(), 1);
  EvalOptions o;
  o.horizon = 1;
  o.eval_seed = 9;
  auto rep = evaluate(m, d.norm, d.split("val"), o);
  EXPECT_DOUBLE_EQ(rep.rmse_1, rep.rmse_all);
  EXPECT_TRUE(std::isfinite(rep.rmse_1));
  EXPECT_EQ(rep.mean_nodes_per_level.size(), 3u);
}

TEST(Evaluate, RepeatsUseDistinctSeedsAndSampleStd) {
  const auto& d = tiny_data();
  model::Model m(tiny_model(), 1);
  EvalOptions o;
  o.horizon = 3;
  auto s = evaluate_repeats(m, d.norm, d.split("val"), o, 3);
  ASSERT_EQ(s.runs.size(), 3u);
  std::vector<double> r1;
  for (const auto& r : s.runs) r1.push_back(r.rmse_1);
  auto [mean, sd] = mean_std(r1);
  EXPECT_DOUBLE_EQ(s.rmse_1_mean, mean);
  EXPECT_DOUBLE_EQ(s.rmse_1_std, sd);
  auto [m2, s2] = mean_std({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(m2, 2.0);
  EXPECT_DOUBLE_EQ(s2, 1.0);
}

TEST(Training, OneStepErrorDecreasesOnTinyProblem) {
  // Per-step losses at batch size 1 are heavy tailed, so compare a
  // deterministic one-step error on the training split instead.
  const auto& d = tiny_data();
  auto mc = tiny_model(model::Variant::FLAT);
  mc.latent = mc.hidden = 16;
  model::Model m(mc, 2);
  EvalOptions eo;
  eo.horizon = 1;
  const double before = evaluate(m, d.norm, d.split("train"), eo).rmse_1;
  auto cfg = tiny_train(1000);
  cfg.lr_start = 1e-3;
  cfg.lr_end = 1e-5;
  TrainOptions o;
  o.final_eval = false;
  auto run = train::train(m, d, cfg, o);
  ASSERT_EQ(run.losses.size(), 1000u);
  const double after = evaluate(m, d.norm, d.split("train"), eo).rmse_1;
  EXPECT_LT(after, 0.5 * before);
}

TEST(Training, ResumeReproducesUninterruptedRun) {
  const auto& d = tiny_data();
  auto cfg = tiny_train(12);
  cfg.checkpoint_interval = 4;
  auto dir_a = scratch("full"), dir_b = scratch("split");

  model::Model a(tiny_model(), 4);
  TrainOptions oa;
  oa.out_dir = dir_a;
  oa.init_seed = 4;
  oa.final_eval = false;
  auto full = train::train(a, d, cfg, oa);

  model::Model b(tiny_model(), 4);
  TrainOptions ob = oa;
  ob.out_dir = dir_b;
  ob.stop_after = 5;
  auto first = train::train(b, d, cfg, ob);
  EXPECT_EQ(first.final_step, 5);
  ASSERT_TRUE(std::filesystem::exists(dir_b / "ckpt_4.json"));

  auto ckpt = load_checkpoint(dir_b / "ckpt_4");
  EXPECT_EQ(ckpt.step, 4);
  model::Model c(ckpt.model, ckpt.init_seed);
  TrainOptions oc = oa;
  oc.out_dir = scratch("resumed");
  oc.resume = ckpt;
  auto rest = train::train(c, d, ckpt.train, oc);
  ASSERT_EQ(rest.losses.size(), 8u);
  for (int k = 0; k < 8; ++k) EXPECT_EQ(rest.losses[k], full.losses[4 + k]) << k;
  auto pa = a.parameters(), pc = c.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k]->value, pc[k]->value);

  std::ifstream metrics(dir_a / "metrics.jsonl");
  int lines = 0;
  for (std::string line; std::getline(metrics, line);) ++lines;
  EXPECT_EQ(lines, 12);
  EXPECT_TRUE(std::filesystem::exists(dir_a / "final.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir_a / "report.json"));
  for (auto p : {dir_a, dir_b, *oc.out_dir}) std::filesystem::remove_all(p);
}

TEST(Checkpoint, RoundTripAndTamper) {
  const auto& d = tiny_data();
  model::Model m(tiny_model(model::Variant::M2), 6);
  ad::Adam opt(m.parameters());
  for (auto* p : m.parameters()) p->grad = Matrix::Ones(p->value.rows(), p->value.cols());
  opt.step(1e-3);
  auto dir = scratch("ckpt");
  std::filesystem::create_directories(dir);
  auto snap = snapshot(m, &opt, tiny_train(5), 6, 1, d.norm, d.fingerprint());
  save_checkpoint(dir / "c", snap);
  auto back = load_checkpoint(dir / "c");
  EXPECT_EQ(back.names, snap.names);
  ASSERT_EQ(back.params.size(), snap.params.size());
  for (std::size_t k = 0; k < snap.params.size(); ++k) {
    EXPECT_EQ(back.params[k], snap.params[k]);
    EXPECT_EQ(back.adam_m[k], snap.adam_m[k]);
    EXPECT_EQ(back.adam_v[k], snap.adam_v[k]);
  }
  EXPECT_EQ(back.adam_step, 1);
  EXPECT_EQ(back.dataset_fingerprint, d.fingerprint());
  EXPECT_EQ(nlohmann::json(back.model), nlohmann::json(snap.model));

  model::Model fresh(back.model, 99);
  restore_parameters(fresh, back);
  EvalOptions o;
  o.horizon = 2;
  EXPECT_EQ(evaluate(fresh, d.norm, d.split("val"), o).rmse_all,
            evaluate(m, d.norm, d.split("val"), o).rmse_all);

  model::Model other(tiny_model(model::Variant::FLAT), 1);
  EXPECT_THROW(restore_parameters(other, back), InvalidArgument);

  auto bytes = io::read_file(dir / "c.bin");
  bytes[bytes.size() / 2] ^= 1;
  io::write_file(dir / "c.bin", bytes);
  EXPECT_THROW(load_checkpoint(dir / "c"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Harness, AblationCsvShape) {
  const auto& d = tiny_data();
  AblationSpec spec;
  spec.base = tiny_model();
  spec.train = tiny_train(3);
  spec.seeds = {0, 1};
  spec.eval.horizon = 2;
  auto rows = run_ablation(d, {model::Variant::DHMP, model::Variant::M1, model::Variant::FLAT}, spec);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.rmse_1.size(), 2u);
    EXPECT_EQ(r.rmse_all.size(), 2u);
  }
  auto csv = ablation_csv(rows, "model");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "model,description,rmse_1_mean,rmse_1_std,rmse_all_mean,rmse_all_std,seeds");
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6) << line;
  }
  EXPECT_EQ(n, 3);
  EXPECT_NE(csv.find("Static-Anisotropic-Unlearnable (M1)"), std::string::npos);

  auto ks = run_ksweep(d, {1, 2}, spec);
  ASSERT_EQ(ks.size(), 2u);
  EXPECT_EQ(ks[0].label, "1");
}

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sparsedet/errors.hpp"
#include "sparsedet/train.hpp"

using namespace sparsedet;

namespace {

LabeledData synthetic(std::size_t n, std::uint64_t seed, double sigma = 0.5, std::size_t e = 8,
                      std::size_t attacks = 3) {
  SynthConfig c;
  c.n_samples = n;
  c.dim_e = e;
  c.n_attacks = attacks;
  c.noise_sigma = sigma;
  c.seed = seed;
  return make_labeled(generate_synthetic(c).embeddings);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto data = synthetic(120, 1);
  const LatentModel init = init_model(8, 12, 4, 5);
  for (auto kind : {OptimizerKind::adam, OptimizerKind::sgd}) {
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.epochs = 3;
    tc.batch_size = 16;
    tc.optimizer.kind = kind;
    const auto rec = train(init, data, data, tc);
    CHECK(rec.final_model == init);
    CHECK(rec.best_model == init);
  }
}

TEST_CASE("separable data: loss decreases below 0.1 and dev EER reaches 0") {
  // bonafide and spoof sit on distinct orthonormal directions with small noise
  const auto train_set = synthetic(400, 3, 0.1);
  const auto dev_set = synthetic(200, 4, 0.1);
  const std::size_t e = train_set.x.cols();
  const LatentModel init = init_model(e, 8, 8, 7);
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 64;
  tc.learning_rate = 1e-3;
  const auto rec = train(init, train_set, dev_set, tc);
  REQUIRE(rec.epochs.size() == 200);
  for (std::size_t i = 1; i < rec.epochs.size(); ++i) {
    CHECK(rec.epochs[i].train_loss < rec.epochs[i - 1].train_loss);
  }
  CHECK(rec.epochs.back().train_loss < 0.1);
  CHECK(rec.epochs[rec.best_epoch - 1].dev_eer == 0.0);
  CHECK(eer(score(rec.best_model, dev_set)) == 0.0);
}

TEST_CASE("training is bit-reproducible and the best epoch minimizes dev EER") {
  const auto train_set = synthetic(300, 10, 1.0);
  const auto dev_set = synthetic(150, 11, 1.0);
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 32;
  tc.seed = 42;
  const LatentModel init = init_model(8, 16, 4, 42);
  const auto a = train(init, train_set, dev_set, tc);
  const auto b = train(init, train_set, dev_set, tc);
  CHECK(a.epochs == b.epochs);
  CHECK(a.best_model == b.best_model);
  CHECK(a.final_model == b.final_model);
  for (const auto& e : a.epochs) {
    CHECK(e.dev_eer >= a.epochs[a.best_epoch - 1].dev_eer);
    if (e.epoch < a.best_epoch) CHECK(e.dev_eer > a.epochs[a.best_epoch - 1].dev_eer);
  }
  tc.seed = 43;
  CHECK_FALSE(train(init, train_set, dev_set, tc).final_model == a.final_model);
}

TEST_CASE("dense TopK trajectory equals the TopK-free trajectory step by step") {
  const auto data = synthetic(96, 21);
  const LatentModel init = init_model(8, 10, 10, 3);
  TrainConfig tc;
  tc.learning_rate = 5e-3;
  Trainer with_topk(init, tc, LatentActivation::topk);
  Trainer plain(init, tc, LatentActivation::none);
  for (std::size_t step = 0; step < 30; ++step) {
    const double la = with_topk.step(data.x, data.targets);
    const double lb = plain.step(data.x, data.targets);
    CHECK(la == lb);
    CHECK(with_topk.model() == plain.model());
  }
}

TEST_CASE("bonafide weighting changes the loss") {
  const auto data = synthetic(64, 8);
  const LatentModel init = init_model(8, 6, 3, 1);
  TrainConfig tc;
  Trainer plain(init, tc);
  std::vector<double> w(data.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = data.targets[i] == kBonafideLogit ? 4.0 : 1.0;
  Trainer weighted(init, tc);
  CHECK(plain.step(data.x, data.targets) != weighted.step(data.x, data.targets, w));
}

TEST_CASE("training input errors") {
  auto data = synthetic(50, 2);
  const LatentModel init = init_model(8, 6, 3, 1);
  TrainConfig tc;
  tc.epochs = 1;
  auto only_spoof = data;
  for (auto& t : only_spoof.targets) t = kSpoofLogit;
  CHECK_THROWS_AS(train(init, only_spoof, data, tc), DataError);
  CHECK_THROWS_AS(train(init_model(7, 6, 3, 1), data, data, tc), ShapeError);
  tc.batch_size = 0;
  CHECK_THROWS_AS(train(init, data, data, tc), ConfigError);

  tc = TrainConfig{};
  tc.epochs = 1;
  tc.learning_rate = 1e6;
  tc.optimizer.kind = OptimizerKind::sgd;
  auto huge = data;
  for (auto& v : huge.x.values()) v *= 1e200;
  CHECK_THROWS_AS(train(init, huge, data, tc), std::runtime_error);
}

TEST_CASE("average_rows is the arithmetic mean") {
  MetricRow a, b;
  a.split = b.split = "dev";
  a.dim_d = b.dim_d = 64;
  a.k = b.k = 8;
  a.seed = 1;
  b.seed = 2;
  a.eer = 0.10;
  b.eer = 0.30;
  a.min_dcf = 0.5;
  b.min_dcf = 0.7;
  a.sparsity = 0.875;
  b.sparsity = 0.9;
  a.best_epoch = 3;
  b.best_epoch = 6;
  a.completeness = {0.2, std::nullopt};
  b.completeness = {0.4, 0.6};
  a.mean_completeness = 0.2;
  b.mean_completeness = 0.5;
  a.mean_modularity = 0.25;
  b.mean_modularity = 0.75;
  a.survival_above_probe = 0.1;
  b.survival_above_probe = 0.2;
  const auto m = average_rows({a, b});
  CHECK_FALSE(m.seed.has_value());
  CHECK(m.n_models == 2);
  CHECK(m.eer == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(m.min_dcf == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(m.sparsity == doctest::Approx(0.8875).epsilon(1e-15));
  CHECK(m.best_epoch == 4.5);
  CHECK(*m.completeness[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(*m.completeness[1] == 0.6);
  CHECK(*m.mean_completeness == 0.35);
  CHECK(*m.mean_modularity == 0.5);
  CHECK(m.survival_above_probe == doctest::Approx(0.15).epsilon(1e-15));

  const auto single = average_rows({a});
  CHECK(single.eer == a.eer);
  CHECK(single.completeness == a.completeness);

  b.k = 16;
  CHECK_THROWS_AS(average_rows({a, b}), DataError);
}

TEST_CASE("small sweep: rows per model, averaged rows, deterministic output") {
  const auto train_set = synthetic(240, 30, 0.5, 12, 4);
  const auto dev_set = synthetic(160, 31, 0.5, 12, 4);
  SweepConfig sc;
  sc.train.epochs = 3;
  sc.train.batch_size = 32;
  sc.grid = {{8, std::nullopt}, {16, 4}};
  sc.seeds = {1, 2};
  const auto r1 = run_sweep(train_set, dev_set, sc);
  REQUIRE(r1.report.per_seed.size() == 4);
  REQUIRE(r1.report.averaged.size() == 2);
  CHECK(r1.report.per_seed[0].k == 8);
  CHECK(r1.report.per_seed[2].k == 4);
  CHECK(r1.report.per_seed[3].seed == 2u);
  CHECK(r1.report.factor_names == std::vector<std::string>{"A01", "A02", "A03", "A04", "bonafide"});
  CHECK(r1.report.averaged[1].eer ==
        doctest::Approx((r1.report.per_seed[2].eer + r1.report.per_seed[3].eer) / 2).epsilon(1e-15));
  CHECK(r1.report.per_seed[2].sparsity >= 1.0 - 4.0 / 16.0);

  const auto dir = std::filesystem::temp_directory_path() / "sparsedet_test_sweep";
  write_report_csv(r1.report, dir / "a.csv");
  write_report_json(r1.report, dir / "a.json");
  const auto r2 = run_sweep(train_set, dev_set, sc);
  write_report_csv(r2.report, dir / "b.csv");
  write_report_json(r2.report, dir / "b.json");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

  sc.grid = {{8, 9}};
  CHECK_THROWS_AS(run_sweep(train_set, dev_set, sc), ConfigError);
}

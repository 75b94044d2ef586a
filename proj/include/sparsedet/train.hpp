#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsedet/data.hpp"
#include "sparsedet/detmetrics.hpp"
#include "sparsedet/disentangle.hpp"
#include "sparsedet/infotheory.hpp"
#include "sparsedet/nn.hpp"

namespace sparsedet {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  std::optional<double> bonafide_weight;  // loss weight of bonafide rows; spoof rows weigh 1
  DcfParams dcf;                          // for the per-epoch dev DCF

  void validate() const;
};

// Embeddings in f64 with per-row class targets and the metadata needed to
// build score sets.
struct LabeledData {
  MatrixD x;
  std::vector<std::uint8_t> targets;  // kBonafideLogit / kSpoofLogit
  std::vector<SampleLabel> labels;

  std::size_t size() const { return x.rows(); }
};

LabeledData make_labeled(const EmbeddingSet& set);

// Score set of `model` on `data` (bonafide log-probability).
ScoreSet score(const LatentModel& model, const LabeledData& data);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_eer = 0.0;
  double dev_dcf = 0.0;
  bool operator==(const EpochStats&) const = default;
};

struct TrainRecord {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  LatentModel best_model;
  LatentModel final_model;
};

// One optimizer over one model. Exposed so trajectories can be compared
// step by step.
class Trainer {
 public:
  Trainer(LatentModel init, const TrainConfig& config,
          LatentActivation activation = LatentActivation::topk);

  // One gradient step on a batch; returns the batch loss before the update.
  double step(const MatrixD& x, std::span<const std::uint8_t> targets, std::span<const double> weights = {});

  const LatentModel& model() const { return model_; }
  std::size_t steps_taken() const { return t_; }

 private:
  LatentModel model_;
  TrainConfig config_;
  LatentActivation activation_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;  // Adam moments over the flattened parameters
};

// Shuffled mini-batch cross-entropy training with best-epoch snapshotting
// (lowest dev EER, then lowest dev DCF, then earliest).
TrainRecord train(const LatentModel& model_init, const LabeledData& train_set, const LabeledData& dev_set,
                  const TrainConfig& config);

void write_train_record_csv(const TrainRecord& record, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Sweeps

enum class LatentSource { pre_topk, post_topk };
std::string_view to_string(LatentSource s);
LatentSource parse_latent_source(std::string_view s);

struct GridCell {
  std::size_t dim_d = 0;
  std::optional<std::size_t> k;  // nullopt: dense baseline, k = D

  std::size_t effective_k() const { return k.value_or(dim_d); }
};

struct SweepConfig {
  TrainConfig train;
  std::vector<GridCell> grid;
  std::vector<std::uint64_t> seeds;
  BinningSpec binning;
  LatentSource latent_source = LatentSource::post_topk;
  std::vector<std::string> factors;  // empty: every factor observed in the dev labels
  double survival_probe = 0.05;
  std::string split = "dev";

  void validate() const;
};

struct MetricRow {
  std::string split;
  std::size_t dim_d = 0;
  std::size_t k = 0;
  std::optional<std::uint64_t> seed;  // nullopt on seed-averaged rows
  std::size_t n_models = 1;
  double best_epoch = 0.0;
  double eer = 0.0;
  double min_dcf = 0.0;
  double sparsity = 0.0;
  std::vector<MaybeMetric> completeness;  // per factor
  MaybeMetric mean_completeness;
  MaybeMetric mean_modularity;
  double survival_above_probe = 0.0;
};

// Arithmetic mean of rows sharing (split, D, k); undefined metrics are left
// out of their mean.
MetricRow average_rows(const std::vector<MetricRow>& rows);

struct MetricReport {
  std::vector<std::string> factor_names;
  DcfParams dcf;
  BinningSpec binning;
  LatentSource latent_source = LatentSource::post_topk;
  double survival_probe = 0.05;
  std::vector<MetricRow> per_seed;  // grid order, then seed order
  std::vector<MetricRow> averaged;  // grid order
};

struct SweepRun {
  GridCell cell;
  std::uint64_t seed = 0;
  TrainRecord record;
  DisentanglementReport disentanglement;
};

struct SweepResult {
  MetricReport report;
  std::vector<SweepRun> runs;  // same order as report.per_seed
  // Seed-averaged disentanglement per grid cell.
  std::vector<DisentanglementReport> averaged_disentanglement;
};

// Per-model metrics on the dev split: EER/DCF of the best-epoch model,
// sparsity and disentanglement of its latents.
MetricRow evaluate_model(const LatentModel& model, const LabeledData& dev, const SweepConfig& config,
                         const std::vector<std::string>& factors, DisentanglementReport* report_out = nullptr);

SweepResult run_sweep(const LabeledData& train_set, const LabeledData& dev_set, const SweepConfig& config);

void write_report_csv(const MetricReport& report, const std::filesystem::path& path);
// Rows = averaged configurations, columns = factors.
void write_completeness_table_csv(const MetricReport& report, const std::filesystem::path& path);
void write_report_json(const MetricReport& report, const std::filesystem::path& path,
                       const std::string& manifest = {});

}  // namespace sparsedet

#include "sparsedet/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>

#include <json.hpp>

#include "io_util.hpp"
#include "sparsedet/errors.hpp"

namespace sparsedet {

void TrainConfig::validate() const {
  // A zero rate is accepted: it freezes the parameters, which is a useful
  // control run.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be a finite non-negative number");
  }
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (optimizer.kind == OptimizerKind::adam) {
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("adam beta1 must lie in [0, 1)");
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("adam beta2 must lie in [0, 1)");
    if (!(optimizer.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  }
  if (bonafide_weight && !(*bonafide_weight > 0.0)) throw ConfigError("bonafide weight must be positive");
  dcf.validate();
}

LabeledData make_labeled(const EmbeddingSet& set) {
  if (!set.labeled()) throw DataError("embedding set carries no labels");
  LabeledData d;
  d.x = matrix_cast<double>(set.matrix);
  d.labels = set.labels;
  d.targets.reserve(set.size());
  for (const auto& l : set.labels) {
    d.targets.push_back(static_cast<std::uint8_t>(l.cls == SampleClass::bonafide ? kBonafideLogit : kSpoofLogit));
  }
  return d;
}

ScoreSet score(const LatentModel& model, const LabeledData& data) {
  const auto scores = bonafide_scores(model, data.x);
  ScoreSet out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& l = data.labels[i];
    out.push_back({l.sample_id, scores[i], l.cls, l.attack_id});
  }
  return out;
}

namespace {

// Visits (parameter block, gradient block) pairs in the fixed order
// w_in, b_in, w_out, b_out.
template <typename Fn>
void for_each_block(LatentModel& m, const Gradients& g, Fn&& fn) {
  fn(std::span<double>(m.w_in.values()), std::span<const double>(g.w_in.values()));
  fn(std::span<double>(m.b_in), std::span<const double>(g.b_in));
  fn(std::span<double>(m.w_out.values()), std::span<const double>(g.w_out.values()));
  fn(std::span<double>(m.b_out), std::span<const double>(g.b_out));
}

std::size_t parameter_count(const LatentModel& m) {
  return m.w_in.size() + m.b_in.size() + m.w_out.size() + m.b_out.size();
}

}  // namespace

Trainer::Trainer(LatentModel init, const TrainConfig& config, LatentActivation activation)
    : model_(std::move(init)), config_(config), activation_(activation) {
  config_.validate();
  model_.validate();
  if (config_.optimizer.kind == OptimizerKind::adam) {
    m_.assign(parameter_count(model_), 0.0);
    v_.assign(parameter_count(model_), 0.0);
  }
}

double Trainer::step(const MatrixD& x, std::span<const std::uint8_t> targets, std::span<const double> weights) {
  const ForwardTrace trace = forward(model_, x, activation_);
  const LossResult loss = cross_entropy(trace.logits, targets, weights);
  if (!std::isfinite(loss.loss)) return loss.loss;
  const Gradients grads = backward(model_, trace, x, loss.grad_logits);
  ++t_;
  const double lr = config_.learning_rate;
  if (config_.optimizer.kind == OptimizerKind::sgd) {
    for_each_block(model_, grads, [lr](std::span<double> p, std::span<const double> g) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    });
    return loss.loss;
  }
  const auto& opt = config_.optimizer;
  const double bias1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t_));
  std::size_t offset = 0;
  for_each_block(model_, grads, [&](std::span<double> p, std::span<const double> g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      double& m = m_[offset + i];
      double& v = v_[offset + i];
      m = opt.beta1 * m + (1.0 - opt.beta1) * g[i];
      v = opt.beta2 * v + (1.0 - opt.beta2) * g[i] * g[i];
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
    offset += p.size();
  });
  return loss.loss;
}

namespace {

void check_dataset(const LabeledData& d, const LatentModel& model, const char* name) {
  if (d.size() == 0) throw DataError(std::string(name) + " set is empty");
  if (d.x.cols() != model.dim_e()) {
    throw ShapeError(std::string(name) + " set has E=" + std::to_string(d.x.cols()) + ", model expects E=" +
                     std::to_string(model.dim_e()));
  }
  if (d.targets.size() != d.size() || d.labels.size() != d.size()) {
    throw ShapeError(std::string(name) + " set has inconsistent label count");
  }
  const auto bona = std::count(d.targets.begin(), d.targets.end(), static_cast<std::uint8_t>(kBonafideLogit));
  if (bona == 0) throw DataError(std::string(name) + " set has no bonafide samples");
  if (static_cast<std::size_t>(bona) == d.size()) throw DataError(std::string(name) + " set has no spoof samples");
}

MatrixD gather_rows(const MatrixD& x, std::span<const std::size_t> rows) {
  MatrixD out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

TrainRecord train(const LatentModel& model_init, const LabeledData& train_set, const LabeledData& dev_set,
                  const TrainConfig& config) {
  config.validate();
  check_dataset(train_set, model_init, "training");
  check_dataset(dev_set, model_init, "dev");

  Trainer trainer(model_init, config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainRecord record;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const MatrixD xb = gather_rows(train_set.x, rows);
      std::vector<std::uint8_t> tb(rows.size());
      std::vector<double> wb;
      for (std::size_t i = 0; i < rows.size(); ++i) tb[i] = train_set.targets[rows[i]];
      if (config.bonafide_weight) {
        wb.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) wb[i] = tb[i] == kBonafideLogit ? *config.bonafide_weight : 1.0;
      }
      const double loss = trainer.step(xb, tb, wb);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      loss_sum += loss * static_cast<double>(rows.size());
    }

    const ScoreSet dev_scores = score(trainer.model(), dev_set);
    EpochStats stats{epoch, loss_sum / static_cast<double>(order.size()), eer(dev_scores),
                     min_dcf(dev_scores, config.dcf)};
    record.epochs.push_back(stats);
    const bool better = !have_best || stats.dev_eer < record.epochs[record.best_epoch - 1].dev_eer ||
                        (stats.dev_eer == record.epochs[record.best_epoch - 1].dev_eer &&
                         stats.dev_dcf < record.epochs[record.best_epoch - 1].dev_dcf);
    if (better) {
      record.best_epoch = epoch;
      record.best_model = trainer.model();
      have_best = true;
    }
  }
  record.final_model = trainer.model();
  return record;
}

void write_train_record_csv(const TrainRecord& record, const std::filesystem::path& path) {
  std::string text = "epoch,train_loss,dev_eer,dev_dcf,best\n";
  for (const auto& e : record.epochs) {
    text += std::to_string(e.epoch) + "," + io::format_number(e.train_loss) + "," + io::format_number(e.dev_eer) +
            "," + io::format_number(e.dev_dcf) + "," + (e.epoch == record.best_epoch ? "1" : "0") + "\n";
  }
  io::write_file(path, text);
}

// ---------------------------------------------------------------------------

std::string_view to_string(LatentSource s) { return s == LatentSource::pre_topk ? "pre_topk" : "post_topk"; }

LatentSource parse_latent_source(std::string_view s) {
  if (s == "pre_topk" || s == "pre") return LatentSource::pre_topk;
  if (s == "post_topk" || s == "post") return LatentSource::post_topk;
  throw ConfigError("unknown latent source '" + std::string(s) + "' (expected pre_topk or post_topk)");
}

void SweepConfig::validate() const {
  train.validate();
  binning.validate();
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  for (const auto& c : grid) {
    if (c.dim_d == 0) throw ConfigError("grid D must be positive");
    if (c.k && (*c.k < 1 || *c.k > c.dim_d)) {
      throw ConfigError("grid k=" + std::to_string(*c.k) + " outside [1, D=" + std::to_string(c.dim_d) + "]");
    }
  }
}

MetricRow average_rows(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw DataError("average_rows: no rows");
  const MetricRow& first = rows.front();
  MetricRow out;
  out.split = first.split;
  out.dim_d = first.dim_d;
  out.k = first.k;
  out.n_models = 0;
  const double n = static_cast<double>(rows.size());
  auto mean_defined = [&rows](auto getter) -> MaybeMetric {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows) {
      if (const MaybeMetric v = getter(r)) {
        sum += *v;
        ++count;
      }
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  };
  double best_epoch = 0.0, e = 0.0, dcf = 0.0, sparsity = 0.0, survival = 0.0;
  for (const auto& r : rows) {
    if (r.split != first.split || r.dim_d != first.dim_d || r.k != first.k ||
        r.completeness.size() != first.completeness.size()) {
      throw DataError("average_rows: rows belong to different configurations");
    }
    out.n_models += r.n_models;
    best_epoch += r.best_epoch;
    e += r.eer;
    dcf += r.min_dcf;
    sparsity += r.sparsity;
    survival += r.survival_above_probe;
  }
  out.best_epoch = best_epoch / n;
  out.eer = e / n;
  out.min_dcf = dcf / n;
  out.sparsity = sparsity / n;
  out.survival_above_probe = survival / n;
  for (std::size_t f = 0; f < first.completeness.size(); ++f) {
    out.completeness.push_back(mean_defined([f](const MetricRow& r) { return r.completeness[f]; }));
  }
  out.mean_completeness = mean_defined([](const MetricRow& r) { return r.mean_completeness; });
  out.mean_modularity = mean_defined([](const MetricRow& r) { return r.mean_modularity; });
  return out;
}

MetricRow evaluate_model(const LatentModel& model, const LabeledData& dev, const SweepConfig& config,
                         const std::vector<std::string>& factors, DisentanglementReport* report_out) {
  const ForwardTrace trace = forward(model, dev.x);
  const MatrixD log_probs = log_softmax(trace.logits);
  ScoreSet scores;
  scores.reserve(dev.size());
  for (std::size_t i = 0; i < dev.size(); ++i) {
    const auto& l = dev.labels[i];
    scores.push_back({l.sample_id, log_probs(i, kBonafideLogit), l.cls, l.attack_id});
  }

  MetricRow row;
  row.split = config.split;
  row.dim_d = model.dim_d();
  row.k = model.sparsity_k;
  row.eer = eer(scores);
  row.min_dcf = min_dcf(scores, config.train.dcf);
  row.sparsity = sparsity_ratio(trace);

  const FactorTable table = build_factor_table(dev.labels, factors);
  const MatrixD& source = config.latent_source == LatentSource::post_topk ? trace.latent : trace.pre_latent;
  MatrixD latents(table.n_samples(), source.cols());
  for (std::size_t i = 0; i < table.n_samples(); ++i) {
    const auto src = source.row(table.sample_index[i]);
    std::copy(src.begin(), src.end(), latents.row(i).begin());
  }
  const ImportanceMatrix importance = nmi_matrix(latents, table, config.binning);
  auto thresholds = default_survival_thresholds();
  if (!std::binary_search(thresholds.begin(), thresholds.end(), config.survival_probe)) {
    thresholds.insert(std::upper_bound(thresholds.begin(), thresholds.end(), config.survival_probe),
                      config.survival_probe);
  }
  DisentanglementReport report = analyze(importance, thresholds);
  row.completeness = report.completeness;
  row.mean_completeness = report.mean_completeness();
  row.mean_modularity = report.mean_modularity();
  row.survival_above_probe = report.survival_at(config.survival_probe);
  if (report_out) *report_out = std::move(report);
  return row;
}

SweepResult run_sweep(const LabeledData& train_set, const LabeledData& dev_set, const SweepConfig& config) {
  config.validate();
  const std::vector<std::string> factors = config.factors.empty() ? observed_factors(dev_set.labels) : config.factors;

  struct Job {
    GridCell cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& cell : config.grid) {
    for (auto seed : config.seeds) jobs.push_back({cell, seed});
  }

  std::vector<SweepRun> runs(jobs.size());
  std::vector<MetricRow> rows(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto n_jobs = static_cast<std::ptrdiff_t>(jobs.size());
  // Runs are independent; results are placed by job index so completion
  // order cannot change the report.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < n_jobs; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    try {
      const Job& job = jobs[idx];
      TrainConfig tc = config.train;
      tc.seed = job.seed;
      const LatentModel init = init_model(train_set.x.cols(), job.cell.dim_d, job.cell.effective_k(), job.seed);
      SweepRun run{job.cell, job.seed, train(init, train_set, dev_set, tc), {}};
      // Evaluated at checkpoint precision so the report matches the saved model.
      rows[idx] = evaluate_model(round_to_float(run.record.best_model), dev_set, config, factors,
                                 &run.disentanglement);
      rows[idx].seed = job.seed;
      rows[idx].best_epoch = static_cast<double>(run.record.best_epoch);
      runs[idx] = std::move(run);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  SweepResult result;
  result.report.factor_names = factors;
  result.report.dcf = config.train.dcf;
  result.report.binning = config.binning;
  result.report.latent_source = config.latent_source;
  result.report.survival_probe = config.survival_probe;
  result.report.per_seed = rows;
  const std::size_t n_seeds = config.seeds.size();
  for (std::size_t c = 0; c < config.grid.size(); ++c) {
    const std::vector<MetricRow> group(rows.begin() + static_cast<std::ptrdiff_t>(c * n_seeds),
                                       rows.begin() + static_cast<std::ptrdiff_t>((c + 1) * n_seeds));
    result.report.averaged.push_back(average_rows(group));
    std::vector<DisentanglementReport> reports;
    for (std::size_t s = 0; s < n_seeds; ++s) reports.push_back(runs[c * n_seeds + s].disentanglement);
    result.averaged_disentanglement.push_back(aggregate_over_seeds(reports));
  }
  result.runs = std::move(runs);
  return result;
}

namespace {

std::string metric_text(const MaybeMetric& v) { return v ? io::format_number(*v) : "nan"; }

std::string row_csv(const MetricRow& r) {
  std::string s = r.split + "," + std::to_string(r.dim_d) + "," + std::to_string(r.k) + "," +
                  (r.seed ? std::to_string(*r.seed) : "mean") + "," + std::to_string(r.n_models) + "," +
                  io::format_number(r.best_epoch) + "," + io::format_number(r.eer) + "," +
                  io::format_number(r.min_dcf) + "," + io::format_number(r.sparsity) + "," +
                  metric_text(r.mean_completeness) + "," + metric_text(r.mean_modularity) + "," +
                  io::format_number(r.survival_above_probe);
  for (const auto& c : r.completeness) s += "," + metric_text(c);
  return s + "\n";
}

nlohmann::ordered_json row_json(const MetricRow& r, const std::vector<std::string>& factors) {
  auto opt = [](const MaybeMetric& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["split"] = r.split;
  j["D"] = r.dim_d;
  j["k"] = r.k;
  j["seed"] = r.seed ? nlohmann::ordered_json(*r.seed) : nlohmann::ordered_json();
  j["n_models"] = r.n_models;
  j["best_epoch"] = r.best_epoch;
  j["eer"] = r.eer;
  j["min_dcf"] = r.min_dcf;
  j["sparsity"] = r.sparsity;
  j["mean_completeness"] = opt(r.mean_completeness);
  j["mean_modularity"] = opt(r.mean_modularity);
  j["survival_above_probe"] = r.survival_above_probe;
  auto& comp = j["completeness"] = nlohmann::ordered_json::object();
  for (std::size_t f = 0; f < factors.size(); ++f) comp[factors[f]] = opt(r.completeness[f]);
  return j;
}

}  // namespace

void write_report_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::string text =
      "split,D,k,seed,n_models,best_epoch,eer,min_dcf,sparsity,mean_completeness,mean_modularity,survival_above_" +
      io::format_number(report.survival_probe);
  for (const auto& f : report.factor_names) text += ",comp_" + f;
  text += '\n';
  for (const auto& r : report.per_seed) text += row_csv(r);
  for (const auto& r : report.averaged) text += row_csv(r);
  io::write_file(path, text);
}

void write_completeness_table_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::string text = "split,D,k";
  for (const auto& f : report.factor_names) text += "," + f;
  text += '\n';
  for (const auto& r : report.averaged) {
    text += r.split + "," + std::to_string(r.dim_d) + "," + std::to_string(r.k);
    for (const auto& c : r.completeness) text += "," + metric_text(c);
    text += '\n';
  }
  io::write_file(path, text);
}

void write_report_json(const MetricReport& report, const std::filesystem::path& path, const std::string& manifest) {
  nlohmann::ordered_json j;
  if (!manifest.empty()) j["manifest"] = manifest;
  j["factor_names"] = report.factor_names;
  j["dcf"] = {{"c_miss", report.dcf.c_miss}, {"c_fa", report.dcf.c_fa}, {"p_target", report.dcf.p_target}};
  j["binning"] = {{"strategy", to_string(report.binning.strategy)},
                  {"n_bins", report.binning.n_bins},
                  {"zero_bin", report.binning.zero_bin}};
  j["latent_source"] = to_string(report.latent_source);
  j["survival_probe"] = report.survival_probe;
  auto& per_seed = j["per_seed"] = nlohmann::ordered_json::array();
  for (const auto& r : report.per_seed) per_seed.push_back(row_json(r, report.factor_names));
  auto& averaged = j["averaged"] = nlohmann::ordered_json::array();
  for (const auto& r : report.averaged) averaged.push_back(row_json(r, report.factor_names));
  io::write_file(path, j.dump(2) + "\n");
}

}  // namespace sparsedet

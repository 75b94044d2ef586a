#include "cli.hpp"

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "config_json.hpp"
#include "io_util.hpp"
#include "manifest.hpp"
#include "sparsedet/data.hpp"
#include "sparsedet/detmetrics.hpp"
#include "sparsedet/disentangle.hpp"
#include "sparsedet/errors.hpp"
#include "sparsedet/infotheory.hpp"
#include "sparsedet/nn.hpp"
#include "sparsedet/train.hpp"

namespace sparsedet::cli {

namespace fs = std::filesystem;

namespace {

// Options that override fields of a config struct. Precedence: built-in
// default < --config file < explicit flag.
template <typename Cfg>
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <typename Get>
  CLI::Option* add(const std::string& name, Get get, const std::string& desc) {
    using T = std::remove_reference_t<decltype(get(defaults_))>;
    auto value = std::make_shared<T>(get(defaults_));
    auto* opt = app_->add_option(name, *value, desc)->capture_default_str();
    setters_.emplace_back(opt, [get, value](Cfg& c) { get(c) = *value; });
    return opt;
  }

  template <typename Get, typename E>
  CLI::Option* add_choice(const std::string& name, Get get, std::vector<std::pair<std::string, E>> choices,
                          const std::string& desc) {
    auto value = std::make_shared<std::string>();
    std::vector<std::string> names;
    for (const auto& [n, e] : choices) {
      names.push_back(n);
      if (e == get(defaults_)) *value = n;
    }
    auto* opt = app_->add_option(name, *value, desc)->capture_default_str()->check(CLI::IsMember(names));
    setters_.emplace_back(opt, [get, value, choices](Cfg& c) {
      for (const auto& [n, e] : choices) {
        if (n == *value) get(c) = e;
      }
    });
    return opt;
  }

  // Optional field: unset by default.
  template <typename Get>
  CLI::Option* add_optional(const std::string& name, Get get, const std::string& desc) {
    using T = typename std::remove_reference_t<decltype(get(defaults_))>::value_type;
    auto value = std::make_shared<T>();
    auto* opt = app_->add_option(name, *value, desc + " [default: none]");
    setters_.emplace_back(opt, [get, value](Cfg& c) { get(c) = *value; });
    return opt;
  }

  Cfg resolve(Cfg base) const {
    for (const auto& [opt, set] : setters_) {
      if (opt->count() > 0) set(base);
    }
    return base;
  }

 private:
  CLI::App* app_;
  Cfg defaults_{};
  std::vector<std::pair<CLI::Option*, std::function<void(Cfg&)>>> setters_;
};

void add_train_flags(Flags<TrainConfig>& f) {
  f.add("--lr", [](TrainConfig& c) -> auto& { return c.learning_rate; }, "learning rate");
  f.add("--epochs", [](TrainConfig& c) -> auto& { return c.epochs; }, "training epochs");
  f.add("--batch-size", [](TrainConfig& c) -> auto& { return c.batch_size; }, "mini-batch size");
  f.add_choice("--optimizer", [](TrainConfig& c) -> auto& { return c.optimizer.kind; },
               std::vector<std::pair<std::string, OptimizerKind>>{{"adam", OptimizerKind::adam},
                                                                  {"sgd", OptimizerKind::sgd}},
               "optimizer");
  f.add("--beta1", [](TrainConfig& c) -> auto& { return c.optimizer.beta1; }, "Adam beta1");
  f.add("--beta2", [](TrainConfig& c) -> auto& { return c.optimizer.beta2; }, "Adam beta2");
  f.add("--adam-epsilon", [](TrainConfig& c) -> auto& { return c.optimizer.epsilon; }, "Adam epsilon");
  f.add_optional("--bonafide-weight", [](TrainConfig& c) -> auto& { return c.bonafide_weight; },
                 "loss weight of bonafide rows (spoof rows weigh 1)");
  f.add("--c-miss", [](TrainConfig& c) -> auto& { return c.dcf.c_miss; }, "DCF miss cost for dev selection");
  f.add("--c-fa", [](TrainConfig& c) -> auto& { return c.dcf.c_fa; }, "DCF false-alarm cost for dev selection");
  f.add("--p-target", [](TrainConfig& c) -> auto& { return c.dcf.p_target; }, "DCF bonafide prior for dev selection");
}

const std::vector<std::pair<std::string, BinStrategy>> kBinChoices{{"quantile", BinStrategy::quantile},
                                                                   {"equal_width", BinStrategy::equal_width}};

void add_binning_flags(Flags<BinningSpec>& f) {
  f.add_choice("--binning", [](BinningSpec& b) -> auto& { return b.strategy; }, kBinChoices, "bin edges");
  f.add("--n-bins", [](BinningSpec& b) -> auto& { return b.n_bins; }, "number of bins");
  f.add("--zero-bin", [](BinningSpec& b) -> auto& { return b.zero_bin; },
        "give exact zeros their own bin (true/false)");
}

fs::path default_manifest(const fs::path& main_output, const std::string& flag) {
  return flag.empty() ? fs::path(main_output.string() + ".manifest.json") : fs::path(flag);
}

EmbeddingSet load_labeled_set(const std::string& embeddings, const std::string& labels, Manifest& m,
                              const std::string& role) {
  EmbeddingSet set = load_embeddings(embeddings);
  m.add_input(embeddings, role + "_embeddings");
  if (!labels.empty()) {
    attach_labels(set, read_labels(labels));
    m.add_input(labels, role + "_labels");
  }
  if (!set.labeled()) throw DataError(embeddings + " carries no labels; pass the matching label file");
  return set;
}

void expect(bool ok, const fs::path& path, const std::string& what) {
  if (!ok) throw FormatError("output check failed for " + path.string() + ": " + what);
}

void check_nonempty(const fs::path& path) {
  expect(fs::is_regular_file(path) && fs::file_size(path) > 0, path, "missing or empty");
}

void check_json(const fs::path& path) {
  check_nonempty(path);
  read_json_file(path.string());
}

std::string cell_tag(std::size_t d, std::size_t k) { return "D" + std::to_string(d) + "_k" + std::to_string(k); }

std::string cell_label(std::size_t d, std::size_t k, bool dense) {
  return "D=" + std::to_string(d) + (dense ? ", dense" : ", k=" + std::to_string(k));
}

void write_completeness_csv(const DisentanglementReport& r, const fs::path& path) {
  std::string out = "factor,completeness\n";
  for (std::size_t f = 0; f < r.factor_names.size(); ++f) {
    const auto& v = r.completeness[f];
    out += r.factor_names[f] + "," + (v ? io::format_number(*v) : std::string("nan")) + "\n";
  }
  io::write_file(path, out);
}

void write_json(const Json& j, const fs::path& path) { io::write_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  double dev_fraction = 0.0;
  std::string out_embeddings, out_labels, out_dev_embeddings, out_dev_labels, manifest;
};

int cmd_synth(const SynthArgs& a, const Flags<SynthConfig>& flags, std::ostream& out) {
  SynthConfig cfg = flags.resolve(a.config.empty() ? SynthConfig{} : synth_from_json(read_json_file(a.config)));
  cfg.validate();
  if (a.dev_fraction < 0.0 || a.dev_fraction >= 1.0) throw ConfigError("--dev-fraction must lie in [0, 1)");
  const bool split = a.dev_fraction > 0.0;
  if (split && (a.out_dev_embeddings.empty() || a.out_dev_labels.empty())) {
    throw ConfigError("--dev-fraction needs --out-dev-embeddings and --out-dev-labels");
  }

  Manifest m("synth", default_manifest(a.out_embeddings, a.manifest));
  if (!a.config.empty()) m.add_input(a.config, "config");
  m.set_config({{"synth", to_json(cfg)}, {"dev_fraction", a.dev_fraction}});
  m.add_seed(cfg.seed);

  const SynthData data = generate_synthetic(cfg);
  const std::size_t n = data.embeddings.size();
  const auto n_dev = static_cast<std::size_t>(std::llround(a.dev_fraction * static_cast<double>(n)));
  if (split && (n_dev == 0 || n_dev == n)) throw ConfigError("--dev-fraction leaves an empty split");

  auto emit = [&](const EmbeddingSet& set, const std::string& emb, const std::string& lab, const std::string& role) {
    save_embeddings(set, emb);
    write_labels(set.labels, lab);
    const EmbeddingSet back = load_embeddings(emb);
    expect(back.ids == set.ids && back.matrix == set.matrix && (!back.labeled() || back.labels == set.labels), emb,
           "embeddings do not read back identically");
    expect(read_labels(lab) == set.labels, lab, "labels do not read back identically");
    m.add_output(emb, role + "_embeddings");
    m.add_output(lab, role + "_labels");
  };
  if (split) {
    emit(slice(data.embeddings, 0, n - n_dev), a.out_embeddings, a.out_labels, "train");
    emit(slice(data.embeddings, n - n_dev, n), a.out_dev_embeddings, a.out_dev_labels, "dev");
  } else {
    emit(data.embeddings, a.out_embeddings, a.out_labels, "all");
  }
  m.write();
  check_json(m.path());
  out << "wrote " << n << " samples (E=" << cfg.dim_e << ", " << data.factors.n_factors() << " factors)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string train_embeddings, train_labels, dev_embeddings, dev_labels;
  std::size_t dim_d = 160;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string out_checkpoint, out_history, manifest;
};

int cmd_train(const TrainArgs& a, const Flags<TrainConfig>& flags, bool k_given, bool seed_given,
              std::ostream& out) {
  TrainConfig cfg = flags.resolve(a.config.empty() ? TrainConfig{} : train_from_json(read_json_file(a.config)));
  if (seed_given) cfg.seed = a.seed;
  cfg.validate();
  const std::size_t k = k_given ? a.k : a.dim_d;

  const fs::path ckpt = a.out_checkpoint;
  const fs::path history = a.out_history.empty() ? fs::path(ckpt.string() + ".history.csv") : fs::path(a.out_history);
  Manifest m("train", default_manifest(ckpt, a.manifest));
  if (!a.config.empty()) m.add_input(a.config, "config");
  const EmbeddingSet train_set = load_labeled_set(a.train_embeddings, a.train_labels, m, "train");
  const EmbeddingSet dev_set = load_labeled_set(a.dev_embeddings, a.dev_labels, m, "dev");
  if (train_set.dim_e() != dev_set.dim_e()) {
    throw ShapeError("train embeddings have E=" + std::to_string(train_set.dim_e()) + " but dev embeddings have E=" +
                     std::to_string(dev_set.dim_e()));
  }
  m.set_config({{"train", to_json(cfg)}, {"dim_e", train_set.dim_e()}, {"dim_d", a.dim_d}, {"k", k},
                {"dense", k == a.dim_d}});
  m.add_seed(cfg.seed);

  const LatentModel init = init_model(train_set.dim_e(), a.dim_d, k, cfg.seed);
  const TrainRecord record = train(init, make_labeled(train_set), make_labeled(dev_set), cfg);

  save_checkpoint(record.best_model, {cfg.seed, record.best_epoch, m.reference_from(ckpt)}, ckpt);
  write_train_record_csv(record, history);
  expect(load_checkpoint(ckpt) == round_to_float(record.best_model), ckpt, "checkpoint does not read back");
  check_nonempty(history);
  m.add_output(ckpt, "checkpoint");
  m.add_output(history, "history");
  m.write();
  check_json(m.path());

  const auto& best = record.epochs[record.best_epoch - 1];
  out << "best epoch " << record.best_epoch << ": dev EER " << best.dev_eer << ", dev minDCF " << best.dev_dcf
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string checkpoint, embeddings, labels, out_scores, manifest;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  Manifest m("score", default_manifest(a.out_scores, a.manifest));
  CheckpointInfo info;
  const LatentModel model = load_checkpoint(a.checkpoint, &info);
  m.add_input(a.checkpoint, "checkpoint");
  const EmbeddingSet set = load_labeled_set(a.embeddings, a.labels, m, "eval");
  if (set.dim_e() != model.dim_e()) {
    throw ShapeError("checkpoint expects E=" + std::to_string(model.dim_e()) + " but " + a.embeddings + " has E=" +
                     std::to_string(set.dim_e()));
  }
  m.set_config({{"dim_e", model.dim_e()}, {"dim_d", model.dim_d()}, {"k", model.sparsity_k},
                {"score", "log P(bonafide | x)"}});
  m.add_seed(info.seed);

  const ScoreSet scores = score(model, make_labeled(set));
  write_scores(scores, a.out_scores);
  expect(read_scores(a.out_scores) == scores, a.out_scores, "scores do not read back identically");
  m.add_output(a.out_scores, "scores");
  m.write();
  check_json(m.path());
  out << "scored " << scores.size() << " samples\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MetricsArgs {
  std::string scores, out_json, out_csv, manifest;
  double retain_threshold = 0.2;
};

int cmd_metrics(const MetricsArgs& a, const Flags<DcfParams>& flags, std::ostream& out) {
  const DcfParams dcf = flags.resolve({});
  dcf.validate();
  if (!(a.retain_threshold >= 0.0 && a.retain_threshold <= 1.0)) {
    throw ConfigError("--retain-threshold must lie in [0, 1]");
  }
  Manifest m("metrics", default_manifest(a.out_json, a.manifest));
  const ScoreSet scores = read_scores(a.scores);
  m.add_input(a.scores, "scores");
  m.set_config({{"dcf", to_json(dcf)}, {"retain_threshold", a.retain_threshold}});

  const double global_eer = eer(scores);
  const double global_dcf = min_dcf(scores, dcf);
  const auto per_attack = per_attack_eer(scores);
  const auto retained = retained_attacks(per_attack, a.retain_threshold);
  std::vector<std::string> excluded;
  for (const auto& [attack, _] : per_attack) {
    if (!std::binary_search(retained.begin(), retained.end(), attack)) excluded.push_back(attack);
  }
  std::size_t n_bona = 0;
  for (const auto& s : scores) n_bona += s.cls == SampleClass::bonafide;

  Json per = Json::object();
  for (const auto& [attack, v] : per_attack) per[attack] = v;
  const Json j{{"manifest", m.reference_from(a.out_json)},
               {"n_bonafide", n_bona},
               {"n_spoof", scores.size() - n_bona},
               {"eer", global_eer},
               {"min_dcf", global_dcf},
               {"dcf", to_json(dcf)},
               {"per_attack_eer", per},
               {"retain_threshold", a.retain_threshold},
               {"retained_attacks", retained},
               {"excluded_attacks", excluded}};
  write_json(j, a.out_json);
  check_json(a.out_json);
  m.add_output(a.out_json, "metrics_json");

  if (!a.out_csv.empty()) {
    std::string csv = "metric,attack,value\n";
    csv += "eer,all," + io::format_number(global_eer) + "\n";
    csv += "min_dcf,all," + io::format_number(global_dcf) + "\n";
    for (const auto& [attack, v] : per_attack) csv += "eer," + attack + "," + io::format_number(v) + "\n";
    io::write_file(a.out_csv, csv);
    check_nonempty(a.out_csv);
    m.add_output(a.out_csv, "metrics_csv");
  }
  m.write();
  check_json(m.path());
  out << "EER " << global_eer << ", minDCF " << global_dcf << ", retained " << retained.size() << "/"
      << per_attack.size() << " attacks\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct DisentangleArgs {
  std::string checkpoint, embeddings, latents, labels;
  std::string latent = "post";
  std::vector<std::string> factors;
  std::string retained_from;
  std::string out_dir, manifest;
};

int cmd_disentangle(const DisentangleArgs& a, const Flags<BinningSpec>& flags, std::ostream& out) {
  const BinningSpec binning = flags.resolve({});
  const fs::path dir = a.out_dir;
  Manifest m("disentangle", a.manifest.empty() ? dir / "manifest.json" : fs::path(a.manifest));

  const bool from_file = !a.latents.empty();
  if (from_file == !a.checkpoint.empty()) throw ConfigError("pass either --latents or --checkpoint");
  if (!from_file && a.embeddings.empty()) throw ConfigError("--checkpoint needs --embeddings");

  MatrixD latents;
  std::vector<SampleLabel> labels;
  Json source;
  if (from_file) {
    const EmbeddingSet set = load_labeled_set(a.latents, a.labels, m, "latents");
    latents = matrix_cast<double>(set.matrix);
    labels = set.labels;
    source = {{"kind", "file"}};
  } else {
    CheckpointInfo info;
    const LatentModel model = load_checkpoint(a.checkpoint, &info);
    m.add_input(a.checkpoint, "checkpoint");
    m.add_seed(info.seed);
    const EmbeddingSet set = load_labeled_set(a.embeddings, a.labels, m, "eval");
    if (set.dim_e() != model.dim_e()) {
      throw ShapeError("checkpoint expects E=" + std::to_string(model.dim_e()) + " but " + a.embeddings +
                       " has E=" + std::to_string(set.dim_e()));
    }
    ForwardTrace trace = forward(model, matrix_cast<double>(set.matrix));
    latents = a.latent == "pre" ? std::move(trace.pre_latent) : std::move(trace.latent);
    labels = set.labels;
    source = {{"kind", "checkpoint"}, {"latent", a.latent}, {"dim_d", model.dim_d()}, {"k", model.sparsity_k}};
  }

  std::vector<std::string> factors = a.factors;
  if (!a.retained_from.empty()) {
    if (!factors.empty()) throw ConfigError("--factors and --retained-from are exclusive");
    const Json metrics = read_json_file(a.retained_from);
    m.add_input(a.retained_from, "metrics");
    factors = metrics.at("retained_attacks").get<std::vector<std::string>>();
    factors.emplace_back(kBonafideFactor);
  }
  if (factors.empty()) factors = observed_factors(labels);
  m.set_config({{"source", source}, {"binning", to_json(binning)}, {"factors", factors}});

  const FactorTable table = build_factor_table(labels, factors);
  MatrixD rows(table.n_samples(), latents.cols());
  for (std::size_t i = 0; i < table.n_samples(); ++i) {
    const auto src = latents.row(table.sample_index[i]);
    std::copy(src.begin(), src.end(), rows.row(i).begin());
  }
  const ImportanceMatrix importance = nmi_matrix(rows, table, binning);
  const DisentanglementReport report = analyze(importance);

  const fs::path csv = dir / "importance.csv", json = dir / "importance.json", mod = dir / "modularity.csv",
                 comp = dir / "completeness.csv", rep = dir / "report.json", svg = dir / "survival.svg";
  write_importance_csv(importance, csv);
  write_importance_json(importance, json, m.reference_from(json));
  write_modularity_csv(report, mod);
  write_completeness_csv(report, comp);
  write_report_json(report, rep, m.reference_from(rep));
  const std::string label = from_file ? fs::path(a.latents).filename().string()
                                      : cell_label(source["dim_d"].get<std::size_t>(), source["k"].get<std::size_t>(),
                                                   source["dim_d"] == source["k"]);
  io::write_file(svg, survival_svg({{label, report.survival}}));

  expect(read_importance_csv(csv).values == importance.values, csv, "matrix does not read back identically");
  for (const auto& p : {json, rep}) check_json(p);
  for (const auto& p : {mod, comp, svg}) check_nonempty(p);
  m.add_output(csv, "importance_csv");
  m.add_output(json, "importance_json");
  m.add_output(mod, "modularity");
  m.add_output(comp, "completeness");
  m.add_output(rep, "report");
  m.add_output(svg, "survival_svg");
  m.write();
  check_json(m.path());

  const auto mc = report.mean_completeness();
  const auto mm = report.mean_modularity();
  out << "mean completeness " << (mc ? io::format_number(*mc) : "n/a") << ", mean modularity "
      << (mm ? io::format_number(*mm) : "n/a") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string config, out_dir;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const fs::path dir = a.out_dir;
  Manifest m("sweep", dir / "manifest.json");
  const ExperimentConfig cfg = experiment_from_json(read_json_file(a.config));
  m.add_input(a.config, "config");

  std::set<std::pair<std::size_t, std::size_t>> cells;
  for (const auto& c : cfg.sweep.grid) {
    if (!cells.emplace(c.dim_d, c.effective_k()).second) {
      throw ConfigError("grid lists D=" + std::to_string(c.dim_d) + ", k=" + std::to_string(c.effective_k()) +
                        " twice");
    }
  }

  EmbeddingSet train_set, dev_set;
  if (cfg.data.synth) {
    const SynthData data = generate_synthetic(*cfg.data.synth);
    const std::size_t n = data.embeddings.size();
    const auto n_dev = static_cast<std::size_t>(std::llround(cfg.data.dev_fraction * static_cast<double>(n)));
    if (n_dev == 0 || n_dev == n) throw ConfigError("data.dev_fraction leaves an empty split");
    train_set = slice(data.embeddings, 0, n - n_dev);
    dev_set = slice(data.embeddings, n - n_dev, n);
    m.add_seed(cfg.data.synth->seed);
  } else {
    train_set = load_labeled_set(cfg.data.train_embeddings, cfg.data.train_labels, m, "train");
    dev_set = load_labeled_set(cfg.data.dev_embeddings, cfg.data.dev_labels, m, "dev");
  }
  for (auto s : cfg.sweep.seeds) m.add_seed(s);
  m.set_config(to_json(cfg));

  const SweepResult result = run_sweep(make_labeled(train_set), make_labeled(dev_set), cfg.sweep);

  for (const auto& run : result.runs) {
    const std::string tag = cell_tag(run.cell.dim_d, run.cell.effective_k()) + "_seed" + std::to_string(run.seed);
    const fs::path ckpt = dir / "checkpoints" / (tag + ".spm");
    const fs::path hist = dir / "history" / (tag + ".csv");
    save_checkpoint(run.record.best_model, {run.seed, run.record.best_epoch, m.reference_from(ckpt)}, ckpt);
    write_train_record_csv(run.record, hist);
    expect(load_checkpoint(ckpt) == round_to_float(run.record.best_model), ckpt, "checkpoint does not read back");
    check_nonempty(hist);
    m.add_output(ckpt, "checkpoint");
    m.add_output(hist, "history");
  }

  std::vector<SurvivalSeries> series;
  for (std::size_t c = 0; c < cfg.sweep.grid.size(); ++c) {
    const auto& cell = cfg.sweep.grid[c];
    const auto& avg = result.averaged_disentanglement[c];
    const fs::path p = dir / "disentanglement" / (cell_tag(cell.dim_d, cell.effective_k()) + ".json");
    write_report_json(avg, p, m.reference_from(p));
    check_json(p);
    m.add_output(p, "disentanglement");
    series.push_back({cell_label(cell.dim_d, cell.effective_k(), !cell.k.has_value()), avg.survival});
  }

  const fs::path csv = dir / "report.csv", json = dir / "report.json", table = dir / "completeness_table.csv",
                 svg = dir / "survival.svg";
  write_report_csv(result.report, csv);
  write_report_json(result.report, json, m.reference_from(json));
  write_completeness_table_csv(result.report, table);
  io::write_file(svg, survival_svg(series));
  check_json(json);
  for (const auto& p : {csv, table, svg}) check_nonempty(p);
  m.add_output(csv, "report_csv");
  m.add_output(json, "report_json");
  m.add_output(table, "completeness_table");
  m.add_output(svg, "survival_svg");
  m.write();
  check_json(m.path());

  for (const auto& row : result.report.averaged) {
    out << cell_label(row.dim_d, row.k, row.dim_d == row.k) << ": EER " << row.eer << ", minDCF " << row.min_dcf
        << ", mean completeness "
        << (row.mean_completeness ? io::format_number(*row.mean_completeness) : std::string("n/a")) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ErrorInfo {
  const char* type;
  int code;
};

ErrorInfo classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return {"ConfigError", kExitUsage};
  if (dynamic_cast<const ShapeError*>(&e)) return {"ShapeError", kExitData};
  if (dynamic_cast<const FormatError*>(&e)) return {"FormatError", kExitData};
  if (dynamic_cast<const DataError*>(&e)) return {"DataError", kExitData};
  if (dynamic_cast<const NumericError*>(&e)) return {"NumericError", kExitNumeric};
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return {"ConfigError", kExitUsage};
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return {"IOError", kExitData};
  return {"Error", kExitFailure};
}

int report_error(std::ostream& err, const std::string& command, const std::string& type, const std::string& message,
                 int code) {
  const Json j{{"error", {{"command", command}, {"type", type}, {"message", message}}}, {"exit_code", code}};
  err << j.dump() << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse-latent spoofing classifiers and disentanglement metrics", "sparsedet"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a planted-factor synthetic dataset");
  SynthArgs synth_args;
  Flags<SynthConfig> synth_flags(synth);
  synth->add_option("--config", synth_args.config, "JSON synth config (flags override it)");
  synth_flags.add("--n-samples", [](SynthConfig& c) -> auto& { return c.n_samples; }, "number of samples");
  synth_flags.add("--dim-e", [](SynthConfig& c) -> auto& { return c.dim_e; }, "embedding width E");
  synth_flags.add("--n-attacks", [](SynthConfig& c) -> auto& { return c.n_attacks; }, "number of attacks");
  synth_flags.add("--bonafide-fraction", [](SynthConfig& c) -> auto& { return c.bonafide_fraction; },
                  "probability of the bonafide factor");
  synth_flags.add("--factor-strength", [](SynthConfig& c) -> auto& { return c.factor_strength; },
                  "mean shift along each planted direction");
  synth_flags.add("--noise-sigma", [](SynthConfig& c) -> auto& { return c.noise_sigma; },
                  "Gaussian noise standard deviation");
  synth_flags.add("--seed", [](SynthConfig& c) -> auto& { return c.seed; }, "random seed");
  synth_flags.add_choice("--basis", [](SynthConfig& c) -> auto& { return c.basis; },
                         std::vector<std::pair<std::string, PlantedBasis>>{
                             {"random_orthonormal", PlantedBasis::random_orthonormal},
                             {"standard", PlantedBasis::standard}},
                         "planted directions");
  synth->add_option("--dev-fraction", synth_args.dev_fraction, "fraction of trailing samples written as dev split")
      ->capture_default_str();
  synth->add_option("--out-embeddings", synth_args.out_embeddings, "embedding file (.csv or binary)")->required();
  synth->add_option("--out-labels", synth_args.out_labels, "label CSV")->required();
  synth->add_option("--out-dev-embeddings", synth_args.out_dev_embeddings, "dev embedding file");
  synth->add_option("--out-dev-labels", synth_args.out_dev_labels, "dev label CSV");
  synth->add_option("--manifest", synth_args.manifest, "manifest path [default: <out-embeddings>.manifest.json]");

  // train
  auto* trn = app.add_subcommand("train", "train one classifier head and keep its best dev epoch");
  TrainArgs train_args;
  Flags<TrainConfig> train_flags(trn);
  trn->add_option("--config", train_args.config, "JSON train config (flags override it)");
  trn->add_option("--train-embeddings", train_args.train_embeddings, "training embeddings")->required();
  trn->add_option("--train-labels", train_args.train_labels, "training labels (if not embedded)");
  trn->add_option("--dev-embeddings", train_args.dev_embeddings, "development embeddings")->required();
  trn->add_option("--dev-labels", train_args.dev_labels, "development labels (if not embedded)");
  trn->add_option("--dim-d", train_args.dim_d, "latent width D")->capture_default_str();
  auto* k_opt = trn->add_option("--k", train_args.k, "TopK sparsity [default: D, the dense baseline]");
  auto* seed_opt = trn->add_option("--seed", train_args.seed, "initialization and shuffling seed")
                       ->capture_default_str();
  add_train_flags(train_flags);
  trn->add_option("--out-checkpoint", train_args.out_checkpoint, "best-epoch checkpoint")->required();
  trn->add_option("--out-history", train_args.out_history, "per-epoch CSV [default: <checkpoint>.history.csv]");
  trn->add_option("--manifest", train_args.manifest, "manifest path [default: <checkpoint>.manifest.json]");

  // score
  auto* scr = app.add_subcommand("score", "score embeddings with a checkpoint (bonafide log-probability)");
  ScoreArgs score_args;
  scr->add_option("--checkpoint", score_args.checkpoint, "model checkpoint")->required();
  scr->add_option("--embeddings", score_args.embeddings, "embeddings to score")->required();
  scr->add_option("--labels", score_args.labels, "labels (if not embedded)");
  scr->add_option("--out-scores", score_args.out_scores, "score CSV")->required();
  scr->add_option("--manifest", score_args.manifest, "manifest path [default: <out-scores>.manifest.json]");

  // metrics
  auto* met = app.add_subcommand("metrics", "EER, minDCF and per-attack EER of a score file");
  MetricsArgs metrics_args;
  Flags<DcfParams> dcf_flags(met);
  met->add_option("--scores", metrics_args.scores, "score CSV")->required();
  dcf_flags.add("--c-miss", [](DcfParams& d) -> auto& { return d.c_miss; }, "cost of a missed bonafide");
  dcf_flags.add("--c-fa", [](DcfParams& d) -> auto& { return d.c_fa; }, "cost of an accepted spoof");
  dcf_flags.add("--p-target", [](DcfParams& d) -> auto& { return d.p_target; }, "bonafide prior");
  met->add_option("--retain-threshold", metrics_args.retain_threshold, "attacks with EER above this are excluded")
      ->capture_default_str();
  met->add_option("--out-json", metrics_args.out_json, "metrics JSON")->required();
  met->add_option("--out-csv", metrics_args.out_csv, "metrics CSV");
  met->add_option("--manifest", metrics_args.manifest, "manifest path [default: <out-json>.manifest.json]");

  // disentangle
  auto* dis = app.add_subcommand("disentangle", "nMI importance matrix, completeness, modularity, survival curve");
  DisentangleArgs dis_args;
  Flags<BinningSpec> bin_flags(dis);
  dis->add_option("--checkpoint", dis_args.checkpoint, "model whose latents are analyzed");
  dis->add_option("--embeddings", dis_args.embeddings, "embeddings fed through the checkpoint");
  dis->add_option("--latents", dis_args.latents, "precomputed latent matrix (instead of a checkpoint)");
  dis->add_option("--labels", dis_args.labels, "labels (if not embedded)");
  dis->add_option("--latent", dis_args.latent, "latents before or after TopK")
      ->capture_default_str()
      ->check(CLI::IsMember({"pre", "post"}));
  dis->add_option("--factors", dis_args.factors, "factors to include [default: all observed]")->delimiter(',');
  dis->add_option("--retained-from", dis_args.retained_from, "metrics JSON whose retained attacks are used");
  add_binning_flags(bin_flags);
  dis->add_option("--out-dir", dis_args.out_dir, "output directory")->required();
  dis->add_option("--manifest", dis_args.manifest, "manifest path [default: <out-dir>/manifest.json]");

  // sweep
  auto* swp = app.add_subcommand("sweep", "train a (D, k) grid over several seeds and tabulate the metrics");
  SweepArgs sweep_args;
  swp->add_option("--config", sweep_args.config, "JSON experiment config")->required();
  swp->add_option("--out-dir", sweep_args.out_dir, "output directory")->required();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  std::string command = "sparsedet";
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    if (!subs.empty()) command = subs.front()->get_name();
    return report_error(err, command, "UsageError", e.what(), kExitUsage);
  }

  command = app.get_subcommands().front()->get_name();
  try {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif
    if (command == "synth") return cmd_synth(synth_args, synth_flags, out);
    if (command == "train") return cmd_train(train_args, train_flags, k_opt->count() > 0, seed_opt->count() > 0, out);
    if (command == "score") return cmd_score(score_args, out);
    if (command == "metrics") return cmd_metrics(metrics_args, dcf_flags, out);
    if (command == "disentangle") return cmd_disentangle(dis_args, bin_flags, out);
    return cmd_sweep(sweep_args, out);
  } catch (const std::exception& e) {
    const auto [type, code] = classify(e);
    return report_error(err, command, type, e.what(), code);
  }
}

}  // namespace sparsedet::cli

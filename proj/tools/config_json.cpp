#include "config_json.hpp"

#include <fstream>
#include <set>

#include "sparsedet/errors.hpp"

namespace sparsedet::cli {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.contains(key)) throw ConfigError(std::string("unknown key '") + key + "' in " + what);
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

std::string_view basis_name(PlantedBasis b) {
  return b == PlantedBasis::standard ? "standard" : "random_orthonormal";
}

}  // namespace

Json to_json(const SynthConfig& c) {
  return Json{{"n_samples", c.n_samples},       {"dim_e", c.dim_e},
              {"n_attacks", c.n_attacks},       {"bonafide_fraction", c.bonafide_fraction},
              {"factor_strength", c.factor_strength}, {"noise_sigma", c.noise_sigma},
              {"seed", c.seed},                 {"basis", basis_name(c.basis)}};
}

SynthConfig synth_from_json(const Json& j, SynthConfig c) {
  check_keys(j, {"n_samples", "dim_e", "n_attacks", "bonafide_fraction", "factor_strength", "noise_sigma", "seed",
                 "basis"},
             "synth config");
  read(j, "n_samples", c.n_samples);
  read(j, "dim_e", c.dim_e);
  read(j, "n_attacks", c.n_attacks);
  read(j, "bonafide_fraction", c.bonafide_fraction);
  read(j, "factor_strength", c.factor_strength);
  read(j, "noise_sigma", c.noise_sigma);
  read(j, "seed", c.seed);
  if (j.contains("basis")) {
    const auto b = j.at("basis").get<std::string>();
    if (b == "standard") {
      c.basis = PlantedBasis::standard;
    } else if (b == "random_orthonormal") {
      c.basis = PlantedBasis::random_orthonormal;
    } else {
      throw ConfigError("unknown basis '" + b + "'");
    }
  }
  return c;
}

Json to_json(const DcfParams& d) { return Json{{"c_miss", d.c_miss}, {"c_fa", d.c_fa}, {"p_target", d.p_target}}; }

DcfParams dcf_from_json(const Json& j, DcfParams d) {
  check_keys(j, {"c_miss", "c_fa", "p_target"}, "dcf");
  read(j, "c_miss", d.c_miss);
  read(j, "c_fa", d.c_fa);
  read(j, "p_target", d.p_target);
  return d;
}

Json to_json(const TrainConfig& c) {
  Json opt{{"kind", c.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd"}};
  if (c.optimizer.kind == OptimizerKind::adam) {
    opt["beta1"] = c.optimizer.beta1;
    opt["beta2"] = c.optimizer.beta2;
    opt["epsilon"] = c.optimizer.epsilon;
  }
  return Json{{"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"optimizer", opt},
              {"bonafide_weight", c.bonafide_weight ? Json(*c.bonafide_weight) : Json()},
              {"dcf", to_json(c.dcf)}};
}

namespace {

void read_train_fields(const Json& j, TrainConfig& c) {
  read(j, "learning_rate", c.learning_rate);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, {"kind", "beta1", "beta2", "epsilon"}, "optimizer");
    std::string kind = c.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd";
    read(o, "kind", kind);
    if (kind == "adam") {
      c.optimizer.kind = OptimizerKind::adam;
    } else if (kind == "sgd") {
      c.optimizer.kind = OptimizerKind::sgd;
    } else {
      throw ConfigError("unknown optimizer '" + kind + "'");
    }
    read(o, "beta1", c.optimizer.beta1);
    read(o, "beta2", c.optimizer.beta2);
    read(o, "epsilon", c.optimizer.epsilon);
  }
  if (j.contains("bonafide_weight")) {
    const auto& w = j.at("bonafide_weight");
    if (w.is_null()) {
      c.bonafide_weight.reset();
    } else {
      c.bonafide_weight = w.get<double>();
    }
  }
  if (j.contains("dcf")) c.dcf = dcf_from_json(j.at("dcf"), c.dcf);
}

}  // namespace

TrainConfig train_from_json(const Json& j, TrainConfig c) {
  check_keys(j, {"learning_rate", "epochs", "batch_size", "seed", "optimizer", "bonafide_weight", "dcf"},
             "train config");
  read_train_fields(j, c);
  return c;
}

Json to_json(const BinningSpec& b) {
  return Json{{"strategy", to_string(b.strategy)}, {"n_bins", b.n_bins}, {"zero_bin", b.zero_bin}};
}

BinningSpec binning_from_json(const Json& j, BinningSpec b) {
  check_keys(j, {"strategy", "n_bins", "zero_bin"}, "binning");
  if (j.contains("strategy")) b.strategy = parse_bin_strategy(j.at("strategy").get<std::string>());
  read(j, "n_bins", b.n_bins);
  read(j, "zero_bin", b.zero_bin);
  return b;
}

Json to_json(const ExperimentConfig& c) {
  Json j = to_json(c.sweep.train);
  j.erase("seed");
  auto& grid = j["grid"] = Json::array();
  for (const auto& cell : c.sweep.grid) grid.push_back({{"D", cell.dim_d}, {"k", cell.k ? Json(*cell.k) : Json()}});
  j["seeds"] = c.sweep.seeds;
  j["binning"] = to_json(c.sweep.binning);
  j["latent_source"] = to_string(c.sweep.latent_source);
  j["factors"] = c.sweep.factors;
  j["survival_probe"] = c.sweep.survival_probe;
  j["split"] = c.sweep.split;
  Json data;
  if (c.data.synth) {
    data["synth"] = to_json(*c.data.synth);
    data["dev_fraction"] = c.data.dev_fraction;
  } else {
    data["train_embeddings"] = c.data.train_embeddings;
    data["train_labels"] = c.data.train_labels;
    data["dev_embeddings"] = c.data.dev_embeddings;
    data["dev_labels"] = c.data.dev_labels;
  }
  j["data"] = data;
  return j;
}

ExperimentConfig experiment_from_json(const Json& j) {
  check_keys(j,
             {"learning_rate", "epochs", "batch_size", "optimizer", "bonafide_weight", "dcf", "grid", "seeds",
              "binning", "latent_source", "factors", "survival_probe", "split", "data"},
             "experiment config");
  ExperimentConfig c;
  read_train_fields(j, c.sweep.train);
  if (!j.contains("grid")) throw ConfigError("experiment config needs a grid");
  for (const auto& cell : j.at("grid")) {
    check_keys(cell, {"D", "k"}, "grid cell");
    GridCell g;
    g.dim_d = cell.at("D").get<std::size_t>();
    if (cell.contains("k") && !cell.at("k").is_null()) g.k = cell.at("k").get<std::size_t>();
    c.sweep.grid.push_back(g);
  }
  if (!j.contains("seeds")) throw ConfigError("experiment config needs a seed list");
  read(j, "seeds", c.sweep.seeds);
  if (j.contains("binning")) c.sweep.binning = binning_from_json(j.at("binning"));
  if (j.contains("latent_source")) c.sweep.latent_source = parse_latent_source(j.at("latent_source").get<std::string>());
  read(j, "factors", c.sweep.factors);
  read(j, "survival_probe", c.sweep.survival_probe);
  read(j, "split", c.sweep.split);

  if (!j.contains("data")) throw ConfigError("experiment config needs a data section");
  const auto& d = j.at("data");
  check_keys(d, {"synth", "dev_fraction", "train_embeddings", "train_labels", "dev_embeddings", "dev_labels"},
             "data");
  if (d.contains("synth")) {
    c.data.synth = synth_from_json(d.at("synth"));
    read(d, "dev_fraction", c.data.dev_fraction);
    if (!(c.data.dev_fraction > 0.0 && c.data.dev_fraction < 1.0)) {
      throw ConfigError("data.dev_fraction must lie in (0, 1)");
    }
  } else {
    read(d, "train_embeddings", c.data.train_embeddings);
    read(d, "train_labels", c.data.train_labels);
    read(d, "dev_embeddings", c.data.dev_embeddings);
    read(d, "dev_labels", c.data.dev_labels);
    if (c.data.train_embeddings.empty() || c.data.dev_embeddings.empty()) {
      throw ConfigError("data needs either synth or train_embeddings/dev_embeddings");
    }
  }
  c.sweep.validate();
  return c;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path + ": " + ex.what());
  }
}

}  // namespace sparsedet::cli

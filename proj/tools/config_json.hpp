#pragma once

// JSON (de)serialization of the run configurations accepted by the CLI.
// Missing keys keep their defaults; unknown keys are rejected so typos do not
// silently fall back to a default.

#include <json.hpp>

#include "sparsedet/data.hpp"
#include "sparsedet/train.hpp"

namespace sparsedet::cli {

using Json = nlohmann::ordered_json;

Json to_json(const SynthConfig& c);
SynthConfig synth_from_json(const Json& j, SynthConfig base = {});

Json to_json(const TrainConfig& c);
TrainConfig train_from_json(const Json& j, TrainConfig base = {});

Json to_json(const BinningSpec& b);
BinningSpec binning_from_json(const Json& j, BinningSpec base = {});

Json to_json(const DcfParams& d);
DcfParams dcf_from_json(const Json& j, DcfParams base = {});

// Where a sweep gets its data: a synthetic config split by dev_fraction, or
// explicit train/dev files.
struct SweepData {
  std::optional<SynthConfig> synth;
  double dev_fraction = 0.5;
  std::string train_embeddings, train_labels, dev_embeddings, dev_labels;
};

struct ExperimentConfig {
  SweepConfig sweep;
  SweepData data;
};

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const Json& j);

Json read_json_file(const std::string& path);

}  // namespace sparsedet::cli

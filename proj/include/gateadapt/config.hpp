#pragma once

#include <string>
#include <vector>

#include "gateadapt/dataset.hpp"
#include "gateadapt/eval.hpp"
#include "gateadapt/nn.hpp"
#include "gateadapt/train.hpp"

namespace gateadapt {

// One frame address for the overlay command.
struct OverlayFrameRef {
  std::string split = "real_test";  // sim_train/sim_val/real_train/real_val/real_test
  int seq = 0;
  int frame = 0;
};

// Paths to artifacts produced by earlier pipeline stages.
struct IoConfig {
  std::string dataset_dir;  // directory written by `generate`
  std::string checkpoint;   // model checkpoint consumed by the command
  std::string stream_a;     // optional pre-trained stream A for the DA baseline
};

// A full experiment: one JSON document with sections mirroring the module
// configs. Every field has a default; a `{}` config is a valid desk-scale
// experiment. Unknown keys are rejected.
struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;  // desk-scale by default
  TrainConfig pretrain = TrainConfig::desk_pretrain();
  TrainConfig finetune = TrainConfig::desk_finetune();
  PairSamplerConfig sampler;
  DaConfig da;
  CalibrationPolicy calibration;
  std::vector<int> ablation_counts = {1, 10, 20, 40};
  std::vector<OverlayFrameRef> overlay_frames;
  IoConfig io;
};

// Strict parse of the experiment JSON: malformed documents, unknown keys and
// wrong value types raise ConfigInvalid naming the offending key and the line
// it appears on. The returned config has been validated by every module.
ExperimentConfig parse_experiment_config(const std::string& json_text);

// Reads and parses a config file. IoError if unreadable.
ExperimentConfig load_experiment_config(const std::string& path);

// The fully-resolved config (defaults materialized, presets expanded) as
// deterministic JSON: sorted keys, two-space indent, trailing newline. Run
// directories store this for provenance.
std::string experiment_config_json(const ExperimentConfig& cfg);

}  // namespace gateadapt

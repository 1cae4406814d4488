#pragma once

#include <string>
#include <vector>

#include "spft/data.hpp"
#include "spft/decode.hpp"
#include "spft/model.hpp"

namespace spft {

struct TrainDefaults {
  int64_t pretrain_steps = 1200;
  int64_t asr_steps = 2400;
  int64_t finetune_steps = 800;
  int64_t softprompt_steps = 2000;
  int64_t extlm_steps = 1500;
  int64_t pretrain_batch = 16;
  int64_t asr_batch = 12;
  int64_t finetune_batch = 16;
  int64_t softprompt_batch = 16;
  int64_t extlm_batch = 16;
  double base_lr = 3e-3;       // pretraining, ASR training, external LM
  double finetune_lr = 3e-4;   // 10x lower, limits source-domain forgetting
  double softprompt_lr = 2e-2;
  double clip_norm = 1.0;
};

struct DecodeDefaults {
  int beam = 8;
  double lm_weight = 0.3;  // tuned on the synthetic dev split
  int64_t max_len = 80;
  double length_alpha = 0.0;
  std::vector<double> lambda_grid = {0.0, 0.1, 0.2, 0.3, 0.5};
};

// One versioned JSON document holding every experiment knob, so runs are
// diffable. Defaults are embedded here; `gen-data --print-config` dumps them.
struct LabConfig {
  int version = 1;
  DataConfig data;
  ModelConfig model;
  TrainDefaults train;
  DecodeDefaults decode;
  int64_t bootstrap_samples = 1000;
  int64_t bootstrap_reps = 1000;
  double significance = 0.05;

  std::string to_json() const;
  static LabConfig from_json(const std::string& text, const std::string& origin);
  static LabConfig load(const std::string& path);
};

}  // namespace spft

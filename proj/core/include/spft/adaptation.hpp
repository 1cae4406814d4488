#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spft/data.hpp"
#include "spft/model.hpp"

namespace spft {

enum class PromptMode { Audio, None, Empty, UpsampleMask, Soft };

std::string prompt_mode_name(PromptMode mode);
PromptMode prompt_mode_from_name(const std::string& name);

struct TrainConfig {
  int64_t steps = 1000;
  int64_t batch_size = 8;
  double lr = 3e-3;
  uint64_t seed = 0;
  double clip_norm = 1.0;
  PromptMode prompt_mode = PromptMode::None;
  int64_t prompt_len = 0;         // d, soft mode only
  bool zero_init_prompt = false;  // soft prompt init: zeros instead of audio mean
  bool mask_with_zeros = false;   // upsample-mask: zero rows instead of MASK embedding
};

struct StrategyReport {
  std::string strategy;
  std::vector<double> loss_curve;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
  std::string frozen_digest_before;
  std::string frozen_digest_after;

  double initial_loss() const { return loss_curve.empty() ? 0.0 : loss_curve.front(); }
  double final_loss() const { return loss_curve.empty() ? 0.0 : loss_curve.back(); }
  // mean of the first/last `window` entries
  double smoothed_initial(int64_t window = 50) const;
  double smoothed_final(int64_t window = 50) const;
  std::string to_json(bool include_wall = false) const;
};

// Base ASR training: audio prompt, all of encoder/embedding/decoder
// trainable. Also records the mean audio embedding used to seed soft prompts.
StrategyReport train_asr(ModelBundle& bundle, const Corpus& paired, const TrainConfig& config);

// Decoder-LM fine-tuning on text before ASR training (no prompt).
StrategyReport pre_finetune(ModelBundle& bundle, const Corpus& text, const TrainConfig& config);

// Source-text LM pretraining used to initialize the decoder before ASR
// training. Mechanically pre_finetune with its own strategy label.
StrategyReport pretrain_lm(ModelBundle& bundle, const Corpus& text, const TrainConfig& config);

// Decoder+embedding fine-tuning on text after ASR training, with the prompt
// handling selected by config.prompt_mode (None/Empty/UpsampleMask/Soft).
// Soft mode requires a trained prompt whose values stay frozen.
StrategyReport post_finetune(ModelBundle& bundle, const Corpus& text, const TrainConfig& config,
                             const SoftPrompt* soft = nullptr);

// Two-step part one: trains S on the text corpus with every bundle
// parameter frozen. Initialization: audio-embedding mean + jitter, or zeros.
struct SoftPromptTraining {
  SoftPrompt prompt;
  StrategyReport report;
};
SoftPromptTraining train_soft_prompt(ModelBundle& bundle, const Corpus& text,
                                     const std::string& domain, int64_t prompt_len,
                                     const TrainConfig& config);

// Upsamples each token embedding 1-2x, then replaces exactly
// round(0.5 * L_up) positions with the MASK embedding (or zeros).
Tensor make_upsample_mask(const std::vector<int>& tokens, const ParameterStore& params,
                          const std::string& embed_name, uint64_t seed, bool mask_with_zeros = false);

// External LM training on target text.
StrategyReport train_external_lm(ExternalLM& lm, const Corpus& text, const TrainConfig& config);

// exp(total CE / total target positions) under the given prompt mode (None).
double text_perplexity(const ModelBundle& bundle, const Corpus& text);

}  // namespace spft

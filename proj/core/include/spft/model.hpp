#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spft/ops.hpp"
#include "spft/optim.hpp"
#include "spft/tokenizer.hpp"

namespace spft {

// Dense row-major acoustic feature block, T_frames x F_a.
struct FrameMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> values;

  double* row(int64_t r) { return values.data() + r * cols; }
  const double* row(int64_t r) const { return values.data() + r * cols; }
};

struct ModelConfig {
  int64_t vocab = 0;       // filled from the tokenizer
  int64_t embed_dim = 64;  // e
  int64_t dec_layers = 4;
  int64_t dec_heads = 4;
  int64_t ff_mult = 4;
  int64_t enc_layers = 2;
  int64_t enc_heads = 4;
  int64_t frame_dim = 16;  // F_a
  int64_t stack = 2;       // frames per stacked step (k)
};

// Wiring of one causal LM inside a ParameterStore.
struct LmSpec {
  std::string embed_name;    // [V, width] table
  std::string stack_prefix;  // "<prefix>layer{i}." blocks + "<prefix>final_norm.g"
  std::string output_name;   // [width, V] head
  int64_t width = 0;
  int64_t vocab = 0;
  int n_layers = 0;
  int n_heads = 0;
  int64_t ff_mult = 4;
};

struct DecoderForward {
  Tensor logits;  // [P + T + 1, V]: prompt rows, then BOS and the T tokens
  Tensor loss;    // scalar mean CE over the T+1 text targets (tokens + EOS)
  int64_t target_positions = 0;
};

// Audio encoder + text embedding + decoder in one parameter store, under the
// name prefixes "encoder.", "embedding." and "decoder.". "meta.*" entries are
// permanently frozen bookkeeping (architecture echo, audio embedding mean).
class ModelBundle {
 public:
  ModelBundle() = default;
  static ModelBundle init(const ModelConfig& config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  LmSpec decoder_spec() const;

  // Selects the trainable groups among {"encoder.", "embedding.",
  // "decoder."}; everything else (meta included) is frozen.
  void set_trainable_groups(bool encoder, bool embedding, bool decoder);

  ModelBundle clone() const;

  // Mean audio embedding over source utterances, written by ASR training and
  // used to seed soft prompts.
  std::vector<double> audio_embed_mean() const;
  void set_audio_embed_mean(const std::vector<double>& mean);

  ModelConfig config_;
  Tokenizer tokenizer_;
  ParameterStore params_;
};

// Stacks frames k at a time (zero-padding the tail group), projects into the
// embedding space and runs the bidirectional encoder layers. Output T_a x e
// with T_a = ceil(T_frames / k).
Tensor encode_audio(const ModelBundle& bundle, const FrameMatrix& frames);

// Runs the decoder over [prompt; BOS + tokens] and scores the text targets
// (tokens then EOS). Prompt positions are excluded from the loss mask.
DecoderForward decoder_forward(const ModelBundle& bundle, const std::optional<Tensor>& prompt,
                               const std::vector<int>& tokens);

// Domain-scoped trainable prompt, d x e.
class SoftPrompt {
 public:
  SoftPrompt() = default;
  SoftPrompt(std::string domain, Tensor values);

  const std::string& domain() const { return domain_; }
  int64_t length() const { return values_.defined() ? values_.dim(0) : 0; }
  std::string name() const;  // "softprompt.<domain>.d<length>"

  // Instrumented accessor: decoding must never call this.
  const Tensor& values() const;
  Tensor& mutable_values() { return values_; }

  static uint64_t read_count();
  static void reset_read_count();

 private:
  std::string domain_;
  Tensor values_;
};

// Standalone autoregressive LM over the same vocabulary (shallow fusion).
class ExternalLM {
 public:
  ExternalLM() = default;
  static ExternalLM init(int64_t vocab, uint64_t seed, int64_t width = 32, int n_layers = 2,
                         int n_heads = 4);

  LmSpec spec() const;
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  int64_t width() const { return width_; }
  int64_t vocab() const { return vocab_; }
  int n_layers() const { return n_layers_; }
  int n_heads() const { return n_heads_; }

  // Mean CE over tokens + EOS given a BOS start; the training objective.
  Tensor sequence_loss(const std::vector<int>& tokens) const;

  // log P(candidate | prefix) with the BOS convention above.
  double score(const std::vector<int>& prefix, int candidate) const;

  ParameterStore params_;
  int64_t width_ = 32;
  int64_t vocab_ = 0;
  int n_layers_ = 2;
  int n_heads_ = 4;
};

// Generic causal-LM plumbing shared by the decoder and the external LM.
void init_transformer_params(ParameterStore& params, const std::string& prefix, int n_layers,
                             int64_t width, int64_t ff_mult, uint64_t seed);
Tensor transformer_stack(const ParameterStore& params, const std::string& prefix, int n_layers,
                         int n_heads, Tensor x, bool causal);
Tensor lm_logits(const ParameterStore& params, const LmSpec& spec, const Tensor& input_rows);
DecoderForward causal_lm_forward(const ParameterStore& params, const LmSpec& spec,
                                 const std::optional<Tensor>& prompt, const std::vector<int>& tokens);

}  // namespace spft

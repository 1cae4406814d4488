#pragma once

#include <vector>

#include "spft/model.hpp"

namespace spft {

// Incremental causal-LM evaluator with per-layer K/V caches. Value-only and
// read-only on the parameters, so sessions can run on many threads at once;
// copying a session forks its state (used for beam hypotheses).
//
// Kept numerically in lock-step with the tape-based forward: feeding the
// same rows must reproduce lm_logits() at the last position to ~1e-9.
class CausalLMSession {
 public:
  CausalLMSession(const ParameterStore& params, const LmSpec& spec);

  void feed_embedding(const double* row);       // one position, spec.width values
  void feed_prompt(const Tensor& rows);         // [P, width]
  void feed_token(int id);                      // embeds then feeds
  void feed_bos() { feed_token(Tokenizer::kBos); }

  int64_t length() const { return length_; }
  const std::vector<double>& last_logits() const { return logits_; }
  std::vector<double> last_log_probs() const;   // log-softmax over the vocab

 private:
  const ParameterStore* params_;
  LmSpec spec_;
  int64_t length_ = 0;
  // per layer, length_ * width values appended per step
  std::vector<std::vector<double>> k_cache_;
  std::vector<std::vector<double>> v_cache_;
  std::vector<double> logits_;
  // step scratch, allocated once
  std::vector<double> x_, h_, q_, attn_, proj_, ff_, scores_;

  struct LayerWeights {
    const double* norm_attn;
    const double* wq;
    const double* wk;
    const double* wv;
    const double* wo;
    const double* norm_ff;
    const double* w1;
    const double* w2;
  };
  std::vector<LayerWeights> layers_;
  const double* final_norm_;
  const double* embed_;
  const double* output_;
};

// Beam-synchronous variant: all live hypotheses advance together so each
// weight matrix is streamed once per step instead of once per beam. Lane
// histories follow hypothesis ancestry via cache gathering on advance().
class BeamBatchSession {
 public:
  BeamBatchSession(const ParameterStore& params, const LmSpec& spec, int max_lanes);

  // Causal prefill appended to lane 0 (prompt rows, then BOS via prime_token).
  void prime(const double* rows, int64_t n_rows);
  void prime_token(int id);

  int active_lanes() const { return active_; }
  int64_t length() const { return length_; }
  const double* lane_logits(int lane) const;
  void lane_log_probs(int lane, std::vector<double>& out) const;

  // next[i] = {parent lane, token id}; lane i of the new beam continues
  // parent's history with that token.
  void advance(const std::vector<std::pair<int, int>>& next);

 private:
  struct LayerWeights {
    const double* norm_attn;
    const double* wq;
    const double* wk;
    const double* wv;
    const double* wo;
    const double* norm_ff;
    const double* w1;
    const double* w2;
  };

  void forward_rows(int64_t rows, bool causal_prefill);

  const ParameterStore* params_;
  LmSpec spec_;
  int max_lanes_;
  int active_ = 0;
  int64_t length_ = 0;

  std::vector<LayerWeights> layers_;
  const double* final_norm_;
  const double* embed_;
  const double* output_;

  // per layer, per lane: contiguous [t, e]
  std::vector<std::vector<std::vector<double>>> k_cache_;
  std::vector<std::vector<std::vector<double>>> v_cache_;
  std::vector<double> logits_;  // [lanes, vocab]
  // batched scratch ([rows, e] / [rows, ff])
  std::vector<double> x_, h_, q_, k_, v_, attn_, proj_, ff_, scores_;
  std::vector<int> row_lane_;  // lane owning each scratch row
};

}  // namespace spft

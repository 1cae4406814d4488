#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spft/data.hpp"
#include "spft/model.hpp"

namespace spft {

struct DecodeHypothesis {
  std::vector<int> tokens;   // emitted ids; ends with EOS iff finished
  double asr_logprob = 0.0;  // sum of per-step decoder log-probs
  double lm_logprob = 0.0;   // sum of per-step external-LM log-probs
  bool finished = false;
};

struct FusionConfig {
  double lm_weight = 0.0;     // lambda; > 0 requires an external LM
  int beam = 8;               // B
  int64_t max_len = 96;       // emitted-token cap
  double length_alpha = 0.0;  // final ranking by score / len^alpha
};

struct DecodeResult {
  std::string text;  // detokenized top-1
  std::vector<DecodeHypothesis> nbest;
};

// out[v] = asr[v] + lambda * lm[v]
std::vector<double> fuse_step_scores(const std::vector<double>& asr_logprobs,
                                     const std::vector<double>& lm_logprobs, double lambda);

// Beam search over a causal LM conditioned on arbitrary prompt rows.
// Candidates are restricted to allowed_tokens (EOS must be among them).
DecodeResult beam_search_prompt(const ParameterStore& asr_params, const LmSpec& asr_spec,
                                const Tensor& prompt_rows, const FusionConfig& fusion,
                                const ExternalLM* lm, const std::vector<int>& allowed_tokens);

// Audio decoding: the prompt is the encoded audio; soft prompts play no part.
DecodeResult beam_search(const ModelBundle& bundle, const FrameMatrix& frames,
                         const FusionConfig& fusion, const ExternalLM* lm = nullptr);

// One decoded utterance next to its reference, as written to decode files.
struct DecodeRecord {
  std::string ref;
  std::string hyp;
  std::vector<std::string> ref_entities;
  std::vector<DecodeHypothesis> nbest_raw;
  std::vector<std::string> nbest_text;
};

std::vector<DecodeRecord> decode_corpus(const ModelBundle& bundle, const Corpus& corpus,
                                        const FusionConfig& fusion, const ExternalLM* lm = nullptr,
                                        int threads = 1);

void write_decodes_jsonl(const std::string& path, const std::vector<DecodeRecord>& records);
std::vector<DecodeRecord> read_decodes_jsonl(const std::string& path);

}  // namespace spft

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spft {

struct EditCounts {
  int64_t sub = 0;
  int64_t ins = 0;
  int64_t del = 0;
  int64_t ref_words = 0;
  int64_t distance() const { return sub + ins + del; }
};

std::vector<std::string> split_words(const std::string& text);

// Minimum word edit distance with an optimal sub/ins/del breakdown.
EditCounts word_edit_counts(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct WerResult {
  double rate = 0.0;
  EditCounts counts;
};

// (S+I+D) / N_ref. Empty reference is an error.
WerResult wer(const std::string& reference, const std::string& hypothesis);

// One scored utterance; the unit the bootstrap resamples.
struct EvalRecord {
  std::string ref;
  std::string hyp;
  std::vector<std::string> ref_entities;
  EditCounts words;
  int64_t entities_total = 0;
  int64_t entities_missed = 0;
};

EvalRecord score_utterance(const std::string& ref, const std::string& hyp,
                           const std::vector<std::string>& ref_entities);

// An entity counts as recognized iff its surface appears as a contiguous,
// case-normalized word subsequence of the hypothesis.
bool entity_hit(const std::string& entity, const std::vector<std::string>& hyp_words);

double corpus_wer(const std::vector<EvalRecord>& records);
double corpus_eer(const std::vector<EvalRecord>& records);  // error if no entities

enum class ErrorLevel { Word, Entity };

enum class BootstrapMode {
  Auto,        // enumerate when |records|^n fits in the rep budget, else Monte Carlo
  MonteCarlo,
  Exhaustive,
};

struct BootstrapConfig {
  int64_t sample_size = 1000;  // n, drawn with replacement
  int64_t repetitions = 1000;  // R
  double significance = 0.05;
  uint64_t seed = 0;
  ErrorLevel level = ErrorLevel::Entity;
  BootstrapMode mode = BootstrapMode::Auto;
};

// Paired bootstrap test: p = fraction of resamples where err(A) - err(B) >= 0
// (one-sided; "A better" shows up as negative differences). A and B must be
// scored on the same utterance list.
double bootstrap_p_value(const std::vector<EvalRecord>& a, const std::vector<EvalRecord>& b,
                         const BootstrapConfig& config);

}  // namespace spft

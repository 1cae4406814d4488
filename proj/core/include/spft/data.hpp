#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spft/model.hpp"

namespace spft {

struct EntitySpan {
  int64_t start = 0;  // [start, end) character span
  int64_t end = 0;
  std::string surface;
};

struct Utterance {
  std::string text;
  std::optional<FrameMatrix> frames;  // present iff the split is paired
  std::vector<EntitySpan> entities;
  std::string domain;
};

struct Corpus {
  std::vector<Utterance> items;
  bool paired() const;
  size_t size() const { return items.size(); }
};

struct DataConfig {
  uint64_t seed = 7041;
  int64_t source_train = 2000;
  int64_t source_test = 200;
  int64_t target_text = 1000;  // per target domain
  int64_t target_test = 200;
  int64_t target_dev = 100;
  int64_t unseen_test = 100;   // contrast split with fresh entities
  double noise_sigma = 0.3;
  int64_t max_dup = 3;
  double test_entity_overlap = 1.0;  // fraction of test entities shared with text-only train
  int64_t lexicon_size = 48;         // entities per domain
  int64_t frame_dim = 16;
};

struct DomainData {
  std::string domain;
  Corpus text_only;    // frames absent
  Corpus test;         // paired
  Corpus dev;          // paired, for fusion-weight tuning
  Corpus unseen_test;  // paired, entities outside the text-only lexicon
  std::vector<std::string> train_entities;
  std::vector<std::string> test_entities;
};

struct DataSet {
  DataConfig config;
  Corpus source_train;
  Corpus source_test;
  std::vector<DomainData> targets;  // music-like, chatbot-like

  const DomainData& target(const std::string& domain) const;
};

// Per-character acoustic signatures, drawn once from a project-fixed seed
// (independent of any corpus seed).
class AcousticSignatureTable {
 public:
  explicit AcousticSignatureTable(int64_t frame_dim);
  const std::vector<double>& signature(char c) const;
  int64_t frame_dim() const { return frame_dim_; }

 private:
  int64_t frame_dim_;
  std::map<char, std::vector<double>> table_;
};

const AcousticSignatureTable& signature_table(int64_t frame_dim);

// Each character emits its signature u ~ U[1, max_dup] times plus iid
// Gaussian noise of scale noise_sigma.
FrameMatrix synth_audio(const std::string& text, uint64_t seed, double noise_sigma,
                        int64_t max_dup, int64_t frame_dim);

DataSet gen_corpora(const DataConfig& config);

// KL divergence of character-bigram distributions, add-one smoothed.
double char_bigram_kl(const Corpus& a, const Corpus& b);

// JSON-lines corpus files: {"text", "frames"?, "entities", "domain"}.
void write_corpus_jsonl(const std::string& path, const Corpus& corpus);
Corpus read_corpus_jsonl(const std::string& path);

}  // namespace spft

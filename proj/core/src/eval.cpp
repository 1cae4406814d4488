#include "spft/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "spft/error.hpp"
#include "spft/rng.hpp"

namespace spft {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

EditCounts word_edit_counts(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  size_t n = ref.size(), m = hyp.size();
  // cost[i][j]: distance between ref[:i] and hyp[:j]
  std::vector<int64_t> cost((n + 1) * (m + 1));
  auto at = [m](size_t i, size_t j) { return i * (m + 1) + j; };
  for (size_t i = 0; i <= n; ++i) cost[at(i, 0)] = static_cast<int64_t>(i);
  for (size_t j = 0; j <= m; ++j) cost[at(0, j)] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      int64_t sub = cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int64_t del = cost[at(i - 1, j)] + 1;  // ref word dropped by hyp
      int64_t ins = cost[at(i, j - 1)] + 1;  // extra hyp word
      cost[at(i, j)] = std::min({sub, del, ins});
    }
  }

  EditCounts counts;
  counts.ref_words = static_cast<int64_t>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[at(i, j)] == cost[at(i - 1, j - 1)] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.sub;
      --i;
      --j;
    } else if (i > 0 && cost[at(i, j)] == cost[at(i - 1, j)] + 1) {
      ++counts.del;
      --i;
    } else {
      ++counts.ins;
      --j;
    }
  }
  return counts;
}

WerResult wer(const std::string& reference, const std::string& hypothesis) {
  auto ref = split_words(reference);
  if (ref.empty()) throw_data("wer: empty reference");
  auto hyp = split_words(hypothesis);
  WerResult r;
  r.counts = word_edit_counts(ref, hyp);
  r.rate = static_cast<double>(r.counts.distance()) / static_cast<double>(ref.size());
  return r;
}

bool entity_hit(const std::string& entity, const std::vector<std::string>& hyp_words) {
  auto ent = split_words(entity);
  if (ent.empty()) return true;
  if (ent.size() > hyp_words.size()) return false;
  for (size_t i = 0; i + ent.size() <= hyp_words.size(); ++i) {
    bool all = true;
    for (size_t j = 0; j < ent.size(); ++j) {
      if (hyp_words[i + j] != ent[j]) {
        all = false;
        break;
      }
    }
    if (all) return true;
  }
  return false;
}

EvalRecord score_utterance(const std::string& ref, const std::string& hyp,
                           const std::vector<std::string>& ref_entities) {
  EvalRecord rec;
  rec.ref = ref;
  rec.hyp = hyp;
  rec.ref_entities = ref_entities;
  auto ref_words = split_words(ref);
  if (ref_words.empty()) throw_data("score_utterance: empty reference");
  auto hyp_words = split_words(hyp);
  rec.words = word_edit_counts(ref_words, hyp_words);
  rec.entities_total = static_cast<int64_t>(ref_entities.size());
  for (const auto& e : ref_entities) {
    if (!entity_hit(e, hyp_words)) ++rec.entities_missed;
  }
  return rec;
}

double corpus_wer(const std::vector<EvalRecord>& records) {
  int64_t edits = 0, words = 0;
  for (const auto& r : records) {
    edits += r.words.distance();
    words += r.words.ref_words;
  }
  if (words == 0) throw_data("corpus_wer: no reference words");
  return static_cast<double>(edits) / static_cast<double>(words);
}

double corpus_eer(const std::vector<EvalRecord>& records) {
  int64_t total = 0, missed = 0;
  for (const auto& r : records) {
    total += r.entities_total;
    missed += r.entities_missed;
  }
  if (total == 0) throw_data("corpus_eer: corpus has no annotated entities");
  return static_cast<double>(missed) / static_cast<double>(total);
}

namespace {

int64_t record_errors(const EvalRecord& r, ErrorLevel level) {
  return level == ErrorLevel::Word ? r.words.distance() : r.entities_missed;
}

}  // namespace

double bootstrap_p_value(const std::vector<EvalRecord>& a, const std::vector<EvalRecord>& b,
                         const BootstrapConfig& config) {
  if (a.size() != b.size()) throw_data("bootstrap: record lists differ in length");
  if (a.empty()) throw_data("bootstrap: empty record lists");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].ref != b[i].ref) {
      throw_data("bootstrap: systems not paired; reference mismatch at index " + std::to_string(i));
    }
  }
  if (config.sample_size < 1 || config.repetitions < 1) {
    throw_config("bootstrap: sample size and repetitions must be >= 1");
  }

  size_t count = a.size();
  // Paired resamples share the denominator, so the sign of the error-rate
  // difference equals the sign of the raw error-count difference.
  std::vector<int64_t> diff(count);
  for (size_t i = 0; i < count; ++i) {
    diff[i] = record_errors(a[i], config.level) - record_errors(b[i], config.level);
  }

  BootstrapMode mode = config.mode;
  if (mode == BootstrapMode::Auto) {
    double space = std::pow(static_cast<double>(count), static_cast<double>(config.sample_size));
    mode = (space <= static_cast<double>(config.repetitions)) ? BootstrapMode::Exhaustive
                                                              : BootstrapMode::MonteCarlo;
  }

  if (mode == BootstrapMode::Exhaustive) {
    double space = std::pow(static_cast<double>(count), static_cast<double>(config.sample_size));
    if (space > 2e7) throw_config("bootstrap: resample space too large to enumerate");
    int64_t total = static_cast<int64_t>(std::llround(space));
    int64_t hits = 0;
    std::vector<size_t> idx(static_cast<size_t>(config.sample_size), 0);
    for (int64_t it = 0; it < total; ++it) {
      int64_t d = 0;
      for (size_t k = 0; k < idx.size(); ++k) d += diff[idx[k]];
      if (d >= 0) ++hits;
      // odometer increment
      for (size_t k = 0; k < idx.size(); ++k) {
        if (++idx[k] < count) break;
        idx[k] = 0;
      }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  }

  Rng rng(mix_seed(config.seed, 0xb007));
  int64_t hits = 0;
  for (int64_t rep = 0; rep < config.repetitions; ++rep) {
    int64_t d = 0;
    for (int64_t s = 0; s < config.sample_size; ++s) {
      d += diff[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(count) - 1))];
    }
    if (d >= 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(config.repetitions);
}

}  // namespace spft

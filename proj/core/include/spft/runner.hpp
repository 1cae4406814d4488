#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spft/config.hpp"
#include "spft/eval.hpp"

namespace spft {

// Grid definition for `run-paper`: which seeds, which prompt lengths, and the
// shared lab configuration.
struct ExperimentPlan {
  std::vector<uint64_t> seeds = {11, 22, 33};
  std::vector<int64_t> prompt_lens = {30, 50};
  int workers = 0;  // 0: one per hardware thread, capped by seed count
  bool save_checkpoints = false;
  LabConfig lab;

  std::string to_json() const;
  static ExperimentPlan from_json(const std::string& text, const std::string& origin);
  static ExperimentPlan load(const std::string& path);
};

struct GridRow {
  uint64_t seed;
  std::string domain;
  std::string strategy;  // base, post_none, post_empty, post_upmask, post_soft30, post_soft50
  double wer = 0.0;
  double eer = 0.0;
};

struct FusionRow {
  uint64_t seed;
  std::string domain;
  std::string strategy;  // base_lm, soft30_lm
  double lambda = 0.0;
  double wer = 0.0;
  double eer = 0.0;
};

struct Table2Row {  // pre- vs post-fine-tune timing comparison, music target
  uint64_t seed;
  std::string strategy;  // base, pre, post
  double wer = 0.0;
  double eer = 0.0;
};

struct ForgettingRow {
  uint64_t seed;
  std::string domain;    // domain the model was adapted to ("-" for base)
  std::string strategy;
  double source_wer = 0.0;
};

struct SignificanceRow {
  std::string pair;    // soft30_vs_base, soft30_vs_none
  std::string domain;  // music, chatbot, pooled
  std::string level;   // word, entity
  double p = 0.0;
};

struct PaperReport {
  std::vector<GridRow> grid;
  std::vector<FusionRow> fusion;
  std::vector<Table2Row> table2;
  std::vector<ForgettingRow> forgetting;
  std::vector<SignificanceRow> significance;

  double mean_grid(const std::string& domain, const std::string& strategy, bool eer) const;
  double mean_fusion(const std::string& domain, const std::string& strategy, bool eer) const;

  std::string to_json(const ExperimentPlan& plan) const;
  std::string to_markdown(const ExperimentPlan& plan) const;
  std::string to_csv() const;
  std::string significance_csv() const;
  static PaperReport from_json(const std::string& text, const std::string& origin);
};

// Executes the whole comparison grid and writes report.json/report.md/
// report.csv/bootstrap.csv under out_dir (plus decodes/ and logs/; logs carry
// wall-clock data and are not byte-reproducible).
PaperReport run_paper(const ExperimentPlan& plan, const std::string& out_dir);

std::vector<EvalRecord> records_from_decodes(const std::vector<struct DecodeRecord>& decodes);

}  // namespace spft

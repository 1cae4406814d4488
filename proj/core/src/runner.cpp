#include "spft/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "nlohmann/json.hpp"
#include "spft/adaptation.hpp"
#include "spft/checkpoint.hpp"
#include "spft/decode.hpp"
#include "spft/io.hpp"
#include "spft/rng.hpp"

namespace spft {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

struct SeedOutputs {
  uint64_t seed = 0;
  std::vector<GridRow> grid;
  std::vector<FusionRow> fusion;
  std::vector<Table2Row> table2;
  std::vector<ForgettingRow> forgetting;
  // "<domain>/<strategy>" -> scored target-test records (for significance)
  std::map<std::string, std::vector<EvalRecord>> records;
  std::map<std::string, double> cell_seconds;
};

// Runs one stage's tasks on up to `workers` threads and waits for all of
// them. Exceptions propagate after the barrier.
void run_stage(std::vector<std::function<void()>>& tasks, int workers) {
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks.size());
  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      try {
        tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  int n = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int w = 0; w < n; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  tasks.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

TrainConfig make_cfg(int64_t steps, int64_t batch, double lr, double clip, uint64_t seed,
                     PromptMode mode) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = batch;
  cfg.lr = lr;
  cfg.clip_norm = clip;
  cfg.seed = seed;
  cfg.prompt_mode = mode;
  return cfg;
}

class CellTimer {
 public:
  CellTimer(SeedOutputs& out, std::string name) : out_(out), name_(std::move(name)), start_(Clock::now()) {}
  ~CellTimer() {
    out_.cell_seconds[name_] = std::chrono::duration<double>(Clock::now() - start_).count();
  }

 private:
  SeedOutputs& out_;
  std::string name_;
  Clock::time_point start_;
};

struct SeedContext {
  const ExperimentPlan& plan;
  std::string out_dir;
};

// Per-(seed, domain) results, merged into SeedOutputs in a fixed order after
// the parallel stage joins.
struct DomainOutputs {
  std::vector<GridRow> grid;
  std::vector<FusionRow> fusion;
  std::vector<ForgettingRow> forgetting;
  std::map<std::string, std::vector<EvalRecord>> records;
  std::map<std::string, double> cell_seconds;
};

struct SeedState {
  uint64_t seed = 0;
  DataSet ds;
  Corpus source_text;
  ModelBundle lm_init;
  ModelBundle base;
  ModelBundle pre_model;
  SeedOutputs out;
  std::vector<EvalRecord> pre_records;
  std::map<std::string, DomainOutputs> domains;
};

std::vector<EvalRecord> score_decodes(const std::vector<DecodeRecord>& decodes) {
  std::vector<EvalRecord> out;
  out.reserve(decodes.size());
  for (const auto& d : decodes) out.push_back(score_utterance(d.ref, d.hyp, d.ref_entities));
  return out;
}

// Decodes a corpus, persists the decode file, and returns scored records.
std::vector<EvalRecord> decode_and_score(const ModelBundle& model, const Corpus& corpus,
                                         const FusionConfig& fusion, const ExternalLM* lm,
                                         const std::string& path) {
  auto decodes = decode_corpus(model, corpus, fusion, lm);
  if (!path.empty()) write_decodes_jsonl(path, decodes);
  return score_decodes(decodes);
}

double tune_lambda(const ModelBundle& model, const Corpus& dev, const ExternalLM& lm,
                   const DecodeDefaults& dd) {
  double best_lambda = 0.0;
  double best_eer = 2.0;
  for (double lambda : dd.lambda_grid) {
    FusionConfig fc{lambda, dd.beam, dd.max_len, dd.length_alpha};
    auto records = decode_and_score(model, dev, fc, lambda > 0.0 ? &lm : nullptr, "");
    double eer = corpus_eer(records);
    if (eer < best_eer) {
      best_eer = eer;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

// Stage 0: data synthesis plus source-text pretraining of the decoder LM.
void seed_stage_prepare(const SeedContext& ctx, SeedState& st) {
  const LabConfig& lab = ctx.plan.lab;
  {
    CellTimer t(st.out, "gen_data");
    DataConfig dc = lab.data;
    dc.seed = st.seed;
    st.ds = gen_corpora(dc);
  }
  for (const auto& u : st.ds.source_train.items) {
    Utterance copy;
    copy.text = u.text;
    copy.domain = u.domain;
    st.source_text.items.push_back(std::move(copy));
  }
  st.lm_init = ModelBundle::init(lab.model, st.seed);
  CellTimer t(st.out, "pretrain_lm");
  pretrain_lm(st.lm_init, st.source_text,
              make_cfg(lab.train.pretrain_steps, lab.train.pretrain_batch, lab.train.base_lr,
                       lab.train.clip_norm, mix_seed(st.seed, 0x11), PromptMode::None));
}

// Stage 1a: base ASR training plus its source-test decode.
void seed_stage_base(const SeedContext& ctx, SeedState& st) {
  const LabConfig& lab = ctx.plan.lab;
  const TrainDefaults& tr = lab.train;
  std::string decode_dir = ctx.out_dir + "/decodes/seed_" + std::to_string(st.seed);
  st.base = st.lm_init.clone();
  {
    CellTimer t(st.out, "train_asr_base");
    train_asr(st.base, st.ds.source_train,
              make_cfg(tr.asr_steps, tr.asr_batch, tr.base_lr, tr.clip_norm,
                       mix_seed(st.seed, 0x22), PromptMode::Audio));
  }
  if (ctx.plan.save_checkpoints) {
    save_bundle(ctx.out_dir + "/checkpoints/seed_" + std::to_string(st.seed) + "/base.spft", st.base);
  }
  CellTimer t(st.out, "decode_source_base");
  FusionConfig plain{0.0, lab.decode.beam, lab.decode.max_len, lab.decode.length_alpha};
  auto records = decode_and_score(st.base, st.ds.source_test, plain, nullptr,
                                  decode_dir + "/source_base.jsonl");
  st.out.forgetting.push_back({st.seed, "-", "base", corpus_wer(records)});
}

// Stage 1b: the pre-fine-tune pipeline (target text first, ASR after).
void seed_stage_pre(const SeedContext& ctx, SeedState& st) {
  const TrainDefaults& tr = ctx.plan.lab.train;
  CellTimer t(st.out, "pre_pipeline");
  st.pre_model = st.lm_init.clone();
  pre_finetune(st.pre_model, st.ds.target("music").text_only,
               make_cfg(tr.finetune_steps, tr.finetune_batch, tr.finetune_lr, tr.clip_norm,
                        mix_seed(st.seed, 0x33), PromptMode::None));
  train_asr(st.pre_model, st.ds.source_train,
            make_cfg(tr.asr_steps, tr.asr_batch, tr.base_lr, tr.clip_norm,
                     mix_seed(st.seed, 0x22), PromptMode::Audio));
}

// Stage 2 (per target domain): every post strategy, the external LM, and all
// decodes this domain contributes.
void seed_stage_domain(const SeedContext& ctx, SeedState& st, const std::string& domain) {
  const LabConfig& lab = ctx.plan.lab;
  const TrainDefaults& tr = lab.train;
  const DecodeDefaults& dd = lab.decode;
  FusionConfig plain{0.0, dd.beam, dd.max_len, dd.length_alpha};
  std::string decode_dir = ctx.out_dir + "/decodes/seed_" + std::to_string(st.seed);
  std::string ckpt_dir = ctx.out_dir + "/checkpoints/seed_" + std::to_string(st.seed);

  const DomainData& domain_data = st.ds.target(domain);
  const Corpus& text = domain_data.text_only;
  uint64_t dseed = mix_seed(st.seed, std::hash<std::string>{}(domain));
  DomainOutputs& out = st.domains[domain];

  SeedOutputs timing_sink;  // local; merged via out.cell_seconds
  auto time_cell = [&](const std::string& name) { return CellTimer(timing_sink, name); };

  struct Adapted {
    std::string strategy;
    ModelBundle model;
  };
  std::vector<Adapted> adapted;

  auto run_post = [&](const std::string& strategy, PromptMode mode, uint64_t salt) {
    auto t = time_cell(domain + "/" + strategy);
    ModelBundle m = st.base.clone();
    post_finetune(m, text, make_cfg(tr.finetune_steps, tr.finetune_batch, tr.finetune_lr,
                                    tr.clip_norm, mix_seed(dseed, salt), mode));
    adapted.push_back({strategy, std::move(m)});
  };
  run_post("post_none", PromptMode::None, 1);
  run_post("post_empty", PromptMode::Empty, 2);
  run_post("post_upmask", PromptMode::UpsampleMask, 3);

  for (int64_t d : ctx.plan.prompt_lens) {
    auto t = time_cell(domain + "/post_soft" + std::to_string(d));
    auto sp = train_soft_prompt(st.base, text, domain, d,
                                make_cfg(tr.softprompt_steps, tr.softprompt_batch, tr.softprompt_lr,
                                         tr.clip_norm, mix_seed(dseed, 4 + static_cast<uint64_t>(d)),
                                         PromptMode::Soft));
    if (ctx.plan.save_checkpoints) {
      save_softprompt(ckpt_dir + "/" + sp.prompt.name() + ".spft", sp.prompt);
    }
    ModelBundle m = st.base.clone();
    TrainConfig cfg = make_cfg(tr.finetune_steps, tr.finetune_batch, tr.finetune_lr, tr.clip_norm,
                               mix_seed(dseed, 1), PromptMode::Soft);
    cfg.prompt_len = d;
    post_finetune(m, text, cfg, &sp.prompt);
    adapted.push_back({"post_soft" + std::to_string(d), std::move(m)});
  }

  ExternalLM extlm = ExternalLM::init(st.base.tokenizer().vocab_size(), dseed);
  {
    auto t = time_cell(domain + "/extlm");
    train_external_lm(extlm, text, make_cfg(tr.extlm_steps, tr.extlm_batch, tr.base_lr,
                                            tr.clip_norm, mix_seed(dseed, 7), PromptMode::None));
  }

  {
    auto t = time_cell(domain + "/decode_grid");
    auto base_records = decode_and_score(st.base, domain_data.test, plain, nullptr,
                                         decode_dir + "/" + domain + "_base.jsonl");
    out.grid.push_back({st.seed, domain, "base", corpus_wer(base_records), corpus_eer(base_records)});
    out.records[domain + "/base"] = std::move(base_records);
    for (const auto& a : adapted) {
      auto records = decode_and_score(a.model, domain_data.test, plain, nullptr,
                                      decode_dir + "/" + domain + "_" + a.strategy + ".jsonl");
      out.grid.push_back({st.seed, domain, a.strategy, corpus_wer(records), corpus_eer(records)});
      out.records[domain + "/" + a.strategy] = std::move(records);
    }
  }

  {
    auto t = time_cell(domain + "/fusion");
    const ModelBundle& soft_model =
        std::find_if(adapted.begin(), adapted.end(),
                     [](const Adapted& a) { return a.strategy == "post_soft30"; })
            ->model;
    double lambda_base = tune_lambda(st.base, domain_data.dev, extlm, dd);
    FusionConfig fc_base{lambda_base, dd.beam, dd.max_len, dd.length_alpha};
    auto rec = decode_and_score(st.base, domain_data.test, fc_base,
                                lambda_base > 0.0 ? &extlm : nullptr,
                                decode_dir + "/" + domain + "_base_lm.jsonl");
    out.fusion.push_back({st.seed, domain, "base_lm", lambda_base, corpus_wer(rec), corpus_eer(rec)});

    double lambda_soft = tune_lambda(soft_model, domain_data.dev, extlm, dd);
    FusionConfig fc_soft{lambda_soft, dd.beam, dd.max_len, dd.length_alpha};
    rec = decode_and_score(soft_model, domain_data.test, fc_soft,
                           lambda_soft > 0.0 ? &extlm : nullptr,
                           decode_dir + "/" + domain + "_soft30_lm.jsonl");
    out.fusion.push_back({st.seed, domain, "soft30_lm", lambda_soft, corpus_wer(rec), corpus_eer(rec)});
    out.records[domain + "/soft30_lm"] = std::move(rec);
  }

  {
    auto t = time_cell(domain + "/decode_source");
    for (const auto& a : adapted) {
      auto records = decode_and_score(a.model, st.ds.source_test, plain, nullptr,
                                      decode_dir + "/source_" + domain + "_" + a.strategy + ".jsonl");
      out.forgetting.push_back({st.seed, domain, a.strategy, corpus_wer(records)});
    }
  }
  out.cell_seconds = std::move(timing_sink.cell_seconds);
}

// Stage 2c: pre-model decode for the timing comparison.
void seed_stage_pre_decode(const SeedContext& ctx, SeedState& st) {
  const DecodeDefaults& dd = ctx.plan.lab.decode;
  FusionConfig plain{0.0, dd.beam, dd.max_len, dd.length_alpha};
  CellTimer t(st.out, "decode_music_pre");
  st.pre_records = decode_and_score(st.pre_model, st.ds.target("music").test, plain, nullptr,
                                    ctx.out_dir + "/decodes/seed_" + std::to_string(st.seed) +
                                        "/music_pre.jsonl");
}

// Deterministic merge of the per-domain outputs plus the timing rows.
void seed_finalize(SeedState& st) {
  for (const std::string domain : {"music", "chatbot"}) {
    DomainOutputs& d = st.domains.at(domain);
    st.out.grid.insert(st.out.grid.end(), d.grid.begin(), d.grid.end());
    st.out.fusion.insert(st.out.fusion.end(), d.fusion.begin(), d.fusion.end());
    st.out.forgetting.insert(st.out.forgetting.end(), d.forgetting.begin(), d.forgetting.end());
    for (auto& [key, records] : d.records) st.out.records[key] = std::move(records);
    for (const auto& [name, secs] : d.cell_seconds) st.out.cell_seconds[name] = secs;
  }
  auto find_row = [&](const std::string& strategy) -> const GridRow& {
    for (const auto& r : st.out.grid) {
      if (r.domain == "music" && r.strategy == strategy) return r;
    }
    throw_contract("run_paper: missing music grid row " + strategy);
  };
  st.out.table2.push_back({st.seed, "base", find_row("base").wer, find_row("base").eer});
  st.out.table2.push_back(
      {st.seed, "pre", corpus_wer(st.pre_records), corpus_eer(st.pre_records)});
  st.out.table2.push_back({st.seed, "post", find_row("post_none").wer, find_row("post_none").eer});
}

void append_mean_table(std::string& md, const PaperReport& report,
                       const std::vector<std::string>& strategies,
                       const std::vector<std::string>& domains) {
  md += "| strategy |";
  for (const auto& d : domains) md += " " + d + " WER | " + d + " EER |";
  md += "\n|---|";
  for (size_t i = 0; i < domains.size() * 2; ++i) md += "---|";
  md += "\n";
  for (const auto& s : strategies) {
    md += "| " + s + " |";
    for (const auto& d : domains) {
      md += " " + fmt4(report.mean_grid(d, s, false)) + " | " + fmt4(report.mean_grid(d, s, true)) + " |";
    }
    md += "\n";
  }
}

}  // namespace

std::string ExperimentPlan::to_json() const {
  ordered_json j;
  j["seeds"] = seeds;
  j["prompt_lens"] = prompt_lens;
  j["workers"] = workers;
  j["save_checkpoints"] = save_checkpoints;
  j["lab"] = ordered_json::parse(lab.to_json());
  return j.dump(2) + "\n";
}

ExperimentPlan ExperimentPlan::from_json(const std::string& text, const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw_config(origin + ": invalid JSON: " + e.what());
  }
  ExperimentPlan plan;
  if (j.contains("seeds")) plan.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  if (j.contains("prompt_lens")) plan.prompt_lens = j.at("prompt_lens").get<std::vector<int64_t>>();
  if (j.contains("workers")) plan.workers = j.at("workers").get<int>();
  if (j.contains("save_checkpoints")) plan.save_checkpoints = j.at("save_checkpoints").get<bool>();
  if (j.contains("lab")) plan.lab = LabConfig::from_json(j.at("lab").dump(), origin + "#lab");
  if (plan.seeds.empty()) throw_config(origin + ": plan needs at least one seed");
  if (std::find(plan.prompt_lens.begin(), plan.prompt_lens.end(), 30) == plan.prompt_lens.end()) {
    throw_config(origin + ": prompt_lens must include 30 (the soft30 comparison rows)");
  }
  return plan;
}

ExperimentPlan ExperimentPlan::load(const std::string& path) {
  return from_json(read_file(path), path);
}

double PaperReport::mean_grid(const std::string& domain, const std::string& strategy, bool eer) const {
  double s = 0.0;
  int64_t n = 0;
  for (const auto& r : grid) {
    if (r.domain == domain && r.strategy == strategy) {
      s += eer ? r.eer : r.wer;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

double PaperReport::mean_fusion(const std::string& domain, const std::string& strategy, bool eer) const {
  double s = 0.0;
  int64_t n = 0;
  for (const auto& r : fusion) {
    if (r.domain == domain && r.strategy == strategy) {
      s += eer ? r.eer : r.wer;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

std::string PaperReport::to_json(const ExperimentPlan& plan) const {
  ordered_json j;
  j["version"] = 1;
  j["plan"] = ordered_json::parse(plan.to_json());
  ordered_json grid_rows = ordered_json::array();
  for (const auto& r : grid) {
    grid_rows.push_back({{"seed", r.seed}, {"domain", r.domain}, {"strategy", r.strategy},
                         {"split", "test"}, {"wer", r.wer}, {"eer", r.eer}});
  }
  j["grid"] = std::move(grid_rows);
  ordered_json fusion_rows = ordered_json::array();
  for (const auto& r : fusion) {
    fusion_rows.push_back({{"seed", r.seed}, {"domain", r.domain}, {"strategy", r.strategy},
                           {"lambda", r.lambda}, {"wer", r.wer}, {"eer", r.eer}});
  }
  j["fusion"] = std::move(fusion_rows);
  ordered_json t2 = ordered_json::array();
  for (const auto& r : table2) {
    t2.push_back({{"seed", r.seed}, {"strategy", r.strategy}, {"wer", r.wer}, {"eer", r.eer}});
  }
  j["pre_vs_post"] = std::move(t2);
  ordered_json forget = ordered_json::array();
  for (const auto& r : forgetting) {
    forget.push_back({{"seed", r.seed}, {"domain", r.domain}, {"strategy", r.strategy},
                      {"source_wer", r.source_wer}});
  }
  j["forgetting"] = std::move(forget);
  ordered_json sig = ordered_json::array();
  for (const auto& r : significance) {
    sig.push_back({{"pair", r.pair}, {"domain", r.domain}, {"level", r.level}, {"p", r.p}});
  }
  j["significance"] = std::move(sig);
  return j.dump(2) + "\n";
}

PaperReport PaperReport::from_json(const std::string& text, const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw_data(origin + ": invalid report JSON: " + e.what());
  }
  PaperReport rep;
  for (const auto& r : j.value("grid", ordered_json::array())) {
    rep.grid.push_back({r.at("seed").get<uint64_t>(), r.at("domain").get<std::string>(),
                        r.at("strategy").get<std::string>(), r.at("wer").get<double>(),
                        r.at("eer").get<double>()});
  }
  for (const auto& r : j.value("fusion", ordered_json::array())) {
    rep.fusion.push_back({r.at("seed").get<uint64_t>(), r.at("domain").get<std::string>(),
                          r.at("strategy").get<std::string>(), r.at("lambda").get<double>(),
                          r.at("wer").get<double>(), r.at("eer").get<double>()});
  }
  for (const auto& r : j.value("pre_vs_post", ordered_json::array())) {
    rep.table2.push_back({r.at("seed").get<uint64_t>(), r.at("strategy").get<std::string>(),
                          r.at("wer").get<double>(), r.at("eer").get<double>()});
  }
  for (const auto& r : j.value("forgetting", ordered_json::array())) {
    rep.forgetting.push_back({r.at("seed").get<uint64_t>(), r.at("domain").get<std::string>(),
                              r.at("strategy").get<std::string>(), r.at("source_wer").get<double>()});
  }
  for (const auto& r : j.value("significance", ordered_json::array())) {
    rep.significance.push_back({r.at("pair").get<std::string>(), r.at("domain").get<std::string>(),
                                r.at("level").get<std::string>(), r.at("p").get<double>()});
  }
  return rep;
}

std::string PaperReport::to_markdown(const ExperimentPlan& plan) const {
  std::string md;
  md += "# Adaptation comparison grid\n\n";
  md += "Means across seeds {";
  for (size_t i = 0; i < plan.seeds.size(); ++i) {
    if (i) md += ", ";
    md += std::to_string(plan.seeds[i]);
  }
  md += "}; per-seed rows in report.csv.\n\n";
  std::vector<std::string> strategies = {"base", "post_none", "post_empty", "post_upmask"};
  for (int64_t d : plan.prompt_lens) strategies.push_back("post_soft" + std::to_string(d));
  append_mean_table(md, *this, strategies, {"music", "chatbot"});

  md += "\n# External LM fusion\n\n";
  md += "| strategy | music WER | music EER | chatbot WER | chatbot EER |\n|---|---|---|---|---|\n";
  for (const std::string& s : {std::string("base_lm"), std::string("soft30_lm")}) {
    md += "| " + s + " | " + fmt4(mean_fusion("music", s, false)) + " | " +
          fmt4(mean_fusion("music", s, true)) + " | " + fmt4(mean_fusion("chatbot", s, false)) +
          " | " + fmt4(mean_fusion("chatbot", s, true)) + " |\n";
  }

  md += "\n# Pre vs post fine-tuning (music)\n\n| seed | strategy | WER | EER |\n|---|---|---|---|\n";
  for (const auto& r : table2) {
    md += "| " + std::to_string(r.seed) + " | " + r.strategy + " | " + fmt4(r.wer) + " | " +
          fmt4(r.eer) + " |\n";
  }

  md += "\n# Source-domain forgetting (WER on source test)\n\n| seed | domain | strategy | WER |\n|---|---|---|---|\n";
  for (const auto& r : forgetting) {
    md += "| " + std::to_string(r.seed) + " | " + r.domain + " | " + r.strategy + " | " +
          fmt4(r.source_wer) + " |\n";
  }

  md += "\n# Bootstrap significance (p-values)\n\n| pair | domain | word | entity |\n|---|---|---|---|\n";
  for (const std::string& pair : {std::string("soft30_vs_base"), std::string("soft30_vs_none")}) {
    for (const std::string& domain : {std::string("music"), std::string("chatbot"), std::string("pooled")}) {
      double pw = -1.0, pe = -1.0;
      for (const auto& r : significance) {
        if (r.pair == pair && r.domain == domain) {
          (r.level == "word" ? pw : pe) = r.p;
        }
      }
      md += "| " + pair + " | " + domain + " | " + fmt4(pw) + " | " + fmt4(pe) + " |\n";
    }
  }
  return md;
}

std::string PaperReport::to_csv() const {
  std::string csv = "seed,domain,strategy,split,lambda,wer,eer\n";
  for (const auto& r : grid) {
    csv += std::to_string(r.seed) + "," + r.domain + "," + r.strategy + ",test,," + fmt4(r.wer) +
           "," + fmt4(r.eer) + "\n";
  }
  for (const auto& r : fusion) {
    csv += std::to_string(r.seed) + "," + r.domain + "," + r.strategy + ",test," + fmt4(r.lambda) +
           "," + fmt4(r.wer) + "," + fmt4(r.eer) + "\n";
  }
  for (const auto& r : table2) {
    csv += std::to_string(r.seed) + ",music," + r.strategy + ",timing,," + fmt4(r.wer) + "," +
           fmt4(r.eer) + "\n";
  }
  for (const auto& r : forgetting) {
    csv += std::to_string(r.seed) + "," + r.domain + "," + r.strategy + ",source_test,," +
           fmt4(r.source_wer) + ",\n";
  }
  return csv;
}

std::string PaperReport::significance_csv() const {
  std::string csv = "pair,domain,level,p\n";
  for (const auto& r : significance) {
    csv += r.pair + "," + r.domain + "," + r.level + "," + fmt4(r.p) + "\n";
  }
  return csv;
}

std::vector<EvalRecord> records_from_decodes(const std::vector<DecodeRecord>& decodes) {
  return score_decodes(decodes);
}

PaperReport run_paper(const ExperimentPlan& plan, const std::string& out_dir) {
  fs::create_directories(out_dir);
  SeedContext ctx{plan, out_dir};

  int workers = plan.workers > 0 ? plan.workers
                                 : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(plan.seeds.size())));

  std::vector<SeedOutputs> outputs(plan.seeds.size());
  {
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= plan.seeds.size()) break;
        outputs[i] = run_seed(ctx, plan.seeds[i]);
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  PaperReport report;
  for (const auto& o : outputs) {
    report.grid.insert(report.grid.end(), o.grid.begin(), o.grid.end());
    report.fusion.insert(report.fusion.end(), o.fusion.begin(), o.fusion.end());
    report.table2.insert(report.table2.end(), o.table2.begin(), o.table2.end());
    report.forgetting.insert(report.forgetting.end(), o.forgetting.begin(), o.forgetting.end());
  }

  // Table-5 analog: pooled paired bootstrap per domain and over both domains.
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"soft30_vs_base", "base"}, {"soft30_vs_none", "post_none"}};
  for (const auto& [pair_name, baseline] : pairs) {
    std::map<std::string, std::pair<std::vector<EvalRecord>, std::vector<EvalRecord>>> pools;
    for (const auto& o : outputs) {
      for (const std::string domain : {"music", "chatbot"}) {
        auto a_it = o.records.find(domain + "/post_soft30");
        auto b_it = o.records.find(domain + "/" + baseline);
        if (a_it == o.records.end() || b_it == o.records.end()) continue;
        for (const std::string& key : {domain, std::string("pooled")}) {
          auto& [pa, pb] = pools[key];
          pa.insert(pa.end(), a_it->second.begin(), a_it->second.end());
          pb.insert(pb.end(), b_it->second.begin(), b_it->second.end());
        }
      }
    }
    for (const auto& [domain, ab] : pools) {
      for (ErrorLevel level : {ErrorLevel::Word, ErrorLevel::Entity}) {
        BootstrapConfig bc;
        bc.sample_size = plan.lab.bootstrap_samples;
        bc.repetitions = plan.lab.bootstrap_reps;
        bc.significance = plan.lab.significance;
        bc.seed = mix_seed(plan.seeds.front(), std::hash<std::string>{}(pair_name + domain));
        bc.level = level;
        double p = bootstrap_p_value(ab.first, ab.second, bc);
        report.significance.push_back(
            {pair_name, domain, level == ErrorLevel::Word ? "word" : "entity", p});
      }
    }
  }

  atomic_write_file(out_dir + "/report.json", report.to_json(plan));
  atomic_write_file(out_dir + "/report.md", report.to_markdown(plan));
  atomic_write_file(out_dir + "/report.csv", report.to_csv());
  atomic_write_file(out_dir + "/bootstrap.csv", report.significance_csv());

  // Wall-clock log, intentionally outside the byte-reproducible report set.
  ordered_json timing;
  for (const auto& o : outputs) {
    ordered_json cells;
    for (const auto& [name, secs] : o.cell_seconds) cells[name] = secs;
    timing["seed_" + std::to_string(o.seed)] = std::move(cells);
  }
  atomic_write_file(out_dir + "/logs/timing.json", timing.dump(2) + "\n");
  return report;
}

}  // namespace spft

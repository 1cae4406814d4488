// spft: desk-scale lab for text-only domain adaptation of prompt-conditioned
// ASR models. Subcommands cover data synthesis, every training pipeline,
// beam-search decoding with LM fusion, scoring and the full comparison grid.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "spft/adaptation.hpp"
#include "spft/checkpoint.hpp"
#include "spft/config.hpp"
#include "spft/decode.hpp"
#include "spft/eval.hpp"
#include "spft/io.hpp"
#include "spft/rng.hpp"
#include "spft/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace spft;

namespace {

void print_status(ordered_json fields) {
  std::cout << fields.dump() << std::endl;
}

LabConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return LabConfig{};
  return LabConfig::load(path);
}

Corpus load_text_corpus(const std::string& path) {
  Corpus c = read_corpus_jsonl(path);
  if (c.items.empty()) throw_data(path + ": empty corpus");
  return c;
}

TrainConfig train_cfg_from(const LabConfig& lab, int64_t steps, int64_t batch, double lr,
                           uint64_t seed, PromptMode mode) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = batch;
  cfg.lr = lr;
  cfg.clip_norm = lab.train.clip_norm;
  cfg.seed = seed;
  cfg.prompt_mode = mode;
  return cfg;
}

void write_strategy_report(const std::string& out_ckpt, const StrategyReport& report) {
  if (out_ckpt.empty()) return;
  atomic_write_file(out_ckpt + ".report.json", report.to_json());
}

int run_gen_data(const std::string& config_path, uint64_t seed, bool seed_set,
                 const std::string& out_dir, bool print_config) {
  LabConfig lab = load_config_or_default(config_path);
  if (print_config) {
    std::cout << lab.to_json();
    return 0;
  }
  if (out_dir.empty()) throw_config("gen-data: --out is required");
  if (seed_set) lab.data.seed = seed;
  DataSet ds = gen_corpora(lab.data);
  fs::create_directories(out_dir);
  write_corpus_jsonl(out_dir + "/source_train.jsonl", ds.source_train);
  write_corpus_jsonl(out_dir + "/source_test.jsonl", ds.source_test);
  for (const auto& t : ds.targets) {
    write_corpus_jsonl(out_dir + "/" + t.domain + "_text.jsonl", t.text_only);
    write_corpus_jsonl(out_dir + "/" + t.domain + "_test.jsonl", t.test);
    write_corpus_jsonl(out_dir + "/" + t.domain + "_dev.jsonl", t.dev);
    if (!t.unseen_test.items.empty()) {
      write_corpus_jsonl(out_dir + "/" + t.domain + "_unseen.jsonl", t.unseen_test);
    }
  }
  atomic_write_file(out_dir + "/config.json", lab.to_json());
  print_status({{"status", "ok"},
                {"cmd", "gen-data"},
                {"out", out_dir},
                {"seed", lab.data.seed},
                {"source_train", ds.source_train.size()},
                {"targets", ds.targets.size()}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spft: soft-prompt text adaptation lab for prompt-conditioned ASR"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, corpus_path, init_ckpt, base_ckpt, text_path;
  std::string model_ckpt, lm_ckpt, decodes_path, a_path, b_path, plan_path, domain = "music";
  std::string strategy, level = "word";
  uint64_t seed = 0;
  bool seed_set = false, print_config = false;
  int64_t steps = -1, prompt_len = 30;
  int beam = 8;
  double lm_weight = 0.0;
  int64_t boot_n = 1000, boot_reps = 1000;

  auto* gen = app.add_subcommand("gen-data", "synthesize the source/target corpora");
  gen->add_option("--config", config_path, "lab config JSON");
  auto* gen_seed_opt = gen->add_option("--seed", seed, "data seed");
  gen->add_option("--out", out_path, "output directory");
  gen->add_flag("--print-config", print_config, "dump the embedded default config and exit");

  auto* pre = app.add_subcommand("pretrain-lm", "pretrain the decoder LM on source text");
  pre->add_option("--corpus", corpus_path, "text corpus JSONL")->required();
  pre->add_option("--steps", steps, "training steps");
  pre->add_option("--out", out_path, "output checkpoint")->required();
  pre->add_option("--config", config_path, "lab config JSON");
  pre->add_option("--seed", seed, "training seed");

  auto* tasr = app.add_subcommand("train-asr", "train the speech-LLM on paired audio-text data");
  tasr->add_option("--data", data_dir, "corpus directory from gen-data")->required();
  tasr->add_option("--init", init_ckpt, "initial checkpoint (e.g. pretrain-lm output)");
  tasr->add_option("--steps", steps, "training steps");
  tasr->add_option("--out", out_path, "output checkpoint")->required();
  tasr->add_option("--config", config_path, "lab config JSON");
  tasr->add_option("--seed", seed, "training seed");

  auto* adapt = app.add_subcommand("adapt", "text adaptation fine-tuning of a trained model");
  adapt->add_option("--base", base_ckpt, "base model checkpoint")->required();
  adapt->add_option("--text", text_path, "target-domain text JSONL")->required();
  adapt->add_option("--strategy", strategy, "pre|none|empty|upmask|soft")->required();
  adapt->add_option("--prompt-len", prompt_len, "soft prompt length d");
  adapt->add_option("--prompt", lm_ckpt, "soft prompt checkpoint (strategy soft)");
  adapt->add_option("--steps", steps, "training steps");
  adapt->add_option("--out", out_path, "output checkpoint")->required();
  adapt->add_option("--config", config_path, "lab config JSON");
  adapt->add_option("--seed", seed, "training seed");

  auto* tsp = app.add_subcommand("train-softprompt", "train a domain soft prompt on frozen model");
  tsp->add_option("--base", base_ckpt, "base model checkpoint")->required();
  tsp->add_option("--text", text_path, "target-domain text JSONL")->required();
  tsp->add_option("--prompt-len", prompt_len, "prompt length d");
  tsp->add_option("--domain", domain, "domain id");
  tsp->add_option("--steps", steps, "training steps");
  tsp->add_option("--out", out_path, "output checkpoint")->required();
  tsp->add_option("--config", config_path, "lab config JSON");
  tsp->add_option("--seed", seed, "training seed");

  auto* telm = app.add_subcommand("train-extlm", "train the external domain LM on text");
  telm->add_option("--text", text_path, "text corpus JSONL")->required();
  telm->add_option("--steps", steps, "training steps");
  telm->add_option("--out", out_path, "output checkpoint")->required();
  telm->add_option("--config", config_path, "lab config JSON");
  telm->add_option("--seed", seed, "training seed");

  auto* dec = app.add_subcommand("decode", "beam-search decode a paired corpus");
  dec->add_option("--model", model_ckpt, "model checkpoint")->required();
  dec->add_option("--data", corpus_path, "paired corpus JSONL")->required();
  dec->add_option("--beam", beam, "beam width");
  dec->add_option("--lm", lm_ckpt, "external LM checkpoint");
  dec->add_option("--lm-weight", lm_weight, "fusion weight lambda");
  dec->add_option("--out", out_path, "decode output JSONL")->required();
  dec->add_option("--config", config_path, "lab config JSON");

  auto* ev = app.add_subcommand("eval", "score a decode file");
  ev->add_option("--decodes", decodes_path, "decode JSONL")->required();
  ev->add_option("--level", level, "word|entity");
  ev->add_option("--out", out_path, "metrics JSON output");

  auto* boot = app.add_subcommand("bootstrap", "paired bootstrap significance test");
  boot->add_option("--a", a_path, "decode JSONL, system A")->required();
  boot->add_option("--b", b_path, "decode JSONL, system B")->required();
  boot->add_option("--n", boot_n, "bootstrap sample size");
  boot->add_option("--reps", boot_reps, "bootstrap repetitions");
  boot->add_option("--seed", seed, "resampling seed");

  auto* paper = app.add_subcommand("run-paper", "run the full comparison grid and emit one report");
  paper->add_option("--plan", plan_path, "experiment plan JSON");
  paper->add_option("--out", out_path, "output directory")->required();
  bool print_plan = false;
  paper->add_flag("--print-plan", print_plan, "dump the embedded default plan and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      seed_set = gen_seed_opt->count() > 0;
      return run_gen_data(config_path, seed, seed_set, out_path, print_config);
    }

    if (pre->parsed()) {
      LabConfig lab = load_config_or_default(config_path);
      Corpus text = load_text_corpus(corpus_path);
      ModelBundle bundle = ModelBundle::init(lab.model, mix_seed(seed, 0xbeef));
      auto cfg = train_cfg_from(lab, steps > 0 ? steps : lab.train.pretrain_steps,
                                lab.train.pretrain_batch, lab.train.base_lr, seed, PromptMode::None);
      StrategyReport rep = pretrain_lm(bundle, text, cfg);
      save_bundle(out_path, bundle);
      rep.checkpoint_path = out_path;
      write_strategy_report(out_path, rep);
      print_status({{"status", "ok"}, {"cmd", "pretrain-lm"}, {"out", out_path},
                    {"final_loss", rep.final_loss()}});
      return 0;
    }

    if (tasr->parsed()) {
      LabConfig lab = load_config_or_default(config_path);
      Corpus paired = load_text_corpus(data_dir + "/source_train.jsonl");
      ModelBundle bundle = init_ckpt.empty() ? ModelBundle::init(lab.model, mix_seed(seed, 0xbeef))
                                             : load_bundle(init_ckpt);
      auto cfg = train_cfg_from(lab, steps > 0 ? steps : lab.train.asr_steps, lab.train.asr_batch,
                                lab.train.base_lr, seed, PromptMode::Audio);
      StrategyReport rep = train_asr(bundle, paired, cfg);
      save_bundle(out_path, bundle);
      rep.checkpoint_path = out_path;
      write_strategy_report(out_path, rep);
      print_status({{"status", "ok"}, {"cmd", "train-asr"}, {"out", out_path},
                    {"init", init_ckpt}, {"final_loss", rep.final_loss()}});
      return 0;
    }

    if (adapt->parsed()) {
      LabConfig lab = load_config_or_default(config_path);
      Corpus text = load_text_corpus(text_path);
      ModelBundle bundle = load_bundle(base_ckpt);
      auto cfg = train_cfg_from(lab, steps > 0 ? steps : lab.train.finetune_steps,
                                lab.train.finetune_batch, lab.train.finetune_lr, seed,
                                PromptMode::None);
      StrategyReport rep;
      if (strategy == "pre") {
        rep = pre_finetune(bundle, text, cfg);
      } else {
        cfg.prompt_mode = prompt_mode_from_name(strategy);
        SoftPrompt prompt;
        if (cfg.prompt_mode == PromptMode::Soft) {
          if (lm_ckpt.empty()) {
            throw_contract("adapt --strategy soft: no trained soft prompt given (--prompt); run train-softprompt first");
          }
          prompt = load_softprompt(lm_ckpt);
          cfg.prompt_len = prompt.length();
          if (prompt_len != prompt.length()) cfg.prompt_len = prompt.length();
        }
        rep = post_finetune(bundle, text, cfg, cfg.prompt_mode == PromptMode::Soft ? &prompt : nullptr);
      }
      save_bundle(out_path, bundle);
      rep.checkpoint_path = out_path;
      write_strategy_report(out_path, rep);
      print_status({{"status", "ok"}, {"cmd", "adapt"}, {"strategy", strategy}, {"out", out_path},
                    {"final_loss", rep.final_loss()}});
      return 0;
    }

    if (tsp->parsed()) {
      LabConfig lab = load_config_or_default(config_path);
      Corpus text = load_text_corpus(text_path);
      ModelBundle bundle = load_bundle(base_ckpt);
      auto cfg = train_cfg_from(lab, steps > 0 ? steps : lab.train.softprompt_steps,
                                lab.train.softprompt_batch, lab.train.softprompt_lr, seed,
                                PromptMode::Soft);
      cfg.prompt_len = prompt_len;
      SoftPromptTraining training = train_soft_prompt(bundle, text, domain, prompt_len, cfg);
      save_softprompt(out_path, training.prompt);
      training.report.checkpoint_path = out_path;
      write_strategy_report(out_path, training.report);
      print_status({{"status", "ok"}, {"cmd", "train-softprompt"}, {"out", out_path},
                    {"domain", domain}, {"prompt_len", prompt_len},
                    {"final_loss", training.report.final_loss()}});
      return 0;
    }

    if (telm->parsed()) {
      LabConfig lab = load_config_or_default(config_path);
      Corpus text = load_text_corpus(text_path);
      Tokenizer tok;
      ExternalLM lm = ExternalLM::init(tok.vocab_size(), mix_seed(seed, 0x1e7e));
      auto cfg = train_cfg_from(lab, steps > 0 ? steps : lab.train.extlm_steps,
                                lab.train.extlm_batch, lab.train.base_lr, seed, PromptMode::None);
      StrategyReport rep = train_external_lm(lm, text, cfg);
      save_external_lm(out_path, lm);
      rep.checkpoint_path = out_path;
      write_strategy_report(out_path, rep);
      print_status({{"status", "ok"}, {"cmd", "train-extlm"}, {"out", out_path},
                    {"final_loss", rep.final_loss()}});
      return 0;
    }

    if (dec->parsed()) {
      LabConfig lab = load_config_or_default(config_path);
      ModelBundle bundle = load_bundle(model_ckpt);
      Corpus corpus = load_text_corpus(corpus_path);
      FusionConfig fusion{lm_weight, beam, lab.decode.max_len, lab.decode.length_alpha};
      ExternalLM lm;
      const ExternalLM* lm_ptr = nullptr;
      if (!lm_ckpt.empty()) {
        lm = load_external_lm(lm_ckpt);
        lm_ptr = &lm;
      }
      if (fusion.lm_weight > 0.0 && lm_ptr == nullptr) {
        throw_config("decode: --lm-weight > 0 requires --lm");
      }
      auto decodes = decode_corpus(bundle, corpus, fusion, lm_ptr);
      write_decodes_jsonl(out_path, decodes);
      auto records = records_from_decodes(decodes);
      print_status({{"status", "ok"}, {"cmd", "decode"}, {"out", out_path},
                    {"utterances", decodes.size()}, {"wer", corpus_wer(records)}});
      return 0;
    }

    if (ev->parsed()) {
      auto decodes = read_decodes_jsonl(decodes_path);
      if (decodes.empty()) throw_data(decodes_path + ": no decode records");
      auto records = records_from_decodes(decodes);
      ordered_json metrics;
      metrics["utterances"] = records.size();
      double w = corpus_wer(records);
      metrics["wer"] = w;
      int64_t subs = 0, inss = 0, dels = 0;
      for (const auto& r : records) {
        subs += r.words.sub;
        inss += r.words.ins;
        dels += r.words.del;
      }
      metrics["sub"] = subs;
      metrics["ins"] = inss;
      metrics["del"] = dels;
      if (level == "entity") {
        metrics["eer"] = corpus_eer(records);
      }
      if (!out_path.empty()) atomic_write_file(out_path, metrics.dump(2) + "\n");
      ordered_json status = {{"status", "ok"}, {"cmd", "eval"}, {"level", level}, {"wer", w}};
      if (metrics.contains("eer")) status["eer"] = metrics["eer"];
      print_status(status);
      return 0;
    }

    if (boot->parsed()) {
      auto da = read_decodes_jsonl(a_path);
      auto db = read_decodes_jsonl(b_path);
      auto ra = records_from_decodes(da);
      auto rb = records_from_decodes(db);
      BootstrapConfig bc;
      bc.sample_size = boot_n;
      bc.repetitions = boot_reps;
      bc.seed = seed;
      bc.level = ErrorLevel::Word;
      double p_word = bootstrap_p_value(ra, rb, bc);
      ordered_json status = {{"status", "ok"}, {"cmd", "bootstrap"}, {"n", boot_n},
                             {"reps", boot_reps}, {"p_word", p_word}};
      bool has_entities = false;
      for (const auto& r : ra) has_entities |= r.entities_total > 0;
      if (has_entities) {
        bc.level = ErrorLevel::Entity;
        status["p_entity"] = bootstrap_p_value(ra, rb, bc);
      }
      print_status(status);
      return 0;
    }

    if (paper->parsed()) {
      ExperimentPlan plan = plan_path.empty() ? ExperimentPlan{} : ExperimentPlan::load(plan_path);
      if (print_plan) {
        std::cout << plan.to_json();
        return 0;
      }
      PaperReport report = run_paper(plan, out_path);
      print_status({{"status", "ok"}, {"cmd", "run-paper"}, {"out", out_path},
                    {"grid_rows", report.grid.size()}, {"fusion_rows", report.fusion.size()},
                    {"significance_rows", report.significance.size()}});
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.kind() == Error::Kind::Config ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 1;
}

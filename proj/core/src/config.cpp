#include "spft/config.hpp"

#include "nlohmann/json.hpp"
#include "spft/io.hpp"

namespace spft {

namespace {

using nlohmann::ordered_json;

template <typename T>
void maybe(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string LabConfig::to_json() const {
  ordered_json j;
  j["version"] = version;
  j["data"] = {
      {"seed", data.seed},
      {"source_train", data.source_train},
      {"source_test", data.source_test},
      {"target_text", data.target_text},
      {"target_test", data.target_test},
      {"target_dev", data.target_dev},
      {"unseen_test", data.unseen_test},
      {"noise_sigma", data.noise_sigma},
      {"max_dup", data.max_dup},
      {"test_entity_overlap", data.test_entity_overlap},
      {"lexicon_size", data.lexicon_size},
      {"frame_dim", data.frame_dim},
  };
  j["model"] = {
      {"embed_dim", model.embed_dim},
      {"dec_layers", model.dec_layers},
      {"dec_heads", model.dec_heads},
      {"ff_mult", model.ff_mult},
      {"enc_layers", model.enc_layers},
      {"enc_heads", model.enc_heads},
      {"frame_dim", model.frame_dim},
      {"stack", model.stack},
  };
  j["train"] = {
      {"pretrain_steps", train.pretrain_steps},
      {"asr_steps", train.asr_steps},
      {"finetune_steps", train.finetune_steps},
      {"softprompt_steps", train.softprompt_steps},
      {"extlm_steps", train.extlm_steps},
      {"pretrain_batch", train.pretrain_batch},
      {"asr_batch", train.asr_batch},
      {"finetune_batch", train.finetune_batch},
      {"softprompt_batch", train.softprompt_batch},
      {"extlm_batch", train.extlm_batch},
      {"base_lr", train.base_lr},
      {"finetune_lr", train.finetune_lr},
      {"softprompt_lr", train.softprompt_lr},
      {"clip_norm", train.clip_norm},
  };
  j["decode"] = {
      {"beam", decode.beam},
      {"lm_weight", decode.lm_weight},
      {"max_len", decode.max_len},
      {"length_alpha", decode.length_alpha},
      {"lambda_grid", decode.lambda_grid},
  };
  j["bootstrap"] = {
      {"samples", bootstrap_samples},
      {"reps", bootstrap_reps},
      {"significance", significance},
  };
  return j.dump(2) + "\n";
}

LabConfig LabConfig::from_json(const std::string& text, const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw_config(origin + ": invalid JSON: " + e.what());
  }
  LabConfig cfg;
  maybe(j, "version", cfg.version);
  if (cfg.version != 1) throw_config(origin + ": unsupported config version " + std::to_string(cfg.version));
  if (j.contains("data")) {
    const auto& d = j.at("data");
    maybe(d, "seed", cfg.data.seed);
    maybe(d, "source_train", cfg.data.source_train);
    maybe(d, "source_test", cfg.data.source_test);
    maybe(d, "target_text", cfg.data.target_text);
    maybe(d, "target_test", cfg.data.target_test);
    maybe(d, "target_dev", cfg.data.target_dev);
    maybe(d, "unseen_test", cfg.data.unseen_test);
    maybe(d, "noise_sigma", cfg.data.noise_sigma);
    maybe(d, "max_dup", cfg.data.max_dup);
    maybe(d, "test_entity_overlap", cfg.data.test_entity_overlap);
    maybe(d, "lexicon_size", cfg.data.lexicon_size);
    maybe(d, "frame_dim", cfg.data.frame_dim);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    maybe(m, "embed_dim", cfg.model.embed_dim);
    maybe(m, "dec_layers", cfg.model.dec_layers);
    maybe(m, "dec_heads", cfg.model.dec_heads);
    maybe(m, "ff_mult", cfg.model.ff_mult);
    maybe(m, "enc_layers", cfg.model.enc_layers);
    maybe(m, "enc_heads", cfg.model.enc_heads);
    maybe(m, "frame_dim", cfg.model.frame_dim);
    maybe(m, "stack", cfg.model.stack);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    maybe(t, "pretrain_steps", cfg.train.pretrain_steps);
    maybe(t, "asr_steps", cfg.train.asr_steps);
    maybe(t, "finetune_steps", cfg.train.finetune_steps);
    maybe(t, "softprompt_steps", cfg.train.softprompt_steps);
    maybe(t, "extlm_steps", cfg.train.extlm_steps);
    maybe(t, "pretrain_batch", cfg.train.pretrain_batch);
    maybe(t, "asr_batch", cfg.train.asr_batch);
    maybe(t, "finetune_batch", cfg.train.finetune_batch);
    maybe(t, "softprompt_batch", cfg.train.softprompt_batch);
    maybe(t, "extlm_batch", cfg.train.extlm_batch);
    maybe(t, "base_lr", cfg.train.base_lr);
    maybe(t, "finetune_lr", cfg.train.finetune_lr);
    maybe(t, "softprompt_lr", cfg.train.softprompt_lr);
    maybe(t, "clip_norm", cfg.train.clip_norm);
  }
  if (j.contains("decode")) {
    const auto& d = j.at("decode");
    maybe(d, "beam", cfg.decode.beam);
    maybe(d, "lm_weight", cfg.decode.lm_weight);
    maybe(d, "max_len", cfg.decode.max_len);
    maybe(d, "length_alpha", cfg.decode.length_alpha);
    maybe(d, "lambda_grid", cfg.decode.lambda_grid);
  }
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    maybe(b, "samples", cfg.bootstrap_samples);
    maybe(b, "reps", cfg.bootstrap_reps);
    maybe(b, "significance", cfg.significance);
  }
  if (cfg.data.frame_dim != cfg.model.frame_dim) {
    throw_config(origin + ": data.frame_dim and model.frame_dim must agree");
  }
  if (cfg.decode.beam < 1) throw_config(origin + ": decode.beam must be >= 1");
  if (cfg.decode.lm_weight < 0.0) throw_config(origin + ": decode.lm_weight must be >= 0");
  return cfg;
}

LabConfig LabConfig::load(const std::string& path) { return from_json(read_file(path), path); }

}  // namespace spft

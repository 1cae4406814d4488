#include "spft/adaptation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "nlohmann/json.hpp"
#include "spft/digest.hpp"
#include "spft/rng.hpp"

namespace spft {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// One SGD-style loop shared by every pipeline: sample a batch, average the
// per-utterance losses, clip, Adam.
using SampleLoss = std::function<Tensor(const Utterance&, uint64_t sample_seed)>;

StrategyReport run_loop(const std::string& strategy, ParameterStore& store, const Corpus& corpus,
                        const TrainConfig& cfg, const SampleLoss& sample_loss) {
  if (corpus.items.empty()) throw_contract(strategy + ": empty corpus");
  if (cfg.steps < 0) throw_config(strategy + ": negative step count");
  auto start = Clock::now();

  StrategyReport report;
  report.strategy = strategy;
  report.frozen_digest_before = store_digest_frozen(store);

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamOptimizer adam(adam_cfg);
  Rng batch_rng(mix_seed(cfg.seed, 0xba7c4));
  int64_t n = static_cast<int64_t>(corpus.items.size());

  for (int64_t step = 0; step < cfg.steps; ++step) {
    Tensor total;
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const Utterance& u = corpus.items[static_cast<size_t>(batch_rng.uniform_int(0, n - 1))];
      uint64_t sample_seed = mix_seed(mix_seed(cfg.seed, static_cast<uint64_t>(step)), static_cast<uint64_t>(b));
      Tensor loss = sample_loss(u, sample_seed);
      total = total.defined() ? add(total, loss) : loss;
    }
    total = scale(total, 1.0 / static_cast<double>(cfg.batch_size));
    backward(total);
    clip_global_norm(store, cfg.clip_norm);
    adam.step(store);
    report.loss_curve.push_back(total.item());
  }

  report.frozen_digest_after = store_digest_frozen(store);
  if (report.frozen_digest_before != report.frozen_digest_after) {
    throw_contract(strategy + ": frozen parameters changed during training");
  }
  report.wall_seconds = seconds_since(start);
  return report;
}

std::vector<int> encode_text(const ModelBundle& bundle, const Utterance& u) {
  return bundle.tokenizer().encode(u.text);
}

}  // namespace

std::string prompt_mode_name(PromptMode mode) {
  switch (mode) {
    case PromptMode::Audio: return "audio";
    case PromptMode::None: return "none";
    case PromptMode::Empty: return "empty";
    case PromptMode::UpsampleMask: return "upmask";
    case PromptMode::Soft: return "soft";
  }
  return "none";
}

PromptMode prompt_mode_from_name(const std::string& name) {
  if (name == "audio") return PromptMode::Audio;
  if (name == "none" || name == "pre") return PromptMode::None;
  if (name == "empty") return PromptMode::Empty;
  if (name == "upmask") return PromptMode::UpsampleMask;
  if (name == "soft") return PromptMode::Soft;
  throw_config("unknown prompt mode '" + name + "'");
}

double StrategyReport::smoothed_initial(int64_t window) const {
  if (loss_curve.empty()) return 0.0;
  int64_t w = std::min<int64_t>(window, static_cast<int64_t>(loss_curve.size()));
  double s = 0.0;
  for (int64_t i = 0; i < w; ++i) s += loss_curve[static_cast<size_t>(i)];
  return s / static_cast<double>(w);
}

double StrategyReport::smoothed_final(int64_t window) const {
  if (loss_curve.empty()) return 0.0;
  int64_t w = std::min<int64_t>(window, static_cast<int64_t>(loss_curve.size()));
  double s = 0.0;
  for (size_t i = loss_curve.size() - static_cast<size_t>(w); i < loss_curve.size(); ++i) {
    s += loss_curve[i];
  }
  return s / static_cast<double>(w);
}

std::string StrategyReport::to_json(bool include_wall) const {
  nlohmann::ordered_json j;
  j["strategy"] = strategy;
  j["steps"] = loss_curve.size();
  j["initial_loss"] = initial_loss();
  j["final_loss"] = final_loss();
  j["loss_curve"] = loss_curve;
  j["frozen_digest_before"] = frozen_digest_before;
  j["frozen_digest_after"] = frozen_digest_after;
  if (!checkpoint_path.empty()) j["checkpoint"] = checkpoint_path;
  if (include_wall) j["wall_seconds"] = wall_seconds;
  return j.dump(2);
}

StrategyReport train_asr(ModelBundle& bundle, const Corpus& paired, const TrainConfig& config) {
  if (!paired.paired()) throw_contract("train_asr: corpus is not audio-text paired");
  if (config.prompt_mode != PromptMode::Audio) {
    throw_contract("train_asr: prompt mode must be 'audio'");
  }
  bundle.set_trainable_groups(true, true, true);

  auto report = run_loop("train_asr", bundle.params(), paired, config,
                         [&](const Utterance& u, uint64_t) {
                           Tensor prompt = encode_audio(bundle, *u.frames);
                           return decoder_forward(bundle, prompt, encode_text(bundle, u)).loss;
                         });

  // Mean audio embedding over the first utterances, the soft-prompt seed.
  {
    NoGradGuard ng;
    int64_t e = bundle.config().embed_dim;
    std::vector<double> mean(static_cast<size_t>(e), 0.0);
    int64_t rows = 0;
    int64_t limit = std::min<int64_t>(100, static_cast<int64_t>(paired.items.size()));
    for (int64_t i = 0; i < limit; ++i) {
      Tensor emb = encode_audio(bundle, *paired.items[static_cast<size_t>(i)].frames);
      for (int64_t r = 0; r < emb.dim(0); ++r) {
        const double* row = emb.data().data() + r * e;
        for (int64_t j = 0; j < e; ++j) mean[static_cast<size_t>(j)] += row[j];
        ++rows;
      }
    }
    if (rows > 0) {
      for (double& v : mean) v /= static_cast<double>(rows);
    }
    bundle.set_audio_embed_mean(mean);
  }
  return report;
}

namespace {

StrategyReport text_lm_training(const std::string& name, ModelBundle& bundle, const Corpus& text,
                                const TrainConfig& config) {
  if (config.prompt_mode != PromptMode::None) {
    throw_contract(name + ": prompt mode must be 'none'");
  }
  bundle.set_trainable_groups(false, true, true);
  return run_loop(name, bundle.params(), text, config, [&](const Utterance& u, uint64_t) {
    return decoder_forward(bundle, std::nullopt, encode_text(bundle, u)).loss;
  });
}

}  // namespace

StrategyReport pre_finetune(ModelBundle& bundle, const Corpus& text, const TrainConfig& config) {
  return text_lm_training("pre_finetune", bundle, text, config);
}

StrategyReport pretrain_lm(ModelBundle& bundle, const Corpus& text, const TrainConfig& config) {
  return text_lm_training("pretrain_lm", bundle, text, config);
}

StrategyReport post_finetune(ModelBundle& bundle, const Corpus& text, const TrainConfig& config,
                             const SoftPrompt* soft) {
  Tensor soft_values;
  if (config.prompt_mode == PromptMode::Audio) {
    throw_contract("post_finetune: audio prompts require the paired pipeline");
  }
  if (config.prompt_mode == PromptMode::Soft) {
    if (soft == nullptr || soft->length() == 0) {
      throw_contract("post_finetune: soft mode without a trained soft prompt for this domain");
    }
    soft_values = soft->values();
    soft_values.set_requires_grad(false);  // Fig-style frozen prompt
  }
  bundle.set_trainable_groups(false, true, true);

  std::string name = "post_" + prompt_mode_name(config.prompt_mode);
  if (config.prompt_mode == PromptMode::Soft) name += std::to_string(soft->length());

  return run_loop(name, bundle.params(), text, config, [&](const Utterance& u, uint64_t sample_seed) {
    std::vector<int> tokens = encode_text(bundle, u);
    std::optional<Tensor> prompt;
    switch (config.prompt_mode) {
      case PromptMode::None:
        break;
      case PromptMode::Empty:
        prompt = embedding_rows(bundle.params().at("embedding.table"),
                                {Tokenizer::kInstOpen, Tokenizer::kInstClose});
        break;
      case PromptMode::UpsampleMask:
        prompt = make_upsample_mask(tokens, bundle.params(), "embedding.table", sample_seed,
                                    config.mask_with_zeros);
        break;
      case PromptMode::Soft:
        prompt = soft_values;
        break;
      default:
        break;
    }
    return decoder_forward(bundle, prompt, tokens).loss;
  });
}

SoftPromptTraining train_soft_prompt(ModelBundle& bundle, const Corpus& text,
                                     const std::string& domain, int64_t prompt_len,
                                     const TrainConfig& config) {
  if (prompt_len < 1) throw_config("train_soft_prompt: prompt length must be >= 1");
  int64_t e = bundle.config().embed_dim;

  std::string bundle_digest_before = store_digest(bundle.params());
  auto frozen_snapshot = bundle.params().frozen_names();
  bundle.params().freeze_all();

  // Start inside the audio-embedding region the prompt imitates: broadcast
  // mean audio embedding plus small jitter. Zero init available via config.
  Tensor values = Tensor::zeros({prompt_len, e});
  if (!config.zero_init_prompt) {
    std::vector<double> mean = bundle.audio_embed_mean();
    Rng jitter(mix_seed(config.seed, 0x50f7));
    for (int64_t r = 0; r < prompt_len; ++r) {
      double* row = values.data().data() + r * e;
      for (int64_t j = 0; j < e; ++j) row[j] = mean[static_cast<size_t>(j)] + jitter.gaussian(0.0, 0.01);
    }
  }

  SoftPrompt prompt(domain, values);
  ParameterStore prompt_store;
  prompt_store.create(prompt.name(), values);

  auto report = run_loop("softprompt_" + domain + "_d" + std::to_string(prompt_len), prompt_store,
                         text, config, [&](const Utterance& u, uint64_t) {
                           return decoder_forward(bundle, values, encode_text(bundle, u)).loss;
                         });

  std::string bundle_digest_after = store_digest(bundle.params());
  if (bundle_digest_before != bundle_digest_after) {
    throw_contract("train_soft_prompt: bundle parameters changed while frozen");
  }
  bundle.params().set_frozen_names(frozen_snapshot);

  SoftPromptTraining out;
  out.prompt = std::move(prompt);
  out.report = std::move(report);
  return out;
}

Tensor make_upsample_mask(const std::vector<int>& tokens, const ParameterStore& params,
                          const std::string& embed_name, uint64_t seed, bool mask_with_zeros) {
  if (tokens.empty()) throw_contract("make_upsample_mask: empty token sequence");
  Rng rng(mix_seed(seed, 0x0b5a));
  std::vector<int> expanded;
  expanded.reserve(tokens.size() * 2);
  for (int tok : tokens) {
    int64_t dup = rng.uniform_int(1, 2);
    for (int64_t r = 0; r < dup; ++r) expanded.push_back(tok);
  }
  int64_t l_up = static_cast<int64_t>(expanded.size());
  int64_t mask_count = static_cast<int64_t>(std::llround(0.5 * static_cast<double>(l_up)));
  std::vector<int64_t> positions(static_cast<size_t>(l_up));
  for (int64_t i = 0; i < l_up; ++i) positions[static_cast<size_t>(i)] = i;
  rng.shuffle(positions);

  if (!mask_with_zeros) {
    for (int64_t i = 0; i < mask_count; ++i) {
      expanded[static_cast<size_t>(positions[static_cast<size_t>(i)])] = Tokenizer::kMask;
    }
    return embedding_rows(params.at(embed_name), expanded);
  }

  Tensor rows = embedding_rows(params.at(embed_name), expanded);
  Tensor keep = Tensor::full(rows.shape(), 1.0);
  int64_t e = rows.dim(1);
  for (int64_t i = 0; i < mask_count; ++i) {
    double* row = keep.data().data() + positions[static_cast<size_t>(i)] * e;
    std::fill_n(row, e, 0.0);
  }
  return mul(rows, keep);
}

StrategyReport train_external_lm(ExternalLM& lm, const Corpus& text, const TrainConfig& config) {
  Tokenizer tok;
  return run_loop("extlm", lm.params(), text, config, [&](const Utterance& u, uint64_t) {
    return lm.sequence_loss(tok.encode(u.text));
  });
}

double text_perplexity(const ModelBundle& bundle, const Corpus& text) {
  NoGradGuard ng;
  double total_ce = 0.0;
  int64_t total_targets = 0;
  for (const auto& u : text.items) {
    auto fwd = decoder_forward(bundle, std::nullopt, bundle.tokenizer().encode(u.text));
    total_ce += fwd.loss.item() * static_cast<double>(fwd.target_positions);
    total_targets += fwd.target_positions;
  }
  if (total_targets == 0) throw_data("text_perplexity: empty corpus");
  return std::exp(total_ce / static_cast<double>(total_targets));
}

}  // namespace spft

#include "spft/model.hpp"

#include <cmath>

#include "spft/rng.hpp"

namespace spft {

namespace {

Tensor gaussian_tensor(Shape shape, double sigma, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.gaussian(0.0, sigma);
  return t;
}

std::atomic<uint64_t> g_softprompt_reads{0};

}  // namespace

void init_transformer_params(ParameterStore& params, const std::string& prefix, int n_layers,
                             int64_t width, int64_t ff_mult, uint64_t seed) {
  Rng rng(mix_seed(seed, std::hash<std::string>{}(prefix)));
  double attn_sigma = 1.0 / std::sqrt(static_cast<double>(width));
  double resid_sigma = attn_sigma / std::sqrt(2.0 * n_layers);
  int64_t ff = width * ff_mult;
  for (int l = 0; l < n_layers; ++l) {
    std::string lp = prefix + "layer" + std::to_string(l) + ".";
    params.create(lp + "attn_norm.g", Tensor::full({width}, 1.0));
    params.create(lp + "attn.wq", gaussian_tensor({width, width}, attn_sigma, rng));
    params.create(lp + "attn.wk", gaussian_tensor({width, width}, attn_sigma, rng));
    params.create(lp + "attn.wv", gaussian_tensor({width, width}, attn_sigma, rng));
    params.create(lp + "attn.wo", gaussian_tensor({width, width}, resid_sigma, rng));
    params.create(lp + "ff_norm.g", Tensor::full({width}, 1.0));
    params.create(lp + "ff.w1", gaussian_tensor({width, ff}, attn_sigma, rng));
    params.create(lp + "ff.w2", gaussian_tensor({ff, width}, resid_sigma / std::sqrt(2.0), rng));
  }
  params.create(prefix + "final_norm.g", Tensor::full({width}, 1.0));
}

Tensor transformer_stack(const ParameterStore& params, const std::string& prefix, int n_layers,
                         int n_heads, Tensor x, bool causal) {
  for (int l = 0; l < n_layers; ++l) {
    std::string lp = prefix + "layer" + std::to_string(l) + ".";
    Tensor h = rms_norm(x, params.at(lp + "attn_norm.g"));
    Tensor q = matmul(h, params.at(lp + "attn.wq"));
    Tensor k = matmul(h, params.at(lp + "attn.wk"));
    Tensor v = matmul(h, params.at(lp + "attn.wv"));
    Tensor a = attention(q, k, v, n_heads, causal);
    x = add(x, matmul(a, params.at(lp + "attn.wo")));
    Tensor f = rms_norm(x, params.at(lp + "ff_norm.g"));
    f = gelu(matmul(f, params.at(lp + "ff.w1")));
    x = add(x, matmul(f, params.at(lp + "ff.w2")));
  }
  return rms_norm(x, params.at(prefix + "final_norm.g"));
}

Tensor lm_logits(const ParameterStore& params, const LmSpec& spec, const Tensor& input_rows) {
  Tensor h = transformer_stack(params, spec.stack_prefix, spec.n_layers, spec.n_heads, input_rows,
                               /*causal=*/true);
  return matmul(h, params.at(spec.output_name));
}

DecoderForward causal_lm_forward(const ParameterStore& params, const LmSpec& spec,
                                 const std::optional<Tensor>& prompt, const std::vector<int>& tokens) {
  if (tokens.empty()) throw_contract("causal_lm_forward: empty token sequence");
  int64_t p_len = 0;
  if (prompt && prompt->defined()) {
    if (prompt->rank() != 2 || prompt->dim(1) != spec.width) {
      throw_dimension("causal_lm_forward: prompt " + shape_str(prompt->shape()) +
                      " does not match width " + std::to_string(spec.width));
    }
    p_len = prompt->dim(0);
  }

  std::vector<int> input_ids;
  input_ids.reserve(tokens.size() + 1);
  input_ids.push_back(Tokenizer::kBos);
  input_ids.insert(input_ids.end(), tokens.begin(), tokens.end());

  Tensor text_rows = embedding_rows(params.at(spec.embed_name), input_ids);
  Tensor input = (p_len > 0) ? concat_rows({*prompt, text_rows}) : text_rows;

  Tensor logits = lm_logits(params, spec, input);

  // Targets: prompt rows ignored; BOS predicts tokens[0]; the last token
  // predicts EOS.
  std::vector<int> targets(static_cast<size_t>(p_len), -1);
  targets.reserve(static_cast<size_t>(p_len) + tokens.size() + 1);
  for (int tok : tokens) targets.push_back(tok);
  targets.push_back(Tokenizer::kEos);

  DecoderForward out;
  out.logits = logits;
  out.loss = cross_entropy_rows(logits, targets);
  out.target_positions = static_cast<int64_t>(tokens.size()) + 1;
  return out;
}

ModelBundle ModelBundle::init(const ModelConfig& config, uint64_t seed) {
  ModelBundle b;
  b.config_ = config;
  b.config_.vocab = b.tokenizer_.vocab_size();
  const auto& cfg = b.config_;
  Rng rng(mix_seed(seed, 0x6d6f64656c));

  b.params_.create("embedding.table", gaussian_tensor({cfg.vocab, cfg.embed_dim}, 0.05, rng));

  int64_t in_dim = cfg.stack * cfg.frame_dim;
  b.params_.create("encoder.input_proj.w",
                   gaussian_tensor({in_dim, cfg.embed_dim}, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng));
  b.params_.create("encoder.input_proj.b", Tensor::zeros({cfg.embed_dim}));
  init_transformer_params(b.params_, "encoder.", static_cast<int>(cfg.enc_layers), cfg.embed_dim,
                          cfg.ff_mult, mix_seed(seed, 1));
  init_transformer_params(b.params_, "decoder.", static_cast<int>(cfg.dec_layers), cfg.embed_dim,
                          cfg.ff_mult, mix_seed(seed, 2));
  b.params_.create("decoder.output.w", gaussian_tensor({cfg.embed_dim, cfg.vocab}, 0.02, rng));

  Tensor arch = Tensor::from_data({9}, {static_cast<double>(cfg.vocab),
                                        static_cast<double>(cfg.embed_dim),
                                        static_cast<double>(cfg.dec_layers),
                                        static_cast<double>(cfg.dec_heads),
                                        static_cast<double>(cfg.ff_mult),
                                        static_cast<double>(cfg.enc_layers),
                                        static_cast<double>(cfg.enc_heads),
                                        static_cast<double>(cfg.frame_dim),
                                        static_cast<double>(cfg.stack)});
  b.params_.create("meta.arch", std::move(arch));
  b.params_.create("meta.audio_embed_mean", Tensor::zeros({cfg.embed_dim}));
  b.params_.freeze_prefix("meta.");
  return b;
}

LmSpec ModelBundle::decoder_spec() const {
  LmSpec s;
  s.embed_name = "embedding.table";
  s.stack_prefix = "decoder.";
  s.output_name = "decoder.output.w";
  s.width = config_.embed_dim;
  s.vocab = config_.vocab;
  s.n_layers = static_cast<int>(config_.dec_layers);
  s.n_heads = static_cast<int>(config_.dec_heads);
  s.ff_mult = config_.ff_mult;
  return s;
}

void ModelBundle::set_trainable_groups(bool encoder, bool embedding, bool decoder) {
  params_.freeze_all();
  if (encoder) params_.unfreeze_prefix("encoder.");
  if (embedding) params_.unfreeze_prefix("embedding.");
  if (decoder) params_.unfreeze_prefix("decoder.");
  params_.freeze_prefix("meta.");
}

ModelBundle ModelBundle::clone() const {
  ModelBundle b;
  b.config_ = config_;
  b.tokenizer_ = tokenizer_;
  for (const auto& [name, tensor] : params_.entries()) {
    Tensor copy = tensor.clone();
    copy.set_requires_grad(tensor.requires_grad());
    b.params_.entries().emplace(name, std::move(copy));
  }
  b.params_.set_frozen_names(params_.frozen_names());
  return b;
}

std::vector<double> ModelBundle::audio_embed_mean() const {
  return params_.at("meta.audio_embed_mean").data();
}

void ModelBundle::set_audio_embed_mean(const std::vector<double>& mean) {
  auto& t = params_.at("meta.audio_embed_mean");
  if (mean.size() != t.data().size()) throw_dimension("audio_embed_mean: wrong size");
  t.data() = mean;
}

Tensor encode_audio(const ModelBundle& bundle, const FrameMatrix& frames) {
  const auto& cfg = bundle.config();
  if (frames.rows < 1) throw_contract("encode_audio: empty frame sequence");
  if (frames.cols != cfg.frame_dim) {
    throw_dimension("encode_audio: got " + std::to_string(frames.cols) + "-dim frames, expected " +
                    std::to_string(cfg.frame_dim));
  }
  int64_t k = cfg.stack;
  int64_t t_a = (frames.rows + k - 1) / k;
  int64_t in_dim = k * cfg.frame_dim;
  std::vector<double> stacked(static_cast<size_t>(t_a * in_dim), 0.0);
  for (int64_t r = 0; r < frames.rows; ++r) {
    int64_t group = r / k;
    int64_t slot = r % k;
    std::copy_n(frames.row(r), cfg.frame_dim,
                stacked.data() + group * in_dim + slot * cfg.frame_dim);
  }
  Tensor x = Tensor::from_data({t_a, in_dim}, std::move(stacked));
  x = add_bias(matmul(x, bundle.params().at("encoder.input_proj.w")),
               bundle.params().at("encoder.input_proj.b"));
  return transformer_stack(bundle.params(), "encoder.", static_cast<int>(cfg.enc_layers),
                           static_cast<int>(cfg.enc_heads), x, /*causal=*/false);
}

DecoderForward decoder_forward(const ModelBundle& bundle, const std::optional<Tensor>& prompt,
                               const std::vector<int>& tokens) {
  return causal_lm_forward(bundle.params(), bundle.decoder_spec(), prompt, tokens);
}

SoftPrompt::SoftPrompt(std::string domain, Tensor values)
    : domain_(std::move(domain)), values_(std::move(values)) {}

std::string SoftPrompt::name() const {
  return "softprompt." + domain_ + ".d" + std::to_string(length());
}

const Tensor& SoftPrompt::values() const {
  g_softprompt_reads.fetch_add(1, std::memory_order_relaxed);
  return values_;
}

uint64_t SoftPrompt::read_count() { return g_softprompt_reads.load(std::memory_order_relaxed); }
void SoftPrompt::reset_read_count() { g_softprompt_reads.store(0, std::memory_order_relaxed); }

ExternalLM ExternalLM::init(int64_t vocab, uint64_t seed, int64_t width, int n_layers, int n_heads) {
  ExternalLM lm;
  lm.vocab_ = vocab;
  lm.width_ = width;
  lm.n_layers_ = n_layers;
  lm.n_heads_ = n_heads;
  Rng rng(mix_seed(seed, 0x65787431));
  lm.params_.create("extlm.embedding.table", gaussian_tensor({vocab, width}, 0.05, rng));
  init_transformer_params(lm.params_, "extlm.", n_layers, width, 4, mix_seed(seed, 3));
  lm.params_.create("extlm.output.w", gaussian_tensor({width, vocab}, 0.02, rng));
  return lm;
}

LmSpec ExternalLM::spec() const {
  LmSpec s;
  s.embed_name = "extlm.embedding.table";
  s.stack_prefix = "extlm.";
  s.output_name = "extlm.output.w";
  s.width = width_;
  s.vocab = vocab_;
  s.n_layers = n_layers_;
  s.n_heads = n_heads_;
  s.ff_mult = 4;
  return s;
}

Tensor ExternalLM::sequence_loss(const std::vector<int>& tokens) const {
  return causal_lm_forward(params_, spec(), std::nullopt, tokens).loss;
}

double ExternalLM::score(const std::vector<int>& prefix, int candidate) const {
  if (candidate < 0 || candidate >= vocab_) {
    throw_bounds("lm_score: candidate " + std::to_string(candidate) + " outside vocabulary");
  }
  NoGradGuard ng;
  std::vector<int> input_ids;
  input_ids.push_back(Tokenizer::kBos);
  input_ids.insert(input_ids.end(), prefix.begin(), prefix.end());
  Tensor rows = embedding_rows(params_.at("extlm.embedding.table"), input_ids);
  Tensor logits = lm_logits(params_, spec(), rows);
  int64_t last = logits.dim(0) - 1;
  const double* row = logits.data().data() + last * vocab_;
  return row[candidate] - log_sum_exp(row, vocab_);
}

}  // namespace spft

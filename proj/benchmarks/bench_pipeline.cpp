#include <benchmark/benchmark.h>

#include "spft/adaptation.hpp"
#include "spft/decode.hpp"
#include "spft/eval.hpp"
#include "spft/rng.hpp"

using namespace spft;

namespace {

DataSet& bench_data() {
  static DataSet ds = [] {
    DataConfig cfg;
    cfg.seed = 99;
    cfg.source_train = 64;
    cfg.source_test = 8;
    cfg.target_text = 64;
    cfg.target_test = 8;
    cfg.target_dev = 4;
    cfg.unseen_test = 0;
    return gen_corpora(cfg);
  }();
  return ds;
}

ModelBundle& bench_bundle() {
  static ModelBundle bundle = ModelBundle::init(ModelConfig{}, 99);
  return bundle;
}

}  // namespace

static void BM_asr_train_step(benchmark::State& state) {
  ModelBundle bundle = bench_bundle().clone();
  const Corpus& corpus = bench_data().source_train;
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = state.range(0);
  cfg.prompt_mode = PromptMode::Audio;
  cfg.lr = 1e-4;
  int64_t step = 0;
  for (auto _ : state) {
    cfg.seed = static_cast<uint64_t>(step++);
    train_asr(bundle, corpus, cfg);
  }
}
BENCHMARK(BM_asr_train_step)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

static void BM_text_train_step(benchmark::State& state) {
  ModelBundle bundle = bench_bundle().clone();
  const Corpus& corpus = bench_data().target("music").text_only;
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = state.range(0);
  cfg.prompt_mode = PromptMode::None;
  cfg.lr = 1e-4;
  int64_t step = 0;
  for (auto _ : state) {
    cfg.seed = static_cast<uint64_t>(step++);
    post_finetune(bundle, corpus, cfg);
  }
}
BENCHMARK(BM_text_train_step)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_softprompt_train_step(benchmark::State& state) {
  ModelBundle bundle = bench_bundle().clone();
  const Corpus& corpus = bench_data().target("music").text_only;
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = state.range(0);
  cfg.prompt_mode = PromptMode::Soft;
  cfg.lr = 1e-4;
  int64_t step = 0;
  for (auto _ : state) {
    cfg.seed = static_cast<uint64_t>(step++);
    train_soft_prompt(bundle, corpus, "music", 30, cfg);
  }
}
BENCHMARK(BM_softprompt_train_step)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_beam_decode_utterance(benchmark::State& state) {
  ModelBundle& bundle = bench_bundle();
  const Corpus& corpus = bench_data().target("music").test;
  FusionConfig fusion;
  fusion.beam = static_cast<int>(state.range(0));
  fusion.max_len = 80;
  size_t i = 0;
  for (auto _ : state) {
    const Utterance& u = corpus.items[i++ % corpus.items.size()];
    DecodeResult res = beam_search(bundle, *u.frames, fusion, nullptr);
    benchmark::DoNotOptimize(res.text.data());
  }
}
BENCHMARK(BM_beam_decode_utterance)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_wer_pair(benchmark::State& state) {
  for (auto _ : state) {
    WerResult r = wer("play the song zukalo remi vone", "play the song zukalo remi bone");
    benchmark::DoNotOptimize(r.rate);
  }
}
BENCHMARK(BM_wer_pair);

static void BM_bootstrap_1k(benchmark::State& state) {
  std::vector<EvalRecord> a, b;
  Rng rng(5);
  for (int i = 0; i < 400; ++i) {
    EvalRecord r;
    r.ref = "utt" + std::to_string(i);
    r.entities_total = 2;
    r.entities_missed = rng.uniform_int(0, 2);
    r.words.ref_words = 6;
    r.words.sub = rng.uniform_int(0, 3);
    a.push_back(r);
    r.entities_missed = rng.uniform_int(0, 2);
    b.push_back(r);
  }
  BootstrapConfig cfg;
  cfg.mode = BootstrapMode::MonteCarlo;
  for (auto _ : state) {
    double p = bootstrap_p_value(a, b, cfg);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_bootstrap_1k);

BENCHMARK_MAIN();

#include "spft/decode.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "nlohmann/json.hpp"
#include "spft/io.hpp"
#include "spft/kv_session.hpp"

namespace spft {

namespace {

using nlohmann::json;

double ranking_score(const DecodeHypothesis& h, double lambda, double alpha) {
  double s = h.asr_logprob + lambda * h.lm_logprob;
  if (alpha > 0.0 && !h.tokens.empty()) {
    s /= std::pow(static_cast<double>(h.tokens.size()), alpha);
  }
  return s;
}

}  // namespace

std::vector<double> fuse_step_scores(const std::vector<double>& asr_logprobs,
                                     const std::vector<double>& lm_logprobs, double lambda) {
  if (asr_logprobs.size() != lm_logprobs.size()) {
    throw_dimension("fuse_step_scores: vectors of length " + std::to_string(asr_logprobs.size()) +
                    " vs " + std::to_string(lm_logprobs.size()));
  }
  std::vector<double> out(asr_logprobs);
  for (size_t i = 0; i < out.size(); ++i) out[i] += lambda * lm_logprobs[i];
  return out;
}

DecodeResult beam_search_prompt(const ParameterStore& asr_params, const LmSpec& asr_spec,
                                const Tensor& prompt_rows, const FusionConfig& fusion,
                                const ExternalLM* lm, const std::vector<int>& allowed_tokens) {
  if (fusion.beam < 1) throw_config("beam_search: beam width must be >= 1");
  if (fusion.lm_weight > 0.0 && lm == nullptr) {
    throw_config("beam_search: lm_weight > 0 but no external LM supplied");
  }
  if (allowed_tokens.empty()) throw_config("beam_search: empty candidate set");

  const double lambda = fusion.lm_weight;
  const size_t beam_width = static_cast<size_t>(fusion.beam);

  BeamBatchSession asr(asr_params, asr_spec, fusion.beam);
  if (prompt_rows.defined() && prompt_rows.dim(0) > 0) {
    asr.prime(prompt_rows.data().data(), prompt_rows.dim(0));
  }
  asr.prime_token(Tokenizer::kBos);

  std::optional<BeamBatchSession> lms;
  if (lm != nullptr) {
    lms.emplace(lm->params(), lm->spec(), fusion.beam);
    lms->prime_token(Tokenizer::kBos);
  }

  std::vector<DecodeHypothesis> live(1);
  std::vector<DecodeHypothesis> finished;

  struct Candidate {
    size_t parent;
    int token;
    double asr_logprob;
    double lm_logprob;
    double key;
  };

  std::vector<double> asr_lp, lm_lp;
  for (int64_t step = 0; step < fusion.max_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * allowed_tokens.size());
    for (size_t b = 0; b < live.size(); ++b) {
      asr.lane_log_probs(static_cast<int>(b), asr_lp);
      if (lms) lms->lane_log_probs(static_cast<int>(b), lm_lp);
      for (int tok : allowed_tokens) {
        Candidate c;
        c.parent = b;
        c.token = tok;
        c.asr_logprob = live[b].asr_logprob + asr_lp[static_cast<size_t>(tok)];
        c.lm_logprob = live[b].lm_logprob + (lms ? lm_lp[static_cast<size_t>(tok)] : 0.0);
        c.key = c.asr_logprob + lambda * c.lm_logprob;
        candidates.push_back(c);
      }
    }
    size_t keep = std::min(beam_width, candidates.size());
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& x, const Candidate& y) { return x.key > y.key; });
    candidates.resize(keep);

    std::vector<DecodeHypothesis> next;
    std::vector<std::pair<int, int>> advance;
    next.reserve(keep);
    advance.reserve(keep);
    for (const Candidate& c : candidates) {
      DecodeHypothesis h = live[c.parent];
      h.tokens.push_back(c.token);
      h.asr_logprob = c.asr_logprob;
      h.lm_logprob = c.lm_logprob;
      if (c.token == Tokenizer::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      next.push_back(std::move(h));
      advance.emplace_back(static_cast<int>(c.parent), c.token);
    }
    if (!advance.empty()) {
      asr.advance(advance);
      if (lms) lms->advance(advance);
    }
    live = std::move(next);
  }

  // Hypotheses still alive at the length cap compete unfinished.
  std::vector<DecodeHypothesis> pool = std::move(finished);
  for (DecodeHypothesis& h : live) pool.push_back(std::move(h));
  if (pool.empty()) throw_contract("beam_search: no hypotheses produced");
  std::stable_sort(pool.begin(), pool.end(), [&](const DecodeHypothesis& x, const DecodeHypothesis& y) {
    return ranking_score(x, lambda, fusion.length_alpha) > ranking_score(y, lambda, fusion.length_alpha);
  });
  if (pool.size() > beam_width) pool.resize(beam_width);

  DecodeResult result;
  result.nbest = std::move(pool);
  return result;
}

DecodeResult beam_search(const ModelBundle& bundle, const FrameMatrix& frames,
                         const FusionConfig& fusion, const ExternalLM* lm) {
  NoGradGuard ng;
  Tensor prompt = encode_audio(bundle, frames);
  DecodeResult result = beam_search_prompt(bundle.params(), bundle.decoder_spec(), prompt, fusion,
                                           lm, bundle.tokenizer().emittable_ids());
  result.text = bundle.tokenizer().decode(result.nbest.front().tokens);
  return result;
}

std::vector<DecodeRecord> decode_corpus(const ModelBundle& bundle, const Corpus& corpus,
                                        const FusionConfig& fusion, const ExternalLM* lm,
                                        int threads) {
  if (!corpus.paired()) throw_contract("decode_corpus: corpus has utterances without frames");
  std::vector<DecodeRecord> records(corpus.items.size());
  auto work = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < corpus.items.size(); i += stride) {
      const Utterance& u = corpus.items[i];
      DecodeResult res = beam_search(bundle, *u.frames, fusion, lm);
      DecodeRecord rec;
      rec.ref = u.text;
      rec.hyp = res.text;
      for (const auto& e : u.entities) rec.ref_entities.push_back(e.surface);
      for (const auto& h : res.nbest) {
        rec.nbest_text.push_back(bundle.tokenizer().decode(h.tokens));
      }
      rec.nbest_raw = std::move(res.nbest);
      records[i] = std::move(rec);
    }
  };
  int n = std::max(1, threads);
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(work, static_cast<size_t>(t), static_cast<size_t>(n));
    for (auto& th : pool) th.join();
  }
  return records;
}

void write_decodes_jsonl(const std::string& path, const std::vector<DecodeRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    json j;
    j["ref"] = rec.ref;
    j["hyp"] = rec.hyp;
    json nbest = json::array();
    for (size_t i = 0; i < rec.nbest_raw.size(); ++i) {
      nbest.push_back(json{{"text", rec.nbest_text[i]},
                           {"asr_score", rec.nbest_raw[i].asr_logprob},
                           {"lm_score", rec.nbest_raw[i].lm_logprob}});
    }
    j["nbest"] = std::move(nbest);
    j["entities"] = rec.ref_entities;
    out += j.dump();
    out += '\n';
  }
  atomic_write_file(path, out);
}

std::vector<DecodeRecord> read_decodes_jsonl(const std::string& path) {
  std::string content = read_file(path);
  std::vector<DecodeRecord> records;
  size_t pos = 0;
  int64_t line_no = 0;
  while (pos < content.size()) {
    size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string line = content.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw_data(path + ":" + std::to_string(line_no) + ": bad JSON record: " + e.what());
    }
    DecodeRecord rec;
    rec.ref = j.at("ref").get<std::string>();
    rec.hyp = j.at("hyp").get<std::string>();
    if (j.contains("entities")) {
      for (const auto& e : j.at("entities")) rec.ref_entities.push_back(e.get<std::string>());
    }
    if (j.contains("nbest")) {
      for (const auto& h : j.at("nbest")) {
        DecodeHypothesis hyp;
        hyp.asr_logprob = h.value("asr_score", 0.0);
        hyp.lm_logprob = h.value("lm_score", 0.0);
        rec.nbest_raw.push_back(hyp);
        rec.nbest_text.push_back(h.value("text", ""));
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace spft

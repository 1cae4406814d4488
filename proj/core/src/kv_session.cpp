#include "spft/kv_session.hpp"

#include <cblas.h>

#include <cmath>

#include "spft/ops.hpp"

namespace spft {

namespace {

constexpr double kRmsEps = 1e-8;

void rms_norm_row(const double* x, const double* g, double* out, int64_t n) {
  double ss = 0.0;
  for (int64_t i = 0; i < n; ++i) ss += x[i] * x[i];
  double r = 1.0 / std::sqrt(ss / static_cast<double>(n) + kRmsEps);
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] * r * g[i];
}

// out[j] = sum_i x[i] * W[i,j], W row-major [n_in, n_out]
void vec_mat(const double* x, const double* w, double* out, int64_t n_in, int64_t n_out) {
  blas_runtime_init();
  cblas_dgemv(CblasRowMajor, CblasTrans, static_cast<int>(n_in), static_cast<int>(n_out), 1.0, w,
              static_cast<int>(n_out), x, 1, 0.0, out, 1);
}

double gelu_scalar(double v) {
  constexpr double kC = 0.7978845608028654;
  constexpr double kA = 0.044715;
  return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
}

}  // namespace

CausalLMSession::CausalLMSession(const ParameterStore& params, const LmSpec& spec)
    : params_(&params), spec_(spec) {
  k_cache_.resize(static_cast<size_t>(spec.n_layers));
  v_cache_.resize(static_cast<size_t>(spec.n_layers));
  layers_.resize(static_cast<size_t>(spec.n_layers));
  for (int l = 0; l < spec.n_layers; ++l) {
    std::string lp = spec.stack_prefix + "layer" + std::to_string(l) + ".";
    LayerWeights& w = layers_[static_cast<size_t>(l)];
    w.norm_attn = params.at(lp + "attn_norm.g").data().data();
    w.wq = params.at(lp + "attn.wq").data().data();
    w.wk = params.at(lp + "attn.wk").data().data();
    w.wv = params.at(lp + "attn.wv").data().data();
    w.wo = params.at(lp + "attn.wo").data().data();
    w.norm_ff = params.at(lp + "ff_norm.g").data().data();
    w.w1 = params.at(lp + "ff.w1").data().data();
    w.w2 = params.at(lp + "ff.w2").data().data();
  }
  final_norm_ = params.at(spec.stack_prefix + "final_norm.g").data().data();
  embed_ = params.at(spec.embed_name).data().data();
  output_ = params.at(spec.output_name).data().data();
  logits_.assign(static_cast<size_t>(spec.vocab), 0.0);
  size_t e = static_cast<size_t>(spec.width);
  x_.assign(e, 0.0);
  h_.assign(e, 0.0);
  q_.assign(e, 0.0);
  attn_.assign(e, 0.0);
  proj_.assign(e, 0.0);
  ff_.assign(e * static_cast<size_t>(spec.ff_mult), 0.0);
  scores_.assign(64, 0.0);
}

void CausalLMSession::feed_embedding(const double* row) {
  int64_t e = spec_.width;
  int64_t ff = e * spec_.ff_mult;
  int64_t dh = e / spec_.n_heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  double* x = x_.data();
  double* h = h_.data();
  double* q = q_.data();
  double* attn = attn_.data();
  double* proj = proj_.data();
  double* ffbuf = ff_.data();
  std::copy_n(row, e, x);
  int64_t t_new = length_ + 1;
  if (static_cast<size_t>(t_new) > scores_.size()) scores_.resize(scores_.size() * 2);
  double* scores = scores_.data();

  for (int l = 0; l < spec_.n_layers; ++l) {
    const LayerWeights& w = layers_[static_cast<size_t>(l)];
    auto& kc = k_cache_[static_cast<size_t>(l)];
    auto& vc = v_cache_[static_cast<size_t>(l)];

    rms_norm_row(x, w.norm_attn, h, e);
    vec_mat(h, w.wq, q, e, e);
    size_t base = kc.size();
    kc.resize(base + static_cast<size_t>(e));
    vc.resize(base + static_cast<size_t>(e));
    vec_mat(h, w.wk, kc.data() + base, e, e);
    vec_mat(h, w.wv, vc.data() + base, e, e);

    std::fill_n(attn, e, 0.0);
    for (int hd = 0; hd < spec_.n_heads; ++hd) {
      int64_t off = static_cast<int64_t>(hd) * dh;
      double mx = -1e300;
      for (int64_t j = 0; j < t_new; ++j) {
        const double* krow = kc.data() + j * e + off;
        double s = 0.0;
        for (int64_t d = 0; d < dh; ++d) s += q[off + d] * krow[d];
        s *= inv_sqrt;
        scores[j] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (int64_t j = 0; j < t_new; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      double inv_z = 1.0 / z;
      for (int64_t j = 0; j < t_new; ++j) {
        double p = scores[j] * inv_z;
        const double* vrow = vc.data() + j * e + off;
        for (int64_t d = 0; d < dh; ++d) attn[off + d] += p * vrow[d];
      }
    }
    vec_mat(attn, w.wo, proj, e, e);
    for (int64_t i = 0; i < e; ++i) x[i] += proj[i];

    rms_norm_row(x, w.norm_ff, h, e);
    vec_mat(h, w.w1, ffbuf, e, ff);
    for (int64_t i = 0; i < ff; ++i) ffbuf[i] = gelu_scalar(ffbuf[i]);
    vec_mat(ffbuf, w.w2, proj, ff, e);
    for (int64_t i = 0; i < e; ++i) x[i] += proj[i];
  }

  rms_norm_row(x, final_norm_, h, e);
  vec_mat(h, output_, logits_.data(), e, spec_.vocab);
  ++length_;
}

void CausalLMSession::feed_prompt(const Tensor& rows) {
  if (rows.rank() != 2 || rows.dim(1) != spec_.width) {
    throw_dimension("feed_prompt: rows " + shape_str(rows.shape()) + " vs width " +
                    std::to_string(spec_.width));
  }
  for (int64_t r = 0; r < rows.dim(0); ++r) {
    feed_embedding(rows.data().data() + r * spec_.width);
  }
}

void CausalLMSession::feed_token(int id) {
  if (id < 0 || id >= spec_.vocab) {
    throw_bounds("feed_token: id " + std::to_string(id) + " outside vocabulary");
  }
  feed_embedding(embed_ + static_cast<int64_t>(id) * spec_.width);
}

std::vector<double> CausalLMSession::last_log_probs() const {
  std::vector<double> out(logits_);
  log_softmax_inplace(out);
  return out;
}

namespace {

// C[m,n] = A[m,k] * W[k,n]
void mat_mat(const double* a, const double* w, double* c, int64_t m, int64_t k, int64_t n) {
  blas_runtime_init();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, a, static_cast<int>(k), w, static_cast<int>(n), 0.0, c,
              static_cast<int>(n));
}

}  // namespace

BeamBatchSession::BeamBatchSession(const ParameterStore& params, const LmSpec& spec, int max_lanes)
    : params_(&params), spec_(spec), max_lanes_(max_lanes) {
  layers_.resize(static_cast<size_t>(spec.n_layers));
  for (int l = 0; l < spec.n_layers; ++l) {
    std::string lp = spec.stack_prefix + "layer" + std::to_string(l) + ".";
    LayerWeights& w = layers_[static_cast<size_t>(l)];
    w.norm_attn = params.at(lp + "attn_norm.g").data().data();
    w.wq = params.at(lp + "attn.wq").data().data();
    w.wk = params.at(lp + "attn.wk").data().data();
    w.wv = params.at(lp + "attn.wv").data().data();
    w.wo = params.at(lp + "attn.wo").data().data();
    w.norm_ff = params.at(lp + "ff_norm.g").data().data();
    w.w1 = params.at(lp + "ff.w1").data().data();
    w.w2 = params.at(lp + "ff.w2").data().data();
  }
  final_norm_ = params.at(spec.stack_prefix + "final_norm.g").data().data();
  embed_ = params.at(spec.embed_name).data().data();
  output_ = params.at(spec.output_name).data().data();

  k_cache_.assign(static_cast<size_t>(spec.n_layers),
                  std::vector<std::vector<double>>(static_cast<size_t>(max_lanes)));
  v_cache_ = k_cache_;
  logits_.assign(static_cast<size_t>(max_lanes) * spec.vocab, 0.0);

  size_t cap = 64;  // grows with the longest prefill
  size_t e = static_cast<size_t>(spec.width);
  x_.assign(cap * e, 0.0);
  h_.assign(cap * e, 0.0);
  q_.assign(cap * e, 0.0);
  k_.assign(cap * e, 0.0);
  v_.assign(cap * e, 0.0);
  attn_.assign(cap * e, 0.0);
  proj_.assign(cap * e, 0.0);
  ff_.assign(cap * e * static_cast<size_t>(spec.ff_mult), 0.0);
  scores_.assign(256, 0.0);
  row_lane_.assign(cap, 0);
  active_ = 1;
}

const double* BeamBatchSession::lane_logits(int lane) const {
  return logits_.data() + static_cast<int64_t>(lane) * spec_.vocab;
}

void BeamBatchSession::lane_log_probs(int lane, std::vector<double>& out) const {
  const double* lg = lane_logits(lane);
  out.assign(lg, lg + spec_.vocab);
  log_softmax_inplace(out);
}

// Shared batched transformer pass over the rows staged in x_. For a causal
// prefill all rows belong to lane 0 and attend triangularly within the new
// block as well as to the existing cache; for a beam step each row is its own
// lane attending to that lane's cache plus itself.
void BeamBatchSession::forward_rows(int64_t rows, bool causal_prefill) {
  int64_t e = spec_.width;
  int64_t ff_dim = e * spec_.ff_mult;
  int64_t dh = e / spec_.n_heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  auto ensure = [](std::vector<double>& buf, size_t n) {
    if (buf.size() < n) buf.resize(n);
  };
  size_t need = static_cast<size_t>(rows) * static_cast<size_t>(e);
  ensure(x_, need);
  ensure(h_, need);
  ensure(q_, need);
  ensure(k_, need);
  ensure(v_, need);
  ensure(attn_, need);
  ensure(proj_, need);
  ensure(ff_, static_cast<size_t>(rows) * static_cast<size_t>(ff_dim));

  for (int l = 0; l < spec_.n_layers; ++l) {
    const LayerWeights& w = layers_[static_cast<size_t>(l)];
    for (int64_t r = 0; r < rows; ++r) {
      rms_norm_row(x_.data() + r * e, w.norm_attn, h_.data() + r * e, e);
    }
    mat_mat(h_.data(), w.wq, q_.data(), rows, e, e);
    mat_mat(h_.data(), w.wk, k_.data(), rows, e, e);
    mat_mat(h_.data(), w.wv, v_.data(), rows, e, e);

    // park the new K/V rows in their lanes
    for (int64_t r = 0; r < rows; ++r) {
      int lane = row_lane_[static_cast<size_t>(r)];
      auto& kc = k_cache_[static_cast<size_t>(l)][static_cast<size_t>(lane)];
      auto& vc = v_cache_[static_cast<size_t>(l)][static_cast<size_t>(lane)];
      kc.insert(kc.end(), k_.data() + r * e, k_.data() + (r + 1) * e);
      vc.insert(vc.end(), v_.data() + r * e, v_.data() + (r + 1) * e);
    }

    for (int64_t r = 0; r < rows; ++r) {
      int lane = row_lane_[static_cast<size_t>(r)];
      const auto& kc = k_cache_[static_cast<size_t>(l)][static_cast<size_t>(lane)];
      const auto& vc = v_cache_[static_cast<size_t>(l)][static_cast<size_t>(lane)];
      // visible positions: everything already cached for this lane up to and
      // including this row (prefill rows see earlier rows of the same block).
      int64_t visible = causal_prefill ? (length_ + r + 1)
                                       : static_cast<int64_t>(kc.size()) / e;
      if (static_cast<size_t>(visible) > scores_.size()) scores_.resize(2 * static_cast<size_t>(visible));
      double* arow = attn_.data() + r * e;
      std::fill_n(arow, e, 0.0);
      const double* qrow = q_.data() + r * e;
      for (int hd = 0; hd < spec_.n_heads; ++hd) {
        int64_t off = static_cast<int64_t>(hd) * dh;
        double mx = -1e300;
        for (int64_t j = 0; j < visible; ++j) {
          const double* krow = kc.data() + j * e + off;
          double s = 0.0;
          for (int64_t d = 0; d < dh; ++d) s += qrow[off + d] * krow[d];
          s *= inv_sqrt;
          scores_[static_cast<size_t>(j)] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int64_t j = 0; j < visible; ++j) {
          scores_[static_cast<size_t>(j)] = std::exp(scores_[static_cast<size_t>(j)] - mx);
          z += scores_[static_cast<size_t>(j)];
        }
        double inv_z = 1.0 / z;
        for (int64_t j = 0; j < visible; ++j) {
          double p = scores_[static_cast<size_t>(j)] * inv_z;
          const double* vrow = vc.data() + j * e + off;
          for (int64_t d = 0; d < dh; ++d) arow[off + d] += p * vrow[d];
        }
      }
    }

    mat_mat(attn_.data(), w.wo, proj_.data(), rows, e, e);
    for (size_t i = 0; i < static_cast<size_t>(rows) * static_cast<size_t>(e); ++i) x_[i] += proj_[i];

    for (int64_t r = 0; r < rows; ++r) {
      rms_norm_row(x_.data() + r * e, w.norm_ff, h_.data() + r * e, e);
    }
    mat_mat(h_.data(), w.w1, ff_.data(), rows, e, ff_dim);
    for (size_t i = 0; i < static_cast<size_t>(rows) * static_cast<size_t>(ff_dim); ++i) {
      ff_[i] = gelu_scalar(ff_[i]);
    }
    mat_mat(ff_.data(), w.w2, proj_.data(), rows, ff_dim, e);
    for (size_t i = 0; i < static_cast<size_t>(rows) * static_cast<size_t>(e); ++i) x_[i] += proj_[i];
  }

  for (int64_t r = 0; r < rows; ++r) {
    rms_norm_row(x_.data() + r * e, final_norm_, h_.data() + r * e, e);
  }
  if (causal_prefill) {
    // only the last prefill row's logits matter
    vec_mat(h_.data() + (rows - 1) * e, output_, logits_.data(), e, spec_.vocab);
    length_ += rows;
  } else {
    mat_mat(h_.data(), output_, logits_.data(), rows, e, spec_.vocab);
    length_ += 1;
  }
}

void BeamBatchSession::prime(const double* rows, int64_t n_rows) {
  if (n_rows <= 0) return;
  if (active_ != 1) throw_contract("BeamBatchSession: prime after advance");
  int64_t e = spec_.width;
  size_t need = static_cast<size_t>(n_rows) * static_cast<size_t>(e);
  if (x_.size() < need) x_.resize(need);
  if (row_lane_.size() < static_cast<size_t>(n_rows)) row_lane_.resize(static_cast<size_t>(n_rows));
  std::copy_n(rows, need, x_.data());
  for (int64_t r = 0; r < n_rows; ++r) row_lane_[static_cast<size_t>(r)] = 0;
  forward_rows(n_rows, true);
}

void BeamBatchSession::prime_token(int id) {
  if (id < 0 || id >= spec_.vocab) throw_bounds("prime_token: id out of range");
  prime(embed_ + static_cast<int64_t>(id) * spec_.width, 1);
}

void BeamBatchSession::advance(const std::vector<std::pair<int, int>>& next) {
  int64_t lanes = static_cast<int64_t>(next.size());
  if (lanes == 0) return;
  if (lanes > max_lanes_) throw_contract("BeamBatchSession: more children than lanes");
  int64_t e = spec_.width;

  // Gather cache histories: children of the same parent share it; the last
  // child may steal. Work on fresh vectors to allow arbitrary permutations.
  for (int l = 0; l < spec_.n_layers; ++l) {
    auto& kc = k_cache_[static_cast<size_t>(l)];
    auto& vc = v_cache_[static_cast<size_t>(l)];
    std::vector<std::vector<double>> nk(static_cast<size_t>(max_lanes_));
    std::vector<std::vector<double>> nv(static_cast<size_t>(max_lanes_));
    std::vector<int> uses(static_cast<size_t>(max_lanes_), 0);
    for (const auto& [parent, tok] : next) ++uses[static_cast<size_t>(parent)];
    std::vector<int> seen(static_cast<size_t>(max_lanes_), 0);
    for (size_t i = 0; i < next.size(); ++i) {
      int parent = next[i].first;
      if (++seen[static_cast<size_t>(parent)] == uses[static_cast<size_t>(parent)]) {
        nk[i] = std::move(kc[static_cast<size_t>(parent)]);
        nv[i] = std::move(vc[static_cast<size_t>(parent)]);
      } else {
        nk[i] = kc[static_cast<size_t>(parent)];
        nv[i] = vc[static_cast<size_t>(parent)];
      }
    }
    kc = std::move(nk);
    vc = std::move(nv);
  }

  size_t need = static_cast<size_t>(lanes) * static_cast<size_t>(e);
  if (x_.size() < need) x_.resize(need);
  if (row_lane_.size() < static_cast<size_t>(lanes)) row_lane_.resize(static_cast<size_t>(lanes));
  for (int64_t r = 0; r < lanes; ++r) {
    int tok = next[static_cast<size_t>(r)].second;
    if (tok < 0 || tok >= spec_.vocab) throw_bounds("advance: token id out of range");
    std::copy_n(embed_ + static_cast<int64_t>(tok) * e, e, x_.data() + r * e);
    row_lane_[static_cast<size_t>(r)] = static_cast<int>(r);
  }
  active_ = static_cast<int>(lanes);
  forward_rows(lanes, false);
}

}  // namespace spft

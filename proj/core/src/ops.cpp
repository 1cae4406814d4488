#include "spft/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <utility>

extern "C" void openblas_set_num_threads(int);

namespace spft {

namespace {

// BLAS must stay single-threaded: experiment cells parallelize above it, and
// a fixed thread count keeps results byte-reproducible. OpenBLAS also fails
// to identify some virtualized CPUs and falls back to a slow generic kernel,
// so when the CPU advertises AVX-512/AVX2 and no override is set, pick the
// matching kernel family explicitly. Must happen before the first BLAS call.
std::once_flag g_blas_once;

void pick_openblas_core() {
#if defined(__linux__)
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("flags", 0) != 0) continue;
    if (line.find(" avx512f") != std::string::npos) {
      setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
    } else if (line.find(" avx2") != std::string::npos) {
      setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
    }
    break;
  }
#endif
}

}  // namespace

void blas_runtime_init() {
  std::call_once(g_blas_once, [] {
    pick_openblas_core();
    openblas_set_num_threads(1);
  });
}

namespace {

void ensure_single_thread_blas() { blas_runtime_init(); }

bool wants_grad(const TensorImpl& t) { return t.requires_grad || t.backward_fn != nullptr; }

bool any_parent_wants(const std::vector<Tensor>& parents) {
  for (const Tensor& p : parents)
    if (wants_grad(*p.node())) return true;
  return false;
}

std::vector<double>& ensure_grad(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

// Creates the output tensor and, when tracking, registers the backward rule.
Tensor make_op(Shape shape, std::vector<double> data, const char* op,
               std::vector<Tensor> parents, std::function<void(TensorImpl&)> backward_fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  if (grad_enabled() && any_parent_wants(parents)) {
    TensorImpl& impl = *out.node();
    impl.op = op;
    impl.parents.reserve(parents.size());
    for (Tensor& p : parents) impl.parents.push_back(p.node());
    impl.backward_fn = std::move(backward_fn);
  }
  return out;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw_dimension(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

// C += A[m,k] * B[k,n]
void mm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  ensure_single_thread_blas();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, a, static_cast<int>(k), b, static_cast<int>(n), 1.0, c,
              static_cast<int>(n));
}

// dB += A^T[k,m] * dC[m,n]  (A given as [m,k])
void mm_at_acc(const double* a, const double* dc, double* db, int64_t m, int64_t k, int64_t n) {
  ensure_single_thread_blas();
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(k), static_cast<int>(n),
              static_cast<int>(m), 1.0, a, static_cast<int>(k), dc, static_cast<int>(n), 1.0, db,
              static_cast<int>(n));
}

// dA += dC[m,n] * B^T[n,k]  (B given as [k,n])
void mm_bt_acc(const double* dc, const double* b, double* da, int64_t m, int64_t k, int64_t n) {
  ensure_single_thread_blas();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m), static_cast<int>(k),
              static_cast<int>(n), 1.0, dc, static_cast<int>(n), b, static_cast<int>(n), 1.0, da,
              static_cast<int>(k));
}

constexpr double kRmsEps = 1e-8;

}  // namespace

double log_sum_exp(const double* v, int64_t n) {
  double mx = v[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

void log_softmax_inplace(std::vector<double>& row) {
  double lse = log_sum_exp(row.data(), static_cast<int64_t>(row.size()));
  for (double& v : row) v -= lse;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw_dimension("matmul: inner dims differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  mm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);

  NodePtr an = a.node(), bn = b.node();
  return make_op({m, n}, std::move(out), "matmul", {a, b}, [an, bn, m, k, n](TensorImpl& self) {
    const double* dc = self.grad.data();
    if (wants_grad(*an)) mm_bt_acc(dc, bn->data.data(), ensure_grad(*an).data(), m, k, n);
    if (wants_grad(*bn)) mm_at_acc(an->data.data(), dc, ensure_grad(*bn).data(), m, k, n);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw_dimension("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];

  NodePtr an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), "add", {a, b}, [an, bn](TensorImpl& self) {
    if (wants_grad(*an)) {
      auto& g = ensure_grad(*an);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(*bn)) {
      auto& g = ensure_grad(*bn);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw_dimension("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];

  NodePtr an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), "mul", {a, b}, [an, bn](TensorImpl& self) {
    if (wants_grad(*an)) {
      auto& g = ensure_grad(*an);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (wants_grad(*bn)) {
      auto& g = ensure_grad(*bn);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.data());
  for (double& v : out) v *= s;
  NodePtr xn = x.node();
  return make_op(x.shape(), std::move(out), "scale", {x}, [xn, s](TensorImpl& self) {
    if (!wants_grad(*xn)) return;
    auto& g = ensure_grad(*xn);
    for (size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw_dimension("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  int64_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.data());
  const auto& bd = bias.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] += bd[static_cast<size_t>(j)];

  NodePtr xn = x.node(), bn = bias.node();
  return make_op({m, n}, std::move(out), "add_bias", {x, bias}, [xn, bn, m, n](TensorImpl& self) {
    if (wants_grad(*xn)) {
      auto& g = ensure_grad(*xn);
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(*bn)) {
      auto& g = ensure_grad(*bn);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) g[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(i * n + j)];
    }
  });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "embedding_rows");
  int64_t v = table.dim(0), e = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw_bounds("embedding_rows: id " + std::to_string(id) + " outside vocabulary of " + std::to_string(v));
    }
  }
  int64_t t = static_cast<int64_t>(ids.size());
  std::vector<double> out(static_cast<size_t>(t * e));
  const auto& td = table.data();
  for (int64_t i = 0; i < t; ++i) {
    std::copy_n(td.data() + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * e, e, out.data() + i * e);
  }
  NodePtr tn = table.node();
  std::vector<int> ids_copy(ids);
  return make_op({t, e}, std::move(out), "embedding_rows", {table},
                 [tn, ids_copy, e](TensorImpl& self) {
                   if (!wants_grad(*tn)) return;
                   auto& g = ensure_grad(*tn);
                   for (size_t i = 0; i < ids_copy.size(); ++i) {
                     double* dst = g.data() + static_cast<int64_t>(ids_copy[i]) * e;
                     const double* src = self.grad.data() + static_cast<int64_t>(i) * e;
                     for (int64_t j = 0; j < e; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  int64_t m = x.dim(0), n = x.dim(1);
  for (double v : x.data())
    if (!std::isfinite(v)) throw_contract("softmax_rows: non-finite input");
  std::vector<double> out(x.data());
  for (int64_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (int64_t j = 0; j < n; ++j) row[j] /= s;
  }
  NodePtr xn = x.node();
  std::vector<double> probs(out);
  return make_op({m, n}, std::move(out), "softmax_rows", {x}, [xn, probs, m, n](TensorImpl& self) {
    if (!wants_grad(*xn)) return;
    auto& g = ensure_grad(*xn);
    for (int64_t i = 0; i < m; ++i) {
      const double* p = probs.data() + i * n;
      const double* dy = self.grad.data() + i * n;
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += dy[j] * p[j];
      double* gr = g.data() + i * n;
      for (int64_t j = 0; j < n; ++j) gr[j] += p[j] * (dy[j] - dot);
    }
  });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain) {
  require_rank2(x, "rms_norm");
  if (gain.rank() != 1 || gain.dim(0) != x.dim(1)) {
    throw_dimension("rms_norm: gain " + shape_str(gain.shape()) + " does not match " + shape_str(x.shape()));
  }
  int64_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  std::vector<double> inv_rms(static_cast<size_t>(m));
  const auto& xd = x.data();
  const auto& gd = gain.data();
  for (int64_t i = 0; i < m; ++i) {
    const double* row = xd.data() + i * n;
    double ss = 0.0;
    for (int64_t j = 0; j < n; ++j) ss += row[j] * row[j];
    double r = 1.0 / std::sqrt(ss / static_cast<double>(n) + kRmsEps);
    inv_rms[static_cast<size_t>(i)] = r;
    double* orow = out.data() + i * n;
    for (int64_t j = 0; j < n; ++j) orow[j] = row[j] * r * gd[static_cast<size_t>(j)];
  }
  NodePtr xn = x.node(), gn = gain.node();
  return make_op({m, n}, std::move(out), "rms_norm", {x, gain},
                 [xn, gn, inv_rms, m, n](TensorImpl& self) {
                   const auto& xd = xn->data;
                   const auto& gd = gn->data;
                   for (int64_t i = 0; i < m; ++i) {
                     const double* row = xd.data() + i * n;
                     const double* dy = self.grad.data() + i * n;
                     double r = inv_rms[static_cast<size_t>(i)];
                     if (wants_grad(*xn)) {
                       double dot = 0.0;  // sum_j dy_j * g_j * x_j
                       for (int64_t j = 0; j < n; ++j) dot += dy[j] * gd[static_cast<size_t>(j)] * row[j];
                       double* gx = ensure_grad(*xn).data() + i * n;
                       double r3_over_n = r * r * r / static_cast<double>(n);
                       for (int64_t j = 0; j < n; ++j) {
                         gx[j] += r * gd[static_cast<size_t>(j)] * dy[j] - r3_over_n * row[j] * dot;
                       }
                     }
                     if (wants_grad(*gn)) {
                       auto& gg = ensure_grad(*gn);
                       for (int64_t j = 0; j < n; ++j) gg[static_cast<size_t>(j)] += dy[j] * row[j] * r;
                     }
                   }
                 });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(x.data());
  for (double& v : out) {
    double u = kC * (v + kA * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  NodePtr xn = x.node();
  return make_op(x.shape(), std::move(out), "gelu", {x}, [xn](TensorImpl& self) {
    if (!wants_grad(*xn)) return;
    auto& g = ensure_grad(*xn);
    for (size_t i = 0; i < g.size(); ++i) {
      double v = xn->data[i];
      double u = kC * (v + kA * v * v * v);
      double th = std::tanh(u);
      double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * v * v);
      g[i] += self.grad[i] * d;
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw_contract("concat_rows: no inputs");
  int64_t n = parts[0].dim(1);
  int64_t total = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != n) {
      throw_dimension("concat_rows: column mismatch " + shape_str(p.shape()) + " vs cols " + std::to_string(n));
    }
    total += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total * n));
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

  std::vector<NodePtr> nodes;
  std::vector<int64_t> rows;
  for (const Tensor& p : parts) {
    nodes.push_back(p.node());
    rows.push_back(p.dim(0));
  }
  return make_op({total, n}, std::move(out), "concat_rows", parts,
                 [nodes, rows, n](TensorImpl& self) {
                   int64_t offset = 0;
                   for (size_t i = 0; i < nodes.size(); ++i) {
                     if (wants_grad(*nodes[i])) {
                       auto& g = ensure_grad(*nodes[i]);
                       const double* src = self.grad.data() + offset * n;
                       for (size_t j = 0; j < g.size(); ++j) g[j] += src[j];
                     }
                     offset += rows[i];
                   }
                 });
}

Tensor slice_rows(const Tensor& x, int64_t begin, int64_t end) {
  require_rank2(x, "slice_rows");
  int64_t m = x.dim(0), n = x.dim(1);
  if (begin < 0 || end > m || begin > end) {
    throw_bounds("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                 ") invalid for " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin() + begin * n, x.data().begin() + end * n);
  NodePtr xn = x.node();
  return make_op({end - begin, n}, std::move(out), "slice_rows", {x},
                 [xn, begin, n](TensorImpl& self) {
                   if (!wants_grad(*xn)) return;
                   auto& g = ensure_grad(*xn);
                   double* dst = g.data() + begin * n;
                   for (size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
                 });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  NodePtr xn = x.node();
  return make_op({1}, {s}, "sum", {x}, [xn](TensorImpl& self) {
    if (!wants_grad(*xn)) return;
    auto& g = ensure_grad(*xn);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  s *= inv;
  NodePtr xn = x.node();
  return make_op({1}, {s}, "mean", {x}, [xn, inv](TensorImpl& self) {
    if (!wants_grad(*xn)) return;
    auto& g = ensure_grad(*xn);
    for (double& v : g) v += self.grad[0] * inv;
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads, bool causal) {
  require_rank2(q, "attention");
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw_dimension("attention: q/k/v shapes differ: " + shape_str(q.shape()) + " " +
                    shape_str(k.shape()) + " " + shape_str(v.shape()));
  }
  int64_t t = q.dim(0), e = q.dim(1);
  if (n_heads <= 0 || e % n_heads != 0) {
    throw_dimension("attention: width " + std::to_string(e) + " not divisible by " +
                    std::to_string(n_heads) + " heads");
  }
  int64_t dh = e / n_heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs: per head a t x t matrix, saved for backward
  std::vector<double> probs(static_cast<size_t>(n_heads) * t * t, 0.0);
  std::vector<double> out(static_cast<size_t>(t * e), 0.0);
  const auto& qd = q.data();
  const auto& kd = k.data();
  const auto& vd = v.data();

  for (int h = 0; h < n_heads; ++h) {
    int64_t off = static_cast<int64_t>(h) * dh;
    double* hp = probs.data() + static_cast<int64_t>(h) * t * t;
    for (int64_t i = 0; i < t; ++i) {
      int64_t jmax = causal ? i + 1 : t;
      double* prow = hp + i * t;
      const double* qrow = qd.data() + i * e + off;
      double mx = -1e300;
      for (int64_t j = 0; j < jmax; ++j) {
        const double* krow = kd.data() + j * e + off;
        double s = 0.0;
        for (int64_t d = 0; d < dh; ++d) s += qrow[d] * krow[d];
        s *= inv_sqrt;
        prow[j] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (int64_t j = 0; j < jmax; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        z += prow[j];
      }
      double* orow = out.data() + i * e + off;
      for (int64_t j = 0; j < jmax; ++j) {
        prow[j] /= z;
        const double* vrow = vd.data() + j * e + off;
        double p = prow[j];
        for (int64_t d = 0; d < dh; ++d) orow[d] += p * vrow[d];
      }
    }
  }

  NodePtr qn = q.node(), kn = k.node(), vn = v.node();
  return make_op({t, e}, std::move(out), "attention", {q, k, v},
                 [qn, kn, vn, probs, n_heads, t, e, dh, inv_sqrt, causal](TensorImpl& self) {
                   bool wq = wants_grad(*qn), wk = wants_grad(*kn), wv = wants_grad(*vn);
                   if (!wq && !wk && !wv) return;
                   auto& gq = wq ? ensure_grad(*qn) : self.grad;
                   auto& gk = wk ? ensure_grad(*kn) : self.grad;
                   auto& gv = wv ? ensure_grad(*vn) : self.grad;
                   std::vector<double> dp(static_cast<size_t>(t), 0.0);
                   for (int h = 0; h < n_heads; ++h) {
                     int64_t off = static_cast<int64_t>(h) * dh;
                     const double* hp = probs.data() + static_cast<int64_t>(h) * t * t;
                     for (int64_t i = 0; i < t; ++i) {
                       int64_t jmax = causal ? i + 1 : t;
                       const double* prow = hp + i * t;
                       const double* dout = self.grad.data() + i * e + off;
                       // dP_ij = dout_i . V_j ; dS via softmax backward
                       double dot = 0.0;
                       for (int64_t j = 0; j < jmax; ++j) {
                         const double* vrow = vn->data.data() + j * e + off;
                         double s = 0.0;
                         for (int64_t d = 0; d < dh; ++d) s += dout[d] * vrow[d];
                         dp[static_cast<size_t>(j)] = s;
                         dot += s * prow[j];
                       }
                       for (int64_t j = 0; j < jmax; ++j) {
                         double ds = prow[j] * (dp[static_cast<size_t>(j)] - dot) * inv_sqrt;
                         if (wq) {
                           double* gqr = gq.data() + i * e + off;
                           const double* krow = kn->data.data() + j * e + off;
                           for (int64_t d = 0; d < dh; ++d) gqr[d] += ds * krow[d];
                         }
                         if (wk) {
                           double* gkr = gk.data() + j * e + off;
                           const double* qrow = qn->data.data() + i * e + off;
                           for (int64_t d = 0; d < dh; ++d) gkr[d] += ds * qrow[d];
                         }
                         if (wv) {
                           double* gvr = gv.data() + j * e + off;
                           double p = prow[j];
                           for (int64_t d = 0; d < dh; ++d) gvr[d] += p * dout[d];
                         }
                       }
                     }
                   }
                 });
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
  require_rank2(logits, "cross_entropy_rows");
  int64_t t = logits.dim(0), vsz = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != t) {
    throw_dimension("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                    std::to_string(t) + " rows");
  }
  for (double x : logits.data())
    if (!std::isfinite(x)) throw_contract("cross_entropy_rows: non-finite logits");
  int64_t counted = 0;
  for (int y : targets) {
    if (y == -1) continue;
    if (y < 0 || y >= vsz) {
      throw_bounds("cross_entropy_rows: target " + std::to_string(y) + " outside vocabulary of " +
                   std::to_string(vsz));
    }
    ++counted;
  }
  if (counted == 0) {
    // Empty mean: fixed zero loss, detached from the graph.
    return Tensor::scalar(0.0);
  }
  const auto& ld = logits.data();
  double loss = 0.0;
  for (int64_t i = 0; i < t; ++i) {
    int y = targets[static_cast<size_t>(i)];
    if (y == -1) continue;
    const double* row = ld.data() + i * vsz;
    loss += log_sum_exp(row, vsz) - row[y];
  }
  loss /= static_cast<double>(counted);

  NodePtr ln = logits.node();
  std::vector<int> tg(targets);
  return make_op({1}, {loss}, "cross_entropy_rows", {logits},
                 [ln, tg, t, vsz, counted](TensorImpl& self) {
                   if (!wants_grad(*ln)) return;
                   auto& g = ensure_grad(*ln);
                   double scale = self.grad[0] / static_cast<double>(counted);
                   for (int64_t i = 0; i < t; ++i) {
                     int y = tg[static_cast<size_t>(i)];
                     if (y == -1) continue;
                     const double* row = ln->data.data() + i * vsz;
                     double lse = log_sum_exp(row, vsz);
                     double* gr = g.data() + i * vsz;
                     for (int64_t j = 0; j < vsz; ++j) {
                       double p = std::exp(row[j] - lse);
                       gr[j] += scale * (p - (j == y ? 1.0 : 0.0));
                     }
                   }
                 });
}

}  // namespace spft

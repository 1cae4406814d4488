#pragma once

#include <vector>

#include "spft/tensor.hpp"

namespace spft {

// Differentiable primitives. All tensors are 2-D [rows, cols] unless noted;
// every op validates shapes and records a tape node when gradients are on.

Tensor matmul(const Tensor& a, const Tensor& b);            // [m,k]x[k,n] -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);               // same shape
Tensor mul(const Tensor& a, const Tensor& b);               // elementwise
Tensor scale(const Tensor& x, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);       // [m,n] + [n]
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);  // [V,e] -> [T,e]
Tensor softmax_rows(const Tensor& x);
Tensor rms_norm(const Tensor& x, const Tensor& gain);       // per row; gain [n]
Tensor gelu(const Tensor& x);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int64_t begin, int64_t end);
Tensor sum(const Tensor& x);                                 // -> scalar
Tensor mean(const Tensor& x);                                // -> scalar

// Multi-head scaled dot-product self-attention over one sequence.
// q,k,v: [T,e] with e divisible by n_heads; causal masks j > i.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads, bool causal);

// Mean cross-entropy of row logits vs integer targets; target -1 means the
// position is excluded from the mean. All positions ignored -> loss 0 with
// zero gradients.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);

// Value-only helpers (no tape).
void log_softmax_inplace(std::vector<double>& row);
double log_sum_exp(const double* v, int64_t n);

// Pins the BLAS backend to one deterministic single-threaded kernel set.
// Called lazily by every BLAS-backed routine; safe to call repeatedly.
void blas_runtime_init();

}  // namespace spft

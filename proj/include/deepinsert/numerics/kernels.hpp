#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepinsert/numerics/matrix.hpp"
#include "deepinsert/numerics/op_counter.hpp"

namespace deepinsert::numerics {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// All products accumulate each output element sequentially over the inner
// dimension, so identical inputs give bitwise-identical outputs regardless of
// how many rows are in the batch.

// a (m x k) * b (k x n). Adds 2*m*n*k to thread_counter()[tag].
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b, OpTag tag);

// a (m x k) * b^T where b is (n x k).
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b, OpTag tag);

// a^T * b where a is (k x m) and b is (k x n).
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b, OpTag tag);

// Row-wise softmax, stabilised by the row max. Rejects NaN.
template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m);

// Saved statistics for the layer-norm backward pass.
template <typename T>
struct LayerNormCache {
    BasicMatrix<T> normalized;  // (x - mean) * inv_std
    std::vector<T> inv_std;
};

// gain and bias are 1 x cols.
template <typename T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& x, const BasicMatrix<T>& gain, const BasicMatrix<T>& bias, T eps,
                          LayerNormCache<T>* cache = nullptr);

template <typename T>
BasicMatrix<T> layer_norm_backward(const BasicMatrix<T>& grad_out, const BasicMatrix<T>& gain,
                                   const LayerNormCache<T>& cache, BasicMatrix<T>& grad_gain,
                                   BasicMatrix<T>& grad_bias);

inline constexpr double kRopeBase = 10000.0;

// Rotates consecutive dimension pairs inside each head_dim-wide block of every
// row by position * base^(-2j/head_dim). inverse=true applies the transpose
// rotation (used by the backward pass).
template <typename T>
BasicMatrix<T> rope_apply(const BasicMatrix<T>& x, std::span<const std::int64_t> positions, std::size_t head_dim,
                          bool inverse = false);

// Exact (erf) GELU and its derivative.
template <typename T>
BasicMatrix<T> gelu(const BasicMatrix<T>& x);
template <typename T>
BasicMatrix<T> gelu_backward(const BasicMatrix<T>& x, const BasicMatrix<T>& grad_out);

// Mean over rows of -log softmax(logits)[target]. If grad is non-null it
// receives d(loss)/d(logits).
template <typename T>
T cross_entropy(const BasicMatrix<T>& logits, std::span<const std::int64_t> targets, BasicMatrix<T>* grad = nullptr);

struct AdamHyper {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
    BasicMatrix<T> m;
    BasicMatrix<T> v;
};

// One bias-corrected Adam update of param in place. step_index starts at 1.
template <typename T>
void adam_step(const std::string& name, BasicMatrix<T>& param, const BasicMatrix<T>& grad, AdamMoments<T>& moments,
               const AdamHyper& hyper, std::uint64_t step_index);

template <typename T>
bool all_finite(const BasicMatrix<T>& m);

}  // namespace deepinsert::numerics

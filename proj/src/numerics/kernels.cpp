#include "deepinsert/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace deepinsert::numerics {

namespace {

// c += a * b with c zero-initialised by the caller; k loop outermost per row so
// each c(i, j) is summed in ascending k.
template <typename T>
void gemm_rowmajor(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = arow[p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void count(OpTag tag, std::size_t m, std::size_t n, std::size_t k) { thread_counter().add(tag, 2ull * m * n * k); }

}  // namespace

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b, OpTag tag) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul shape mismatch: " + a.shape_string() + " * " + b.shape_string());
    }
    BasicMatrix<T> c(a.rows(), b.cols());
    gemm_rowmajor(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    count(tag, a.rows(), b.cols(), a.cols());
    return c;
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b, OpTag tag) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt shape mismatch: " + a.shape_string() + " * (" + b.shape_string() + ")^T");
    }
    const BasicMatrix<T> bt = transpose(b);
    BasicMatrix<T> c(a.rows(), b.rows());
    gemm_rowmajor(a.data(), bt.data(), c.data(), a.rows(), a.cols(), b.rows());
    count(tag, a.rows(), b.rows(), a.cols());
    return c;
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b, OpTag tag) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn shape mismatch: (" + a.shape_string() + ")^T * " + b.shape_string());
    }
    const BasicMatrix<T> at = transpose(a);
    BasicMatrix<T> c(a.cols(), b.cols());
    gemm_rowmajor(at.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
    count(tag, a.cols(), b.cols(), a.rows());
    return c;
}

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m) {
    BasicMatrix<T> out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto in = m.row(r);
        auto o = out.row(r);
        T mx = -std::numeric_limits<T>::infinity();
        for (T v : in) {
            if (std::isnan(v)) throw NumericError("softmax_rows: NaN in row " + std::to_string(r));
            mx = std::max(mx, v);
        }
        T sum = 0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        const T inv = T{1} / sum;
        for (auto& v : o) v *= inv;
    }
    return out;
}

template <typename T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& x, const BasicMatrix<T>& gain, const BasicMatrix<T>& bias, T eps,
                          LayerNormCache<T>* cache) {
    if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
    if (gain.size() != x.cols() || bias.size() != x.cols()) {
        throw ShapeError("layer_norm: gain/bias length must equal " + std::to_string(x.cols()));
    }
    const std::size_t n = x.cols();
    BasicMatrix<T> out(x.rows(), n);
    if (cache) {
        cache->normalized = BasicMatrix<T>(x.rows(), n);
        cache->inv_std.assign(x.rows(), T{0});
    }
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        T mean = 0;
        for (T v : in) mean += v;
        mean /= static_cast<T>(n);
        T var = 0;
        for (T v : in) var += (v - mean) * (v - mean);
        var /= static_cast<T>(n);
        const T inv_std = T{1} / std::sqrt(var + eps);
        auto o = out.row(r);
        for (std::size_t c = 0; c < n; ++c) {
            const T xhat = (in[c] - mean) * inv_std;
            if (cache) cache->normalized(r, c) = xhat;
            o[c] = xhat * gain.data()[c] + bias.data()[c];
        }
        if (cache) cache->inv_std[r] = inv_std;
    }
    return out;
}

template <typename T>
BasicMatrix<T> layer_norm_backward(const BasicMatrix<T>& grad_out, const BasicMatrix<T>& gain,
                                   const LayerNormCache<T>& cache, BasicMatrix<T>& grad_gain,
                                   BasicMatrix<T>& grad_bias) {
    const std::size_t n = grad_out.cols();
    BasicMatrix<T> dx(grad_out.rows(), n);
    std::vector<T> dxhat(n);
    for (std::size_t r = 0; r < grad_out.rows(); ++r) {
        auto dy = grad_out.row(r);
        auto xhat = cache.normalized.row(r);
        T mean_d = 0;
        T mean_dx = 0;
        for (std::size_t c = 0; c < n; ++c) {
            grad_gain.data()[c] += dy[c] * xhat[c];
            grad_bias.data()[c] += dy[c];
            dxhat[c] = dy[c] * gain.data()[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhat[c];
        }
        mean_d /= static_cast<T>(n);
        mean_dx /= static_cast<T>(n);
        auto o = dx.row(r);
        for (std::size_t c = 0; c < n; ++c) o[c] = cache.inv_std[r] * (dxhat[c] - mean_d - xhat[c] * mean_dx);
    }
    return dx;
}

template <typename T>
BasicMatrix<T> rope_apply(const BasicMatrix<T>& x, std::span<const std::int64_t> positions, std::size_t head_dim,
                          bool inverse) {
    if (head_dim == 0 || head_dim % 2 != 0) {
        throw std::invalid_argument("rope_apply: head_dim must be even, got " + std::to_string(head_dim));
    }
    if (x.cols() % head_dim != 0) {
        throw ShapeError("rope_apply: width " + std::to_string(x.cols()) + " not a multiple of head_dim");
    }
    if (positions.size() != x.rows()) throw ShapeError("rope_apply: positions length != rows");
    const std::size_t half = head_dim / 2;
    std::vector<double> theta(half);
    for (std::size_t j = 0; j < half; ++j) {
        theta[j] = std::pow(kRopeBase, -2.0 * static_cast<double>(j) / static_cast<double>(head_dim));
    }
    BasicMatrix<T> out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto o = out.row(r);
        for (std::size_t j = 0; j < half; ++j) {
            const double angle = static_cast<double>(positions[r]) * theta[j];
            const T cs = static_cast<T>(std::cos(angle));
            const T sn = static_cast<T>(inverse ? -std::sin(angle) : std::sin(angle));
            for (std::size_t base = 0; base < x.cols(); base += head_dim) {
                const T a = in[base + 2 * j];
                const T b = in[base + 2 * j + 1];
                o[base + 2 * j] = a * cs - b * sn;
                o[base + 2 * j + 1] = a * sn + b * cs;
            }
        }
    }
    return out;
}

template <typename T>
BasicMatrix<T> gelu(const BasicMatrix<T>& x) {
    BasicMatrix<T> out(x.rows(), x.cols());
    const T* in = x.data();
    T* o = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        o[i] = T{0.5} * in[i] * (T{1} + std::erf(in[i] * static_cast<T>(std::numbers::sqrt2 / 2)));
    }
    return out;
}

template <typename T>
BasicMatrix<T> gelu_backward(const BasicMatrix<T>& x, const BasicMatrix<T>& grad_out) {
    BasicMatrix<T> out(x.rows(), x.cols());
    const T inv_sqrt2 = static_cast<T>(std::numbers::sqrt2 / 2);
    const T inv_sqrt_2pi = static_cast<T>(std::numbers::inv_sqrtpi * std::numbers::sqrt2 / 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x.data()[i];
        const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * v * v);
        out.data()[i] = grad_out.data()[i] * (cdf + v * pdf);
    }
    return out;
}

template <typename T>
T cross_entropy(const BasicMatrix<T>& logits, std::span<const std::int64_t> targets, BasicMatrix<T>* grad) {
    if (targets.size() != logits.rows()) throw ShapeError("cross_entropy: one target per row required");
    if (grad) *grad = BasicMatrix<T>(logits.rows(), logits.cols());
    if (logits.rows() == 0) return T{0};
    T total = 0;
    const T inv_rows = T{1} / static_cast<T>(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols()) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside vocab of " +
                                    std::to_string(logits.cols()));
        }
        auto row = logits.row(r);
        T mx = *std::max_element(row.begin(), row.end());
        T sum = 0;
        for (T v : row) sum += std::exp(v - mx);
        const T log_z = mx + std::log(sum);
        total += log_z - row[static_cast<std::size_t>(t)];
        if (grad) {
            auto g = grad->row(r);
            for (std::size_t c = 0; c < row.size(); ++c) g[c] = std::exp(row[c] - log_z) * inv_rows;
            g[static_cast<std::size_t>(t)] -= inv_rows;
        }
    }
    return total * inv_rows;
}

template <typename T>
void adam_step(const std::string& name, BasicMatrix<T>& param, const BasicMatrix<T>& grad, AdamMoments<T>& moments,
               const AdamHyper& hyper, std::uint64_t step_index) {
    if (step_index < 1) throw std::invalid_argument("adam_step: step_index starts at 1");
    if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
        throw ShapeError("adam_step: gradient shape mismatch for " + name);
    }
    if (moments.m.size() != param.size()) moments.m = BasicMatrix<T>(param.rows(), param.cols());
    if (moments.v.size() != param.size()) moments.v = BasicMatrix<T>(param.rows(), param.cols());
    if (!all_finite(grad)) throw NumericError("adam_step: non-finite gradient for parameter " + name);

    const double t = static_cast<double>(step_index);
    const T b1 = static_cast<T>(hyper.beta1);
    const T b2 = static_cast<T>(hyper.beta2);
    const T corr1 = static_cast<T>(1.0 - std::pow(hyper.beta1, t));
    const T corr2 = static_cast<T>(1.0 - std::pow(hyper.beta2, t));
    const T lr = static_cast<T>(hyper.lr);
    const T eps = static_cast<T>(hyper.eps);
    T* p = param.data();
    T* m = moments.m.data();
    T* v = moments.v.data();
    const T* g = grad.data();
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = b1 * m[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        const T mhat = m[i] / corr1;
        const T vhat = v[i] / corr2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

template <typename T>
bool all_finite(const BasicMatrix<T>& m) {
    for (T v : m.values())
        if (!std::isfinite(v)) return false;
    return true;
}

#define DEEPINSERT_INSTANTIATE_KERNELS(T)                                                                        \
    template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&, OpTag);                         \
    template BasicMatrix<T> matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&, OpTag);                      \
    template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&, OpTag);                      \
    template BasicMatrix<T> softmax_rows(const BasicMatrix<T>&);                                                 \
    template BasicMatrix<T> layer_norm(const BasicMatrix<T>&, const BasicMatrix<T>&, const BasicMatrix<T>&, T,   \
                                       LayerNormCache<T>*);                                                      \
    template BasicMatrix<T> layer_norm_backward(const BasicMatrix<T>&, const BasicMatrix<T>&,                    \
                                                const LayerNormCache<T>&, BasicMatrix<T>&, BasicMatrix<T>&);     \
    template BasicMatrix<T> rope_apply(const BasicMatrix<T>&, std::span<const std::int64_t>, std::size_t, bool); \
    template BasicMatrix<T> gelu(const BasicMatrix<T>&);                                                         \
    template BasicMatrix<T> gelu_backward(const BasicMatrix<T>&, const BasicMatrix<T>&);                         \
    template T cross_entropy(const BasicMatrix<T>&, std::span<const std::int64_t>, BasicMatrix<T>*);             \
    template void adam_step(const std::string&, BasicMatrix<T>&, const BasicMatrix<T>&, AdamMoments<T>&,         \
                            const AdamHyper&, std::uint64_t);                                                    \
    template bool all_finite(const BasicMatrix<T>&);

DEEPINSERT_INSTANTIATE_KERNELS(float)
DEEPINSERT_INSTANTIATE_KERNELS(double)

}  // namespace deepinsert::numerics

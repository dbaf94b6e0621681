#include "deepinsert/model/block.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace deepinsert::model {

using numerics::OpTag;

template <typename T>
void BasicHiddenState<T>::validate() const {
    if (activations.rows() != positions.size() || segments.size() != positions.size()) {
        throw std::invalid_argument("hidden state: activations/positions/segments length mismatch");
    }
    for (std::size_t i = 1; i < positions.size(); ++i) {
        if (positions[i] <= positions[i - 1]) {
            throw std::invalid_argument("hidden state: positions must be strictly increasing (row " +
                                        std::to_string(i) + ")");
        }
    }
}

namespace {

// Causal softmax over scaled scores; entries whose key position is after the
// query position are exactly zero.
template <typename T>
BasicMatrix<T> causal_softmax(const BasicMatrix<T>& scores, T scale, const std::vector<std::int64_t>& query_pos,
                              const std::vector<std::int64_t>& key_pos) {
    BasicMatrix<T> probs(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto s = scores.row(i);
        auto p = probs.row(i);
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (key_pos[j] <= query_pos[i]) mx = std::max(mx, s[j] * scale);
        }
        T sum = 0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (key_pos[j] <= query_pos[i]) {
                p[j] = std::exp(s[j] * scale - mx);
                sum += p[j];
            }
        }
        const T inv = T{1} / sum;
        for (std::size_t j = 0; j < s.size(); ++j) p[j] *= inv;
    }
    return probs;
}

}  // namespace

template <typename T>
BasicHiddenState<T> block_forward(const ModelConfig& config, const BasicLayerWeights<T>& w,
                                  const BasicHiddenState<T>& state, BasicLayerKV<T>* cache, BlockTape<T>* tape,
                                  std::vector<BasicMatrix<T>>* head_probs) {
    state.validate();
    if (state.activations.cols() != config.d_model) {
        throw numerics::ShapeError("block_forward: state width " + std::to_string(state.activations.cols()) +
                                   " != d_model " + std::to_string(config.d_model));
    }
    if (cache && cache->rows() > 0 && state.rows() > 0 && cache->positions.back() >= state.positions.front()) {
        throw std::invalid_argument("block_forward: cached position " + std::to_string(cache->positions.back()) +
                                    " does not precede new position " + std::to_string(state.positions.front()));
    }
    const std::size_t rows = state.rows();
    const std::size_t dh = config.head_dim();
    const T eps = static_cast<T>(config.norm_eps);

    numerics::LayerNormCache<T> ln1_cache;
    BasicMatrix<T> h1 =
        numerics::layer_norm(state.activations, w.ln1_gain, w.ln1_bias, eps, tape ? &ln1_cache : nullptr);
    BasicMatrix<T> q = numerics::matmul(h1, w.wq, OpTag::projection);
    BasicMatrix<T> k = numerics::matmul(h1, w.wk, OpTag::projection);
    BasicMatrix<T> v = numerics::matmul(h1, w.wv, OpTag::projection);
    q = numerics::rope_apply(q, std::span<const std::int64_t>(state.positions), dh);
    k = numerics::rope_apply(k, std::span<const std::int64_t>(state.positions), dh);

    const BasicMatrix<T>* keys = &k;
    const BasicMatrix<T>* values = &v;
    const std::vector<std::int64_t>* key_pos = &state.positions;
    if (cache) {
        cache->keys = numerics::vstack(cache->keys, k);
        cache->values = numerics::vstack(cache->values, v);
        cache->positions.insert(cache->positions.end(), state.positions.begin(), state.positions.end());
        cache->segments.insert(cache->segments.end(), state.segments.begin(), state.segments.end());
        keys = &cache->keys;
        values = &cache->values;
        key_pos = &cache->positions;
    }

    const T scale = T{1} / std::sqrt(static_cast<T>(dh));
    BasicMatrix<T> concat(rows, config.d_model);
    if (head_probs) head_probs->clear();
    if (tape) tape->probs.clear();
    for (std::size_t h = 0; h < config.n_heads; ++h) {
        const BasicMatrix<T> qh = numerics::slice_cols(q, h * dh, (h + 1) * dh);
        const BasicMatrix<T> kh = numerics::slice_cols(*keys, h * dh, (h + 1) * dh);
        const BasicMatrix<T> vh = numerics::slice_cols(*values, h * dh, (h + 1) * dh);
        const BasicMatrix<T> scores = numerics::matmul_nt(qh, kh, OpTag::attention_score);
        BasicMatrix<T> probs = causal_softmax(scores, scale, state.positions, *key_pos);
        const BasicMatrix<T> out = numerics::matmul(probs, vh, OpTag::attention_value);
        numerics::write_cols(concat, out, h * dh);
        if (head_probs) head_probs->push_back(probs);
        if (tape) tape->probs.push_back(std::move(probs));
    }

    BasicMatrix<T> x2 = numerics::matmul(concat, w.wo, OpTag::output_projection);
    numerics::add_inplace(x2, state.activations);

    numerics::LayerNormCache<T> ln2_cache;
    BasicMatrix<T> h2 = numerics::layer_norm(x2, w.ln2_gain, w.ln2_bias, eps, tape ? &ln2_cache : nullptr);
    BasicMatrix<T> ff_pre = numerics::matmul(h2, w.w_ff1, OpTag::feed_forward);
    BasicMatrix<T> ff_act = numerics::gelu(ff_pre);
    BasicMatrix<T> y = numerics::matmul(ff_act, w.w_ff2, OpTag::feed_forward);
    numerics::add_inplace(y, x2);

    if (tape) {
        tape->input = state.activations;
        tape->ln1 = std::move(ln1_cache);
        tape->h1 = std::move(h1);
        tape->q = std::move(q);
        tape->k = std::move(k);
        tape->v = std::move(v);
        tape->attn_concat = std::move(concat);
        tape->ln2 = std::move(ln2_cache);
        tape->h2 = std::move(h2);
        tape->ff_pre = std::move(ff_pre);
        tape->ff_act = std::move(ff_act);
        tape->positions = state.positions;
    }
    return BasicHiddenState<T>{std::move(y), state.positions, state.segments};
}

template <typename T>
BasicMatrix<T> block_backward(const ModelConfig& config, const BasicLayerWeights<T>& w, const BlockTape<T>& tape,
                              const BasicMatrix<T>& grad_out, BasicLayerWeights<T>& grads) {
    using numerics::matmul;
    using numerics::matmul_nt;
    using numerics::matmul_tn;
    constexpr OpTag bw = OpTag::backward;
    const std::size_t rows = grad_out.rows();
    const std::size_t dh = config.head_dim();

    // Feed-forward branch.
    numerics::add_inplace(grads.w_ff2, matmul_tn(tape.ff_act, grad_out, bw));
    const BasicMatrix<T> d_act = matmul_nt(grad_out, w.w_ff2, bw);
    const BasicMatrix<T> d_pre = numerics::gelu_backward(tape.ff_pre, d_act);
    numerics::add_inplace(grads.w_ff1, matmul_tn(tape.h2, d_pre, bw));
    const BasicMatrix<T> d_h2 = matmul_nt(d_pre, w.w_ff1, bw);
    BasicMatrix<T> d_x2 = numerics::layer_norm_backward(d_h2, w.ln2_gain, tape.ln2, grads.ln2_gain, grads.ln2_bias);
    numerics::add_inplace(d_x2, grad_out);

    // Attention branch.
    numerics::add_inplace(grads.wo, matmul_tn(tape.attn_concat, d_x2, bw));
    const BasicMatrix<T> d_concat = matmul_nt(d_x2, w.wo, bw);
    const T scale = T{1} / std::sqrt(static_cast<T>(dh));
    BasicMatrix<T> dq(rows, config.d_model), dk(rows, config.d_model), dv(rows, config.d_model);
    for (std::size_t h = 0; h < config.n_heads; ++h) {
        const BasicMatrix<T>& probs = tape.probs[h];
        const BasicMatrix<T> d_out = numerics::slice_cols(d_concat, h * dh, (h + 1) * dh);
        const BasicMatrix<T> qh = numerics::slice_cols(tape.q, h * dh, (h + 1) * dh);
        const BasicMatrix<T> kh = numerics::slice_cols(tape.k, h * dh, (h + 1) * dh);
        const BasicMatrix<T> vh = numerics::slice_cols(tape.v, h * dh, (h + 1) * dh);
        const BasicMatrix<T> d_probs = matmul_nt(d_out, vh, bw);
        numerics::write_cols(dv, matmul_tn(probs, d_out, bw), h * dh);
        BasicMatrix<T> d_scores(probs.rows(), probs.cols());
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            auto p = probs.row(i);
            auto dp = d_probs.row(i);
            T dot = 0;
            for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * dp[j];
            auto ds = d_scores.row(i);
            for (std::size_t j = 0; j < p.size(); ++j) ds[j] = p[j] * (dp[j] - dot) * scale;
        }
        numerics::write_cols(dq, matmul(d_scores, kh, bw), h * dh);
        numerics::write_cols(dk, matmul_tn(d_scores, qh, bw), h * dh);
    }
    const std::span<const std::int64_t> pos(tape.positions);
    const BasicMatrix<T> dq_pre = numerics::rope_apply(dq, pos, dh, /*inverse=*/true);
    const BasicMatrix<T> dk_pre = numerics::rope_apply(dk, pos, dh, /*inverse=*/true);
    numerics::add_inplace(grads.wq, matmul_tn(tape.h1, dq_pre, bw));
    numerics::add_inplace(grads.wk, matmul_tn(tape.h1, dk_pre, bw));
    numerics::add_inplace(grads.wv, matmul_tn(tape.h1, dv, bw));
    BasicMatrix<T> d_h1 = matmul_nt(dq_pre, w.wq, bw);
    numerics::add_inplace(d_h1, matmul_nt(dk_pre, w.wk, bw));
    numerics::add_inplace(d_h1, matmul_nt(dv, w.wv, bw));
    BasicMatrix<T> d_x = numerics::layer_norm_backward(d_h1, w.ln1_gain, tape.ln1, grads.ln1_gain, grads.ln1_bias);
    numerics::add_inplace(d_x, d_x2);
    return d_x;
}

template struct BasicHiddenState<float>;
template struct BasicHiddenState<double>;
template BasicHiddenState<float> block_forward(const ModelConfig&, const BasicLayerWeights<float>&,
                                               const BasicHiddenState<float>&, BasicLayerKV<float>*, BlockTape<float>*,
                                               std::vector<BasicMatrix<float>>*);
template BasicHiddenState<double> block_forward(const ModelConfig&, const BasicLayerWeights<double>&,
                                                const BasicHiddenState<double>&, BasicLayerKV<double>*,
                                                BlockTape<double>*, std::vector<BasicMatrix<double>>*);
template BasicMatrix<float> block_backward(const ModelConfig&, const BasicLayerWeights<float>&, const BlockTape<float>&,
                                           const BasicMatrix<float>&, BasicLayerWeights<float>&);
template BasicMatrix<double> block_backward(const ModelConfig&, const BasicLayerWeights<double>&,
                                            const BlockTape<double>&, const BasicMatrix<double>&,
                                            BasicLayerWeights<double>&);

}  // namespace deepinsert::model

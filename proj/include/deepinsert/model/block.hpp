#pragma once

#include <cstdint>
#include <vector>

#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"
#include "deepinsert/numerics/kernels.hpp"

namespace deepinsert::model {

enum class Segment : std::uint8_t { language, multimodal };

// Residual-stream rows with their global positions and segment tags.
template <typename T>
struct BasicHiddenState {
    BasicMatrix<T> activations;  // rows x d_model
    std::vector<std::int64_t> positions;
    std::vector<Segment> segments;

    std::size_t rows() const { return positions.size(); }
    // Throws if positions are not strictly increasing or lengths disagree.
    void validate() const;
};

// Keys (after rotary) and values a layer has seen, ordered by position.
template <typename T>
struct BasicLayerKV {
    BasicMatrix<T> keys;
    BasicMatrix<T> values;
    std::vector<std::int64_t> positions;
    std::vector<Segment> segments;

    std::size_t rows() const { return positions.size(); }
};

// Activations saved by block_forward for block_backward.
template <typename T>
struct BlockTape {
    BasicMatrix<T> input;
    numerics::LayerNormCache<T> ln1;
    BasicMatrix<T> h1;
    BasicMatrix<T> q, k, v;             // q, k already rotated
    std::vector<BasicMatrix<T>> probs;  // one rows x rows matrix per head
    BasicMatrix<T> attn_concat;
    numerics::LayerNormCache<T> ln2;
    BasicMatrix<T> h2;
    BasicMatrix<T> ff_pre;  // before GELU
    BasicMatrix<T> ff_act;  // after GELU
    std::vector<std::int64_t> positions;
};

// Pre-norm attention (rotary q/k, causal by position) plus residual, then
// pre-norm GELU feed-forward plus residual. With a cache, the new rows attend
// to cached rows as well and their K/V are appended. Score and value products
// cover the full query x key block; masked entries get probability exactly 0.
// head_probs, if given, receives one (rows x keys) matrix per head with keys
// ordered cache-first.
template <typename T>
BasicHiddenState<T> block_forward(const ModelConfig& config, const BasicLayerWeights<T>& weights,
                                  const BasicHiddenState<T>& state, BasicLayerKV<T>* cache = nullptr,
                                  BlockTape<T>* tape = nullptr, std::vector<BasicMatrix<T>>* head_probs = nullptr);

// Accumulates parameter gradients into grads and returns d(loss)/d(input).
// Only valid for tapes recorded without a cache.
template <typename T>
BasicMatrix<T> block_backward(const ModelConfig& config, const BasicLayerWeights<T>& weights, const BlockTape<T>& tape,
                              const BasicMatrix<T>& grad_out, BasicLayerWeights<T>& grads);

using HiddenState = BasicHiddenState<float>;
using LayerKV = BasicLayerKV<float>;

}  // namespace deepinsert::model

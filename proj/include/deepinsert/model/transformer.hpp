#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepinsert/model/block.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"

namespace deepinsert::model {

// Rows of the token embedding table, all tagged language.
template <typename T>
BasicHiddenState<T> embed(std::span<const std::int64_t> tokens, std::span<const std::int64_t> positions,
                          const BasicWeights<T>& weights, const ModelConfig& config);

// Saved state for the output-head backward pass.
template <typename T>
struct HeadTape {
    BasicMatrix<T> hidden;  // selected rows before the final norm
    numerics::LayerNormCache<T> norm;
    BasicMatrix<T> normed;
};

// Final norm then tied LM head over the given rows of state.
template <typename T>
BasicMatrix<T> output_logits(const BasicHiddenState<T>& state, std::span<const std::size_t> rows,
                             const BasicWeights<T>& weights, const ModelConfig& config, HeadTape<T>* tape = nullptr);

// Returns d(loss)/d(selected hidden rows); accumulates into the embedding,
// final gain and final bias gradients.
template <typename T>
BasicMatrix<T> output_logits_backward(const HeadTape<T>& tape, const BasicMatrix<T>& grad_logits,
                                      const BasicWeights<T>& weights, BasicWeights<T>& grads);

// Conventional architecture: input holds every token (language and
// multimodal) from layer 0. Runs every layer over the full sequence and returns logits for rows
// (defaults to the last row).
numerics::Matrix baseline_forward(const HiddenState& input, const Weights& weights, const ModelConfig& config,
                                  std::span<const std::size_t> rows = {});

std::vector<numerics::Matrix> baseline_forward_batch(const std::vector<HiddenState>& inputs, const Weights& weights,
                                                     const ModelConfig& config);

}  // namespace deepinsert::model

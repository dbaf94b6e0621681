#pragma once

#include <cstdint>
#include <vector>

#include "deepinsert/insertion/layout.hpp"
#include "deepinsert/modality/adapter.hpp"
#include "deepinsert/modality/encoder.hpp"
#include "deepinsert/modality/grid_task.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"

namespace deepinsert::training {

using numerics::BasicMatrix;

// One grid-QA prompt in trainable form.
template <typename T>
struct SampleTensors {
    std::vector<std::int64_t> text_tokens;
    std::vector<std::int64_t> text_positions;
    BasicMatrix<T> features;  // frozen encoder output, one row per cell
    std::int64_t mm_begin = 0;
    // Next-token label per text row; only the last row (whose label is the
    // answer) is scored.
    std::vector<std::int64_t> labels;

    std::int64_t answer() const { return labels.back(); }
};

template <typename T>
SampleTensors<T> make_sample_tensors(const modality::GridSample& sample, const modality::FrozenEncoder& encoder);

// Prompt layout for inference: adapter output placed in the multimodal slot.
insertion::PromptLayout make_layout(const modality::GridSample& sample, const modality::FrozenEncoder& encoder,
                                    const modality::Adapter& adapter, const model::ModelConfig& config);

template <typename T>
struct ModelGrads {
    model::BasicWeights<T> weights;
    modality::BasicAdapter<T> adapter;
};

template <typename T>
ModelGrads<T> zero_grads(const model::ModelConfig& config, const modality::BasicAdapter<T>& adapter_shape);

// Next-token cross-entropy on the answer, predicted at the last prompt token,
// for a model with insertion layer config.insert_layer. With grads non-null,
// d(loss)/d(param) is added into it: through the deep layers into the adapter
// and through every layer into the language-path weights.
template <typename T>
T sample_loss(const model::BasicWeights<T>& weights, const modality::BasicAdapter<T>& adapter,
              const model::ModelConfig& config, const SampleTensors<T>& sample, ModelGrads<T>* grads = nullptr);

}  // namespace deepinsert::training

#include "deepinsert/training/objective.hpp"

#include "deepinsert/model/block.hpp"
#include "deepinsert/model/transformer.hpp"

namespace deepinsert::training {

template <typename T>
SampleTensors<T> make_sample_tensors(const modality::GridSample& sample, const modality::FrozenEncoder& encoder) {
    SampleTensors<T> out;
    const auto tmpl = sample.prompt_template();
    // [bos, image, question...]: slot at position 1, L_mm = grid_size^2.
    const auto mm_len = static_cast<std::int64_t>(sample.cells.size());
    out.mm_begin = 1;
    out.text_tokens.push_back(tmpl[0]);
    out.text_positions.push_back(0);
    for (std::size_t i = 2; i < tmpl.size(); ++i) {
        out.text_tokens.push_back(tmpl[i]);
        out.text_positions.push_back(static_cast<std::int64_t>(i) - 1 + mm_len);
    }
    out.labels.assign(out.text_tokens.begin() + 1, out.text_tokens.end());
    out.labels.push_back(sample.answer_token);
    out.features = numerics::matrix_cast<T>(encoder.encode(sample));
    return out;
}

insertion::PromptLayout make_layout(const modality::GridSample& sample, const modality::FrozenEncoder& encoder,
                                    const modality::Adapter& adapter, const model::ModelConfig& config) {
    const auto tmpl = sample.prompt_template();
    return insertion::segment_prompt(tmpl, modality::GridVocab::image, modality::adapt(encoder.encode(sample), adapter),
                                     config.d_model);
}

template <typename T>
ModelGrads<T> zero_grads(const model::ModelConfig& config, const modality::BasicAdapter<T>& adapter_shape) {
    return {model::zero_weights<T>(config),
            modality::zero_adapter<T>(adapter_shape.d_enc(), adapter_shape.d_hidden(), adapter_shape.d_model())};
}

template <typename T>
T sample_loss(const model::BasicWeights<T>& weights, const modality::BasicAdapter<T>& adapter,
              const model::ModelConfig& config, const SampleTensors<T>& sample, ModelGrads<T>* grads) {
    const std::size_t n_di = config.insert_layer;
    const std::size_t n_layers = config.n_layers;
    std::vector<model::BlockTape<T>> tapes(n_layers);

    model::BasicHiddenState<T> state =
        model::embed(std::span<const std::int64_t>(sample.text_tokens),
                     std::span<const std::int64_t>(sample.text_positions), weights, config);
    for (std::size_t l = 0; l < n_di; ++l) {
        state = model::block_forward<T>(config, weights.layers[l], state, nullptr, grads ? &tapes[l] : nullptr);
    }

    modality::AdapterTape<T> adapter_tape;
    std::size_t n_pre = 0;
    while (n_pre < state.rows() && state.positions[n_pre] < sample.mm_begin) ++n_pre;
    const bool inserted = n_di < n_layers;
    if (inserted) {
        BasicMatrix<T> mm = modality::adapt(sample.features, adapter, grads ? &adapter_tape : nullptr);
        state = insertion::splice_multimodal(state, mm, sample.mm_begin);
    }
    for (std::size_t l = n_di; l < n_layers; ++l) {
        state = model::block_forward<T>(config, weights.layers[l], state, nullptr, grads ? &tapes[l] : nullptr);
    }

    const std::size_t last = state.rows() - 1;
    model::HeadTape<T> head_tape;
    BasicMatrix<T> logits = model::output_logits(state, std::span<const std::size_t>(&last, 1), weights, config,
                                                 grads ? &head_tape : nullptr);
    BasicMatrix<T> d_logits;
    const std::int64_t answer = sample.answer();
    const T loss =
        numerics::cross_entropy(logits, std::span<const std::int64_t>(&answer, 1), grads ? &d_logits : nullptr);
    if (!grads) return loss;

    BasicMatrix<T> d_state(state.rows(), config.d_model);
    {
        const BasicMatrix<T> d_last = model::output_logits_backward(head_tape, d_logits, weights, grads->weights);
        std::copy(d_last.row(0).begin(), d_last.row(0).end(), d_state.row(last).begin());
    }
    for (std::size_t l = n_layers; l-- > n_di;) {
        d_state = model::block_backward(config, weights.layers[l], tapes[l], d_state, grads->weights.layers[l]);
    }
    if (inserted) {
        const std::size_t mm_len = sample.features.rows();
        BasicMatrix<T> d_mm = numerics::slice_rows(d_state, n_pre, n_pre + mm_len);
        modality::adapt_backward(adapter_tape, d_mm, adapter, grads->adapter);
        d_state = numerics::vstack(numerics::slice_rows(d_state, 0, n_pre),
                                   numerics::slice_rows(d_state, n_pre + mm_len, d_state.rows()));
    }
    for (std::size_t l = n_di; l-- > 0;) {
        d_state = model::block_backward(config, weights.layers[l], tapes[l], d_state, grads->weights.layers[l]);
    }
    for (std::size_t i = 0; i < sample.text_tokens.size(); ++i) {
        auto dst = grads->weights.token_embedding.row(static_cast<std::size_t>(sample.text_tokens[i]));
        auto src = d_state.row(i);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
    return loss;
}

template SampleTensors<float> make_sample_tensors(const modality::GridSample&, const modality::FrozenEncoder&);
template SampleTensors<double> make_sample_tensors(const modality::GridSample&, const modality::FrozenEncoder&);
template ModelGrads<float> zero_grads(const model::ModelConfig&, const modality::BasicAdapter<float>&);
template ModelGrads<double> zero_grads(const model::ModelConfig&, const modality::BasicAdapter<double>&);
template float sample_loss(const model::BasicWeights<float>&, const modality::BasicAdapter<float>&,
                           const model::ModelConfig&, const SampleTensors<float>&, ModelGrads<float>*);
template double sample_loss(const model::BasicWeights<double>&, const modality::BasicAdapter<double>&,
                            const model::ModelConfig&, const SampleTensors<double>&, ModelGrads<double>*);

}  // namespace deepinsert::training

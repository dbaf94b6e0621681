#include "deepinsert/model/transformer.hpp"

#include <stdexcept>

namespace deepinsert::model {

using numerics::OpTag;

template <typename T>
BasicHiddenState<T> embed(std::span<const std::int64_t> tokens, std::span<const std::int64_t> positions,
                          const BasicWeights<T>& weights, const ModelConfig& config) {
    if (tokens.size() != positions.size()) throw std::invalid_argument("embed: tokens/positions length mismatch");
    BasicHiddenState<T> state;
    state.activations = BasicMatrix<T>(tokens.size(), config.d_model);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= config.vocab_size) {
            throw std::out_of_range("embed: token " + std::to_string(tokens[i]) + " outside vocab of " +
                                    std::to_string(config.vocab_size));
        }
        if (positions[i] < 0 || static_cast<std::size_t>(positions[i]) >= config.max_positions) {
            throw std::out_of_range("embed: position " + std::to_string(positions[i]) + " outside [0, " +
                                    std::to_string(config.max_positions) + ")");
        }
        auto src = weights.token_embedding.row(static_cast<std::size_t>(tokens[i]));
        std::copy(src.begin(), src.end(), state.activations.row(i).begin());
    }
    state.positions.assign(positions.begin(), positions.end());
    state.segments.assign(tokens.size(), Segment::language);
    return state;
}

template <typename T>
BasicMatrix<T> output_logits(const BasicHiddenState<T>& state, std::span<const std::size_t> rows,
                             const BasicWeights<T>& weights, const ModelConfig& config, HeadTape<T>* tape) {
    BasicMatrix<T> hidden(rows.size(), config.d_model);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= state.rows()) throw std::out_of_range("output_logits: row outside state");
        auto src = state.activations.row(rows[i]);
        std::copy(src.begin(), src.end(), hidden.row(i).begin());
    }
    numerics::LayerNormCache<T> norm_cache;
    BasicMatrix<T> normed = numerics::layer_norm(hidden, weights.final_gain, weights.final_bias,
                                                 static_cast<T>(config.norm_eps), tape ? &norm_cache : nullptr);
    BasicMatrix<T> logits = numerics::matmul_nt(normed, weights.token_embedding, OpTag::head);
    if (tape) {
        tape->hidden = std::move(hidden);
        tape->norm = std::move(norm_cache);
        tape->normed = std::move(normed);
    }
    return logits;
}

template <typename T>
BasicMatrix<T> output_logits_backward(const HeadTape<T>& tape, const BasicMatrix<T>& grad_logits,
                                      const BasicWeights<T>& weights, BasicWeights<T>& grads) {
    constexpr OpTag bw = OpTag::backward;
    numerics::add_inplace(grads.token_embedding, numerics::matmul_tn(grad_logits, tape.normed, bw));
    const BasicMatrix<T> d_normed = numerics::matmul(grad_logits, weights.token_embedding, bw);
    return numerics::layer_norm_backward(d_normed, weights.final_gain, tape.norm, grads.final_gain, grads.final_bias);
}

numerics::Matrix baseline_forward(const HiddenState& input, const Weights& weights, const ModelConfig& config,
                                  std::span<const std::size_t> rows) {
    config.validate();
    if (input.rows() == 0) throw std::invalid_argument("baseline_forward: empty input");
    if (static_cast<std::size_t>(input.positions.back()) >= config.max_positions) {
        throw std::out_of_range("baseline_forward: sequence exceeds max_positions " +
                                std::to_string(config.max_positions));
    }
    HiddenState state = input;
    for (std::size_t layer = 0; layer < config.n_layers; ++layer) {
        state = block_forward(config, weights.layers[layer], state);
    }
    const std::size_t last = state.rows() - 1;
    if (rows.empty()) rows = std::span<const std::size_t>(&last, 1);
    return output_logits(state, rows, weights, config);
}

std::vector<numerics::Matrix> baseline_forward_batch(const std::vector<HiddenState>& inputs, const Weights& weights,
                                                     const ModelConfig& config) {
    std::vector<numerics::Matrix> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs) out.push_back(baseline_forward(in, weights, config));
    return out;
}

template BasicHiddenState<float> embed(std::span<const std::int64_t>, std::span<const std::int64_t>,
                                       const BasicWeights<float>&, const ModelConfig&);
template BasicHiddenState<double> embed(std::span<const std::int64_t>, std::span<const std::int64_t>,
                                        const BasicWeights<double>&, const ModelConfig&);
template BasicMatrix<float> output_logits(const BasicHiddenState<float>&, std::span<const std::size_t>,
                                          const BasicWeights<float>&, const ModelConfig&, HeadTape<float>*);
template BasicMatrix<double> output_logits(const BasicHiddenState<double>&, std::span<const std::size_t>,
                                           const BasicWeights<double>&, const ModelConfig&, HeadTape<double>*);
template BasicMatrix<float> output_logits_backward(const HeadTape<float>&, const BasicMatrix<float>&,
                                                   const BasicWeights<float>&, BasicWeights<float>&);
template BasicMatrix<double> output_logits_backward(const HeadTape<double>&, const BasicMatrix<double>&,
                                                    const BasicWeights<double>&, BasicWeights<double>&);

}  // namespace deepinsert::model

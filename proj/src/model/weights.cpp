#include "deepinsert/model/weights.hpp"

#include <cmath>

namespace deepinsert::model {

template <typename T>
BasicWeights<T> zero_weights(const ModelConfig& config) {
    config.validate();
    const std::size_t d = config.d_model;
    BasicWeights<T> w;
    w.token_embedding = BasicMatrix<T>(config.vocab_size, d);
    for (std::size_t i = 0; i < config.n_layers; ++i) {
        BasicLayerWeights<T> l;
        l.ln1_gain = BasicMatrix<T>(1, d);
        l.ln1_bias = BasicMatrix<T>(1, d);
        l.wq = BasicMatrix<T>(d, d);
        l.wk = BasicMatrix<T>(d, d);
        l.wv = BasicMatrix<T>(d, d);
        l.wo = BasicMatrix<T>(d, d);
        l.ln2_gain = BasicMatrix<T>(1, d);
        l.ln2_bias = BasicMatrix<T>(1, d);
        l.w_ff1 = BasicMatrix<T>(d, config.d_ff);
        l.w_ff2 = BasicMatrix<T>(config.d_ff, d);
        w.layers.push_back(std::move(l));
    }
    w.final_gain = BasicMatrix<T>(1, d);
    w.final_bias = BasicMatrix<T>(1, d);
    return w;
}

template BasicWeights<float> zero_weights(const ModelConfig&);
template BasicWeights<double> zero_weights(const ModelConfig&);

namespace {

void fill_normal(numerics::Matrix& m, numerics::Rng& rng, double stddev) {
    for (auto& v : m.values()) v = static_cast<float>(rng.normal(0.0, stddev));
}

}  // namespace

Weights init_weights(const ModelConfig& config, numerics::Rng& rng) {
    constexpr double kStd = 0.02;
    const double residual_std = kStd / std::sqrt(2.0 * static_cast<double>(config.n_layers));
    Weights w = zero_weights<float>(config);
    fill_normal(w.token_embedding, rng, kStd);
    for (auto& l : w.layers) {
        l.ln1_gain.fill(1.0f);
        l.ln2_gain.fill(1.0f);
        fill_normal(l.wq, rng, kStd);
        fill_normal(l.wk, rng, kStd);
        fill_normal(l.wv, rng, kStd);
        fill_normal(l.wo, rng, residual_std);
        fill_normal(l.w_ff1, rng, kStd);
        fill_normal(l.w_ff2, rng, residual_std);
    }
    w.final_gain.fill(1.0f);
    return w;
}

}  // namespace deepinsert::model

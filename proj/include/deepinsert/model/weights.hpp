#pragma once

#include <string>
#include <vector>

#include "deepinsert/model/config.hpp"
#include "deepinsert/numerics/matrix.hpp"
#include "deepinsert/numerics/rng.hpp"

namespace deepinsert::model {

using numerics::BasicMatrix;

template <typename T>
struct BasicLayerWeights {
    BasicMatrix<T> ln1_gain, ln1_bias;
    BasicMatrix<T> wq, wk, wv, wo;
    BasicMatrix<T> ln2_gain, ln2_bias;
    BasicMatrix<T> w_ff1, w_ff2;

    template <typename Self, typename F>
    static void visit(Self& self, const std::string& prefix, F&& f) {
        f(prefix + "ln1.gain", self.ln1_gain);
        f(prefix + "ln1.bias", self.ln1_bias);
        f(prefix + "attn.wq", self.wq);
        f(prefix + "attn.wk", self.wk);
        f(prefix + "attn.wv", self.wv);
        f(prefix + "attn.wo", self.wo);
        f(prefix + "ln2.gain", self.ln2_gain);
        f(prefix + "ln2.bias", self.ln2_bias);
        f(prefix + "ff.w1", self.w_ff1);
        f(prefix + "ff.w2", self.w_ff2);
    }
};

// Transformer parameters. The LM head is tied to token_embedding.
template <typename T>
struct BasicWeights {
    BasicMatrix<T> token_embedding;  // vocab_size x d_model
    std::vector<BasicLayerWeights<T>> layers;
    BasicMatrix<T> final_gain, final_bias;

    // f(name, matrix) for every tensor in a stable order.
    template <typename F>
    void for_each_tensor(F&& f) {
        visit_all(*this, f);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        visit_all(*this, f);
    }

private:
    template <typename Self, typename F>
    static void visit_all(Self& self, F& f) {
        f(std::string("tok_embedding"), self.token_embedding);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            BasicLayerWeights<T>::visit(self.layers[i], "layers." + std::to_string(i) + ".", f);
        }
        f(std::string("final_norm.gain"), self.final_gain);
        f(std::string("final_norm.bias"), self.final_bias);
    }
};

using LayerWeights = BasicLayerWeights<float>;
using Weights = BasicWeights<float>;

// All-zero tensors shaped for config (norm gains included).
template <typename T>
BasicWeights<T> zero_weights(const ModelConfig& config);

// Normal(0, 0.02) init; attention output and second feed-forward projections
// use 0.02 / sqrt(2 * n_layers). Norm gains 1, biases 0.
Weights init_weights(const ModelConfig& config, numerics::Rng& rng);

template <typename To, typename From>
BasicWeights<To> weights_cast(const BasicWeights<From>& w) {
    BasicWeights<To> out;
    out.token_embedding = numerics::matrix_cast<To>(w.token_embedding);
    for (const auto& l : w.layers) {
        BasicLayerWeights<To> c;
        c.ln1_gain = numerics::matrix_cast<To>(l.ln1_gain);
        c.ln1_bias = numerics::matrix_cast<To>(l.ln1_bias);
        c.wq = numerics::matrix_cast<To>(l.wq);
        c.wk = numerics::matrix_cast<To>(l.wk);
        c.wv = numerics::matrix_cast<To>(l.wv);
        c.wo = numerics::matrix_cast<To>(l.wo);
        c.ln2_gain = numerics::matrix_cast<To>(l.ln2_gain);
        c.ln2_bias = numerics::matrix_cast<To>(l.ln2_bias);
        c.w_ff1 = numerics::matrix_cast<To>(l.w_ff1);
        c.w_ff2 = numerics::matrix_cast<To>(l.w_ff2);
        out.layers.push_back(std::move(c));
    }
    out.final_gain = numerics::matrix_cast<To>(w.final_gain);
    out.final_bias = numerics::matrix_cast<To>(w.final_bias);
    return out;
}

}  // namespace deepinsert::model

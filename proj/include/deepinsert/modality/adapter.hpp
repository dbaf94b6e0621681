#pragma once

#include <string>

#include "deepinsert/numerics/matrix.hpp"
#include "deepinsert/numerics/rng.hpp"

namespace deepinsert::modality {

using numerics::BasicMatrix;

// Trainable two-layer map from encoder features to the model width:
// gelu(x W1 + b1) W2 + b2.
template <typename T>
struct BasicAdapter {
    BasicMatrix<T> w1, b1, w2, b2;

    std::size_t d_enc() const { return w1.rows(); }
    std::size_t d_hidden() const { return w1.cols(); }
    std::size_t d_model() const { return w2.cols(); }

    template <typename F>
    void for_each_tensor(F&& f) {
        f(std::string("adapter.w1"), w1);
        f(std::string("adapter.b1"), b1);
        f(std::string("adapter.w2"), w2);
        f(std::string("adapter.b2"), b2);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        f(std::string("adapter.w1"), w1);
        f(std::string("adapter.b1"), b1);
        f(std::string("adapter.w2"), w2);
        f(std::string("adapter.b2"), b2);
    }
};

using Adapter = BasicAdapter<float>;

template <typename T>
BasicAdapter<T> zero_adapter(std::size_t d_enc, std::size_t d_hidden, std::size_t d_model);

Adapter init_adapter(std::size_t d_enc, std::size_t d_hidden, std::size_t d_model, numerics::Rng& rng);

template <typename T>
struct AdapterTape {
    BasicMatrix<T> input;
    BasicMatrix<T> pre;  // before GELU
    BasicMatrix<T> act;
};

template <typename T>
BasicMatrix<T> adapt(const BasicMatrix<T>& features, const BasicAdapter<T>& adapter, AdapterTape<T>* tape = nullptr);

// Accumulates into grads; the gradient w.r.t. the features is not needed
// (the encoder is frozen) and is not computed.
template <typename T>
void adapt_backward(const AdapterTape<T>& tape, const BasicMatrix<T>& grad_out, const BasicAdapter<T>& adapter,
                    BasicAdapter<T>& grads);

template <typename To, typename From>
BasicAdapter<To> adapter_cast(const BasicAdapter<From>& a) {
    return {numerics::matrix_cast<To>(a.w1), numerics::matrix_cast<To>(a.b1), numerics::matrix_cast<To>(a.w2),
            numerics::matrix_cast<To>(a.b2)};
}

}  // namespace deepinsert::modality

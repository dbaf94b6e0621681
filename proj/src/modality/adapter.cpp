#include "deepinsert/modality/adapter.hpp"

#include <cmath>

#include "deepinsert/numerics/kernels.hpp"

namespace deepinsert::modality {

using numerics::OpTag;

template <typename T>
BasicAdapter<T> zero_adapter(std::size_t d_enc, std::size_t d_hidden, std::size_t d_model) {
    return {BasicMatrix<T>(d_enc, d_hidden), BasicMatrix<T>(1, d_hidden), BasicMatrix<T>(d_hidden, d_model),
            BasicMatrix<T>(1, d_model)};
}

Adapter init_adapter(std::size_t d_enc, std::size_t d_hidden, std::size_t d_model, numerics::Rng& rng) {
    Adapter a = zero_adapter<float>(d_enc, d_hidden, d_model);
    const double in_std = 1.0 / std::sqrt(static_cast<double>(d_enc));
    for (auto& v : a.w1.values()) v = static_cast<float>(rng.normal(0.0, in_std));
    for (auto& v : a.w2.values()) v = static_cast<float>(rng.normal(0.0, 0.02));
    return a;
}

namespace {

template <typename T>
void add_bias(BasicMatrix<T>& m, const BasicMatrix<T>& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias.data()[c];
    }
}

template <typename T>
void add_column_sums(BasicMatrix<T>& bias_grad, const BasicMatrix<T>& g) {
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) bias_grad.data()[c] += row[c];
    }
}

}  // namespace

template <typename T>
BasicMatrix<T> adapt(const BasicMatrix<T>& features, const BasicAdapter<T>& adapter, AdapterTape<T>* tape) {
    if (features.cols() != adapter.d_enc()) {
        throw numerics::ShapeError("adapt: feature width " + std::to_string(features.cols()) +
                                   " != adapter input width " + std::to_string(adapter.d_enc()));
    }
    BasicMatrix<T> pre = numerics::matmul(features, adapter.w1, OpTag::head);
    add_bias(pre, adapter.b1);
    BasicMatrix<T> act = numerics::gelu(pre);
    BasicMatrix<T> out = numerics::matmul(act, adapter.w2, OpTag::head);
    add_bias(out, adapter.b2);
    if (tape) {
        tape->input = features;
        tape->pre = std::move(pre);
        tape->act = std::move(act);
    }
    return out;
}

template <typename T>
void adapt_backward(const AdapterTape<T>& tape, const BasicMatrix<T>& grad_out, const BasicAdapter<T>& adapter,
                    BasicAdapter<T>& grads) {
    constexpr OpTag bw = OpTag::backward;
    numerics::add_inplace(grads.w2, numerics::matmul_tn(tape.act, grad_out, bw));
    add_column_sums(grads.b2, grad_out);
    const BasicMatrix<T> d_act = numerics::matmul_nt(grad_out, adapter.w2, bw);
    const BasicMatrix<T> d_pre = numerics::gelu_backward(tape.pre, d_act);
    numerics::add_inplace(grads.w1, numerics::matmul_tn(tape.input, d_pre, bw));
    add_column_sums(grads.b1, d_pre);
}

template BasicAdapter<float> zero_adapter(std::size_t, std::size_t, std::size_t);
template BasicAdapter<double> zero_adapter(std::size_t, std::size_t, std::size_t);
template BasicMatrix<float> adapt(const BasicMatrix<float>&, const BasicAdapter<float>&, AdapterTape<float>*);
template BasicMatrix<double> adapt(const BasicMatrix<double>&, const BasicAdapter<double>&, AdapterTape<double>*);
template void adapt_backward(const AdapterTape<float>&, const BasicMatrix<float>&, const BasicAdapter<float>&,
                             BasicAdapter<float>&);
template void adapt_backward(const AdapterTape<double>&, const BasicMatrix<double>&, const BasicAdapter<double>&,
                             BasicAdapter<double>&);

}  // namespace deepinsert::modality

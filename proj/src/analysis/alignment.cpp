#include "deepinsert/analysis/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/training/objective.hpp"

namespace deepinsert::analysis {

std::vector<std::vector<std::size_t>> knn_sets(const MatrixD& x, std::size_t k) {
    const std::size_t n = x.rows();
    if (k == 0 || k >= n) {
        throw std::invalid_argument("knn: need 0 < k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    for (double v : x.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument("knn: non-finite feature");
    }
    std::vector<std::vector<std::size_t>> out(n);
    std::vector<double> sim(n);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < x.cols(); ++c) s += x(i, c) * x(j, c);
            sim[j] = s;
        }
        order.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) order.push_back(j);
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
        out[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(out[i].begin(), out[i].end());
    }
    return out;
}

double mutual_knn_alignment(const MatrixD& a, const MatrixD& b, std::size_t k) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("mutual_knn_alignment: sample counts differ (" + std::to_string(a.rows()) + " vs " +
                                    std::to_string(b.rows()) + ")");
    }
    const auto na = knn_sets(a, k);
    const auto nb = knn_sets(b, k);
    double total = 0.0;
    std::vector<std::size_t> common;
    for (std::size_t i = 0; i < na.size(); ++i) {
        common.clear();
        std::set_intersection(na[i].begin(), na[i].end(), nb[i].begin(), nb[i].end(), std::back_inserter(common));
        total += static_cast<double>(common.size()) / static_cast<double>(k);
    }
    return total / static_cast<double>(na.size());
}

MatrixD alignment_grid(const std::vector<MatrixD>& layers_a, const std::vector<MatrixD>& layers_b, std::size_t k) {
    MatrixD grid(layers_a.size(), layers_b.size());
    for (std::size_t i = 0; i < layers_a.size(); ++i) {
        for (std::size_t j = 0; j < layers_b.size(); ++j)
            grid(i, j) = mutual_knn_alignment(layers_a[i], layers_b[j], k);
    }
    return grid;
}

std::vector<MatrixD> collect_layer_features(const std::vector<modality::GridSample>& samples,
                                            const model::Weights& weights, const modality::Adapter& adapter,
                                            const modality::FrozenEncoder& encoder, const model::ModelConfig& config) {
    std::vector<MatrixD> out(config.n_layers, MatrixD(samples.size(), config.d_model));
    std::size_t current = 0;
    insertion::ForwardObserver observer;
    observer.on_layer_output = [&](std::size_t layer, const model::HiddenState& state) {
        auto row = state.activations.row(state.rows() - 1);
        std::copy(row.begin(), row.end(), out[layer].row(current).begin());
    };
    insertion::PrefillOptions options;
    options.observer = &observer;
    for (; current < samples.size(); ++current) {
        insertion::deepinsert_prefill(training::make_layout(samples[current], encoder, adapter, config), weights,
                                      config, options);
    }
    return out;
}

}  // namespace deepinsert::analysis

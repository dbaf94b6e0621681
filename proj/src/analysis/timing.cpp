#include "deepinsert/analysis/timing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace deepinsert::analysis {

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: no values");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

TimingStats time_prefill(const insertion::PromptLayout& layout, const model::Weights& weights,
                         const model::ModelConfig& config, std::size_t reps, std::size_t warmup,
                         const insertion::PruneConfig& prune) {
    if (reps == 0) throw std::invalid_argument("time_prefill: reps must be positive");
    insertion::PrefillOptions options;
    options.prune = prune;
    for (std::size_t i = 0; i < warmup; ++i) insertion::deepinsert_prefill(layout, weights, config, options);
    TimingStats stats;
    for (std::size_t i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        insertion::deepinsert_prefill(layout, weights, config, options);
        stats.samples_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    stats.median_ms = median(stats.samples_ms);
    const auto [lo, hi] = std::minmax_element(stats.samples_ms.begin(), stats.samples_ms.end());
    stats.min_ms = *lo;
    stats.max_ms = *hi;
    return stats;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need two equal series of >= 2");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace deepinsert::analysis

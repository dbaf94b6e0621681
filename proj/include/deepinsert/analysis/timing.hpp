#pragma once

#include <vector>

#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/insertion/layout.hpp"

namespace deepinsert::analysis {

struct TimingStats {
    double median_ms = 0.0;
    double min_ms = 0.0;
    double max_ms = 0.0;
    std::vector<double> samples_ms;
};

// Wall-clock of repeated prefills on one thread, after untimed warmups.
TimingStats time_prefill(const insertion::PromptLayout& layout, const model::Weights& weights,
                         const model::ModelConfig& config, std::size_t reps = 30, std::size_t warmup = 5,
                         const insertion::PruneConfig& prune = {});

double median(std::vector<double> values);

// Pearson correlation; throws on fewer than 2 points or zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace deepinsert::analysis

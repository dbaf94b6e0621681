#include "deepinsert/selection/selection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "deepinsert/analysis/flops.hpp"
#include "deepinsert/common/io.hpp"
#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/training/objective.hpp"

namespace deepinsert::selection {

using common::format_number;
using numerics::MatrixD;

std::string SweepResult::to_csv() const {
    std::ostringstream out;
    out << "insert_layer,accuracy,acc_cell,acc_majority,nll,flops,muladds_fwd\n";
    for (const auto& e : entries) {
        out << e.insert_layer << ',' << format_number(e.eval.accuracy) << ',' << format_number(e.eval.acc_cell) << ','
            << format_number(e.eval.acc_majority) << ',' << format_number(e.eval.mean_nll) << ','
            << format_number(e.flops) << ',' << format_number(e.eval.muladds_fwd) << '\n';
    }
    return out.str();
}

SweepResult noretrain_sweep(const model::Weights& weights, const modality::Adapter& adapter,
                            const modality::FrozenEncoder& encoder, const model::ModelConfig& config,
                            const std::vector<std::size_t>& candidates,
                            const std::vector<modality::GridSample>& split) {
    if (candidates.empty()) throw std::invalid_argument("noretrain_sweep: no candidate layers");
    SweepResult result;
    for (std::size_t layer : candidates) {
        const model::ModelConfig cfg = model::with_insert_layer(config, layer);
        SweepEntry entry;
        entry.insert_layer = layer;
        entry.eval = training::evaluate(weights, adapter, encoder, split, cfg);
        double flops = 0.0;
        for (const auto& s : split) {
            const auto tmpl = s.prompt_template();
            flops += static_cast<double>(
                analysis::flops_deepinsert(analysis::FlopsQuery::from(cfg, tmpl.size() - 1, s.cells.size())).total);
        }
        entry.flops = flops / static_cast<double>(split.size());
        result.entries.push_back(std::move(entry));
    }
    return result;
}

void PolicyConfig::validate(std::size_t n_layers) const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("policy: lambda must be >= 0");
    if (candidates.empty()) throw std::invalid_argument("policy: empty candidate set");
    for (std::size_t c : candidates) {
        if (c > n_layers) {
            throw std::invalid_argument("policy: candidate layer " + std::to_string(c) + " outside [0, " +
                                        std::to_string(n_layers) + "]");
        }
    }
    if (rollout_steps == 0 || hidden == 0) throw std::invalid_argument("policy: rollout_steps and hidden must be > 0");
    if (!(baseline_decay >= 0.0 && baseline_decay < 1.0))
        throw std::invalid_argument("policy: baseline_decay in [0,1)");
}

double layer_reward(double nll, double lambda, std::size_t layer, std::size_t n_layers) {
    return -nll + lambda * static_cast<double>(layer) / static_cast<double>(n_layers);
}

LayerPolicy LayerPolicy::init(std::size_t d_model, std::size_t hidden, std::vector<std::size_t> candidates,
                              numerics::Rng& rng) {
    LayerPolicy p;
    p.candidates = std::move(candidates);
    p.w1 = MatrixD(d_model, hidden);
    p.b1 = MatrixD(1, hidden);
    // Zero output layer: the untrained policy is uniform.
    p.w2 = MatrixD(hidden, p.candidates.size());
    p.b2 = MatrixD(1, p.candidates.size());
    const double std1 = 1.0 / std::sqrt(static_cast<double>(d_model));
    for (double& v : p.w1.values()) v = rng.normal(0.0, std1);
    return p;
}

namespace {

struct PolicyTape {
    std::vector<double> input, hidden, probs;
};

std::vector<double> forward(const LayerPolicy& p, const std::vector<double>& x, PolicyTape* tape) {
    std::vector<double> h(p.w1.cols());
    for (std::size_t j = 0; j < h.size(); ++j) {
        double s = p.b1(0, j);
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * p.w1(i, j);
        h[j] = std::tanh(s);
    }
    std::vector<double> z(p.w2.cols());
    for (std::size_t k = 0; k < z.size(); ++k) {
        double s = p.b2(0, k);
        for (std::size_t j = 0; j < h.size(); ++j) s += h[j] * p.w2(j, k);
        z[k] = s;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) sum += (v = std::exp(v - mx));
    for (double& v : z) v /= sum;
    if (tape) *tape = {x, h, z};
    return z;
}

}  // namespace

std::vector<double> LayerPolicy::probabilities(const std::vector<double>& input) const {
    if (input.size() != w1.rows()) throw std::invalid_argument("policy: input width mismatch");
    return forward(*this, input, nullptr);
}

std::vector<double> policy_input(const modality::GridSample& sample, const model::Weights& weights) {
    std::vector<double> out(weights.token_embedding.cols(), 0.0);
    std::size_t n = 0;
    for (std::int64_t tok : sample.prompt_template()) {
        if (tok == modality::GridVocab::image) continue;
        auto row = weights.token_embedding.row(static_cast<std::size_t>(tok));
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
        ++n;
    }
    for (double& v : out) v /= static_cast<double>(n);
    return out;
}

std::string PolicyResult::reward_csv() const {
    std::ostringstream out;
    out << "step,sample,layer,performance,redundancy,total,baseline\n";
    for (const auto& r : log) {
        out << r.step << ',' << r.sample << ',' << r.layer << ',' << format_number(r.performance) << ','
            << format_number(r.redundancy) << ',' << format_number(r.total) << ',' << format_number(r.baseline) << '\n';
    }
    return out.str();
}

std::vector<std::vector<double>> exhaustive_nll(const model::Weights& weights, const modality::Adapter& adapter,
                                                const modality::FrozenEncoder& encoder,
                                                const model::ModelConfig& config,
                                                const std::vector<std::size_t>& candidates,
                                                const std::vector<modality::GridSample>& subset) {
    std::vector<std::vector<double>> out;
    for (std::size_t layer : candidates) {
        const auto cfg = model::with_insert_layer(config, layer);
        std::vector<double> row;
        for (const auto& s : subset) row.push_back(training::evaluate(weights, adapter, encoder, {s}, cfg).mean_nll);
        out.push_back(std::move(row));
    }
    return out;
}

namespace {

void summarize(PolicyResult& result, const std::vector<std::vector<double>>& inputs) {
    const auto& cand = result.policy.candidates;
    result.mean_probabilities.assign(cand.size(), 0.0);
    result.expected_depth = 0.0;
    for (const auto& x : inputs) {
        const auto p = result.policy.probabilities(x);
        for (std::size_t k = 0; k < cand.size(); ++k) {
            result.mean_probabilities[k] += p[k] / static_cast<double>(inputs.size());
            result.expected_depth += p[k] * static_cast<double>(cand[k]) / static_cast<double>(inputs.size());
        }
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < cand.size(); ++k) {
        const double a = result.mean_probabilities[k], b = result.mean_probabilities[best];
        if (a > b || (a == b && cand[k] > cand[best])) best = k;
    }
    result.modal_layer = cand[best];
}

}  // namespace

PolicyResult reinforce_train(const model::Weights& weights, const modality::Adapter& adapter,
                             const modality::FrozenEncoder& encoder, const model::ModelConfig& config,
                             const PolicyConfig& pc, const std::vector<modality::GridSample>& subset) {
    pc.validate(config.n_layers);
    if (subset.empty()) throw std::invalid_argument("reinforce_train: empty data subset");
    numerics::Rng rng(pc.seed);
    PolicyResult result;
    result.policy = LayerPolicy::init(config.d_model, pc.hidden, pc.candidates, rng);
    std::vector<std::vector<double>> inputs;
    for (const auto& s : subset) inputs.push_back(policy_input(s, weights));
    if (pc.candidates.size() == 1) {
        summarize(result, inputs);
        return result;
    }

    // nll[k][i], filled on first use.
    std::vector<std::vector<double>> nll(pc.candidates.size(), std::vector<double>(subset.size(), NAN));
    auto nll_at = [&](std::size_t k, std::size_t i) {
        if (std::isnan(nll[k][i])) {
            const auto cfg = model::with_insert_layer(config, pc.candidates[k]);
            nll[k][i] = training::evaluate(weights, adapter, encoder, {subset[i]}, cfg).mean_nll;
        }
        return nll[k][i];
    };

    LayerPolicy& p = result.policy;
    std::vector<numerics::AdamMoments<double>> moments;
    for (MatrixD* m : {&p.w1, &p.b1, &p.w2, &p.b2}) {
        moments.push_back({MatrixD(m->rows(), m->cols()), MatrixD(m->rows(), m->cols())});
    }
    numerics::AdamHyper hyper;
    hyper.lr = pc.lr;
    double baseline = 0.0;
    bool have_baseline = false;

    for (std::size_t step = 1; step <= pc.rollout_steps; ++step) {
        const auto i = static_cast<std::size_t>(rng.below(subset.size()));
        PolicyTape tape;
        const auto probs = forward(p, inputs[i], &tape);
        const double u = rng.uniform();
        std::size_t k = 0;
        for (double acc = probs[0]; k + 1 < probs.size() && u >= acc; acc += probs[++k]) {
        }
        const std::size_t layer = pc.candidates[k];
        const double perf = -nll_at(k, i);
        const double redundancy = static_cast<double>(layer) / static_cast<double>(config.n_layers);
        const double reward = perf + pc.lambda * redundancy;
        if (!have_baseline) {
            baseline = reward;
            have_baseline = true;
        }
        const double advantage = reward - baseline;
        result.log.push_back({step, i, layer, perf, redundancy, reward, baseline});
        baseline = pc.baseline_decay * baseline + (1.0 - pc.baseline_decay) * reward;

        // Gradient of -advantage * log p(k); d(log p_k)/dz = onehot(k) - p.
        std::vector<double> dz(probs.size());
        for (std::size_t c = 0; c < dz.size(); ++c) dz[c] = -advantage * ((c == k ? 1.0 : 0.0) - probs[c]);
        MatrixD gw1(p.w1.rows(), p.w1.cols()), gb1(1, p.b1.cols()), gw2(p.w2.rows(), p.w2.cols()), gb2(1, p.b2.cols());
        std::vector<double> dh(tape.hidden.size(), 0.0);
        for (std::size_t c = 0; c < dz.size(); ++c) {
            gb2(0, c) = dz[c];
            for (std::size_t j = 0; j < dh.size(); ++j) {
                gw2(j, c) = tape.hidden[j] * dz[c];
                dh[j] += p.w2(j, c) * dz[c];
            }
        }
        for (std::size_t j = 0; j < dh.size(); ++j) {
            const double da = dh[j] * (1.0 - tape.hidden[j] * tape.hidden[j]);
            gb1(0, j) = da;
            for (std::size_t r = 0; r < tape.input.size(); ++r) gw1(r, j) = tape.input[r] * da;
        }
        numerics::adam_step("policy.w1", p.w1, gw1, moments[0], hyper, step);
        numerics::adam_step("policy.b1", p.b1, gb1, moments[1], hyper, step);
        numerics::adam_step("policy.w2", p.w2, gw2, moments[2], hyper, step);
        numerics::adam_step("policy.b2", p.b2, gb2, moments[3], hyper, step);
    }
    summarize(result, inputs);
    return result;
}

std::string to_string(Criterion c) {
    switch (c) {
        case Criterion::best_accuracy:
            return "best-accuracy";
        case Criterion::knee:
            return "knee";
        case Criterion::expected_depth:
            return "expected-depth";
    }
    return "?";
}

Criterion parse_criterion(const std::string& s) {
    if (s == "best-accuracy") return Criterion::best_accuracy;
    if (s == "knee") return Criterion::knee;
    if (s == "expected-depth") return Criterion::expected_depth;
    throw std::invalid_argument("unknown criterion '" + s + "' (expected best-accuracy, knee or expected-depth)");
}

std::size_t select_layer(const SweepResult& sweep, Criterion criterion, double delta_points) {
    if (sweep.entries.empty()) throw std::invalid_argument("select_layer: empty sweep");
    const auto& e = sweep.entries;
    switch (criterion) {
        case Criterion::best_accuracy: {
            std::size_t best = 0;
            for (std::size_t i = 1; i < e.size(); ++i) {
                const double a = e[i].eval.accuracy, b = e[best].eval.accuracy;
                if (a > b || (a == b && e[i].insert_layer > e[best].insert_layer)) best = i;
            }
            return e[best].insert_layer;
        }
        case Criterion::knee: {
            const auto ref = std::min_element(e.begin(), e.end(), [](const SweepEntry& a, const SweepEntry& b) {
                return a.insert_layer < b.insert_layer;
            });
            std::size_t pick = ref->insert_layer;
            for (const auto& entry : e) {
                // Slack so a drop of exactly delta_points survives rounding.
                if ((ref->eval.accuracy - entry.eval.accuracy) * 100.0 <= delta_points + 1e-9) {
                    pick = std::max(pick, entry.insert_layer);
                }
            }
            return pick;
        }
        case Criterion::expected_depth:
            throw std::invalid_argument("select_layer: expected-depth needs a trained policy, not a sweep");
    }
    return 0;
}

std::size_t select_layer(const PolicyResult& policy, Criterion criterion) {
    if (policy.policy.candidates.empty()) throw std::invalid_argument("select_layer: empty policy");
    if (criterion != Criterion::expected_depth) {
        throw std::invalid_argument("select_layer: a policy supports only the expected-depth criterion");
    }
    return static_cast<std::size_t>(std::llround(policy.expected_depth));
}

}  // namespace deepinsert::selection

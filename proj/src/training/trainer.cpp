#include "deepinsert/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "deepinsert/common/io.hpp"
#include "deepinsert/model/checkpoint.hpp"
#include "deepinsert/numerics/op_counter.hpp"
#include "deepinsert/training/objective.hpp"

namespace deepinsert::training {

using numerics::Matrix;

std::string to_string(Schedule s) { return s == Schedule::constant ? "constant" : "cosine"; }

Schedule parse_schedule(const std::string& s) {
    if (s == "constant") return Schedule::constant;
    if (s == "cosine") return Schedule::cosine;
    throw std::invalid_argument("unknown schedule '" + s + "' (expected constant or cosine)");
}

void TrainConfig::validate() const {
    if (eval_interval < 1 || steps < eval_interval) {
        throw std::invalid_argument("train config: need steps >= eval_interval >= 1 (steps=" + std::to_string(steps) +
                                    ", eval_interval=" + std::to_string(eval_interval) + ")");
    }
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be at least 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train config: lr must be finite and >= 0");
    if (!(grad_clip >= 0.0)) throw std::invalid_argument("train config: grad_clip must be >= 0");
}

double learning_rate(const TrainConfig& config, std::uint64_t step) {
    if (config.warmup_steps > 0 && step <= config.warmup_steps) {
        return config.lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    }
    if (config.schedule == Schedule::constant) return config.lr;
    const double span = static_cast<double>(config.steps - std::min<std::size_t>(config.warmup_steps, config.steps));
    if (span <= 0.0) return config.lr;
    const double t = static_cast<double>(step - config.warmup_steps) / span;
    return 0.5 * config.lr * (1.0 + std::cos(std::numbers::pi * std::min(t, 1.0)));
}

std::string MetricsLog::to_csv() const {
    std::ostringstream out;
    out << "step,loss,val_acc_identity,val_acc_majority,muladds_fwd,ms_fwd\n";
    for (const auto& e : evals) {
        out << e.step << ',' << common::format_number(e.train_loss) << ',' << common::format_number(e.val_acc_identity)
            << ',' << common::format_number(e.val_acc_majority) << ',' << common::format_number(e.muladds_fwd) << ','
            << common::format_number(e.ms_fwd) << '\n';
    }
    return out.str();
}

std::string MetricsLog::loss_curve_csv() const {
    std::ostringstream out;
    out << "step,loss\n";
    for (std::size_t i = 0; i < step_loss.size(); ++i)
        out << first_step + i << ',' << common::format_number(step_loss[i]) << '\n';
    return out.str();
}

EvalResult evaluate(const model::Weights& weights, const modality::Adapter& adapter,
                    const modality::FrozenEncoder& encoder, const std::vector<modality::GridSample>& split,
                    const model::ModelConfig& config, const insertion::PruneConfig& prune) {
    if (split.empty()) throw std::invalid_argument("evaluate: empty split");
    EvalResult r;
    std::size_t hit_cell = 0, hit_majority = 0;
    double nll = 0.0, muladds = 0.0, ms = 0.0;
    insertion::PrefillOptions options;
    options.prune = prune;
    for (const auto& sample : split) {
        const modality::GridVocab vocab{sample.grid_size, encoder.n_symbols()};
        const auto layout = make_layout(sample, encoder, adapter, config);
        const numerics::CounterScope scope;
        const auto t0 = std::chrono::steady_clock::now();
        const auto prefill = insertion::deepinsert_prefill(layout, weights, config, options);
        ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        muladds += static_cast<double>(scope.delta().core_total());

        auto logits = prefill.logits.row(0);
        std::int64_t best = vocab.symbol(0);
        for (std::int64_t tok : vocab.symbol_tokens()) {
            if (logits[tok] > logits[best]) best = tok;
        }
        double max_logit = logits[0];
        for (float v : logits) max_logit = std::max<double>(max_logit, v);
        double z = 0.0;
        for (float v : logits) z += std::exp(static_cast<double>(v) - max_logit);
        nll += max_logit + std::log(z) - static_cast<double>(logits[sample.answer_token]);

        r.predictions.push_back(best);
        const bool hit = best == sample.answer_token;
        if (sample.qtype == modality::QueryType::cell) {
            ++r.n_cell;
            hit_cell += hit;
        } else {
            ++r.n_majority;
            hit_majority += hit;
        }
    }
    const auto n = static_cast<double>(split.size());
    r.acc_cell = r.n_cell ? static_cast<double>(hit_cell) / static_cast<double>(r.n_cell) : 0.0;
    r.acc_majority = r.n_majority ? static_cast<double>(hit_majority) / static_cast<double>(r.n_majority) : 0.0;
    r.accuracy = static_cast<double>(hit_cell + hit_majority) / n;
    r.mean_nll = nll / n;
    r.muladds_fwd = muladds / n;
    r.ms_fwd = ms / n;
    return r;
}

namespace {

template <typename State, typename F>
void visit_parameters(State& state, F&& f) {
    state.weights.for_each_tensor(f);
    state.adapter.for_each_tensor(f);
}

template <typename F>
void visit_grads(ModelGrads<float>& grads, F&& f) {
    grads.weights.for_each_tensor(f);
    grads.adapter.for_each_tensor(f);
}

std::uint64_t batch_stream_seed(std::uint64_t seed) { return seed ^ 0x6a09e667f3bcc909ull; }

void write_state(const TrainConfig& config, const TrainState& state) {
    if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, state);
}

}  // namespace

TrainState init_train_state(const model::ModelConfig& config, std::size_t d_enc, std::size_t adapter_hidden,
                            std::uint64_t seed) {
    config.validate();
    TrainState state;
    state.config = config;
    numerics::Rng init(seed);
    state.weights = model::init_weights(config, init);
    state.adapter = modality::init_adapter(d_enc, adapter_hidden, config.d_model, init);
    visit_parameters(state, [&](const std::string&, const Matrix& p) {
        state.moments.push_back({Matrix(p.rows(), p.cols()), Matrix(p.rows(), p.cols())});
    });
    state.batch_rng = numerics::Rng(batch_stream_seed(seed));
    return state;
}

void for_each_parameter(TrainState& state, const std::function<void(const std::string&, Matrix&)>& f) {
    visit_parameters(state, f);
}

MetricsLog train(TrainState& state, const std::vector<modality::GridSample>& train_split,
                 const std::vector<modality::GridSample>& val_split, const modality::FrozenEncoder& encoder,
                 const TrainConfig& config, const EvalCallback& on_eval) {
    config.validate();
    if (train_split.empty()) throw std::invalid_argument("train: empty training split");
    if (val_split.empty()) throw std::invalid_argument("train: empty validation split");
    if (state.adapter.d_enc() != encoder.d_enc()) {
        throw std::invalid_argument("train: adapter expects d_enc " + std::to_string(state.adapter.d_enc()) +
                                    " but the encoder produces " + std::to_string(encoder.d_enc()));
    }

    std::vector<SampleTensors<float>> samples;
    samples.reserve(train_split.size());
    for (const auto& s : train_split) samples.push_back(make_sample_tensors<float>(s, encoder));
    const std::vector<modality::GridSample> val(
        val_split.begin(),
        val_split.begin() + static_cast<std::ptrdiff_t>(
                                config.eval_limit ? std::min(config.eval_limit, val_split.size()) : val_split.size()));

    const auto& cfg = state.config;
    MetricsLog log;
    log.first_step = state.step + 1;
    const auto start = std::chrono::steady_clock::now();
    ModelGrads<float> grads = zero_grads(cfg, state.adapter);

    while (state.step < config.steps) {
        const std::uint64_t step = state.step + 1;
        numerics::Rng rng = state.batch_rng;
        visit_grads(grads,
                    [](const std::string&, Matrix& g) { std::fill(g.values().begin(), g.values().end(), 0.0f); });
        double loss = 0.0;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            const auto& s = samples[static_cast<std::size_t>(rng.below(samples.size()))];
            loss += static_cast<double>(sample_loss(state.weights, state.adapter, cfg, s, &grads));
        }
        loss /= static_cast<double>(config.batch_size);

        const float inv_batch = 1.0f / static_cast<float>(config.batch_size);
        double sq_norm = 0.0;
        visit_grads(grads, [&](const std::string&, Matrix& g) {
            for (float& v : g.values()) {
                v *= inv_batch;
                sq_norm += static_cast<double>(v) * v;
            }
        });
        if (!std::isfinite(loss) || !std::isfinite(sq_norm)) {
            write_state(config, state);
            throw TrainingDiverged("training diverged at step " + std::to_string(step) + " (loss " +
                                       common::format_number(loss) + "); last good state is step " +
                                       std::to_string(state.step),
                                   step);
        }
        const double norm = std::sqrt(sq_norm);
        if (config.grad_clip > 0.0 && norm > config.grad_clip) {
            const auto scale = static_cast<float>(config.grad_clip / norm);
            visit_grads(grads, [&](const std::string&, Matrix& g) {
                for (float& v : g.values()) v *= scale;
            });
        }

        numerics::AdamHyper hyper;
        hyper.lr = learning_rate(config, step);
        std::vector<Matrix*> grad_list;
        visit_grads(grads, [&](const std::string&, Matrix& g) { grad_list.push_back(&g); });
        std::size_t i = 0;
        visit_parameters(state, [&](const std::string& name, Matrix& p) {
            numerics::adam_step(name, p, *grad_list[i], state.moments[i], hyper, step);
            ++i;
        });
        state.step = step;
        state.batch_rng = rng;
        log.step_loss.push_back(loss);

        if (step % config.eval_interval == 0 || step == config.steps) {
            const EvalResult ev = evaluate(state.weights, state.adapter, encoder, val, cfg);
            EvalRow row;
            row.step = step;
            row.train_loss = loss;
            row.val_loss = ev.mean_nll;
            row.val_acc_identity = ev.acc_cell;
            row.val_acc_majority = ev.acc_majority;
            row.muladds_fwd = ev.muladds_fwd;
            row.ms_fwd = ev.ms_fwd;
            row.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            log.evals.push_back(row);
            if (on_eval) on_eval(row);
        }
        if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0) write_state(config, state);
    }
    write_state(config, state);
    return log;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
    model::TensorFile file;
    file.config = state.config;
    file.metadata = state.metadata;
    file.metadata["train.step"] = state.step;
    file.metadata["train.rng_seed"] = state.batch_rng.seed();
    file.metadata["train.rng_position"] = state.batch_rng.position();
    std::size_t i = 0;
    visit_parameters(state, [&](const std::string& name, const Matrix& p) {
        file.tensors.push_back({name, p});
        file.tensors.push_back({"adam.m." + name, state.moments[i].m});
        file.tensors.push_back({"adam.v." + name, state.moments[i].v});
        ++i;
    });
    model::write_tensor_file(path, file);
}

namespace {

void restore_from(const model::TensorFile& file, TrainState& state, const std::string& source) {
    auto copy = [&](const std::string& name, Matrix& dst) {
        if (!file.contains(name)) throw model::CheckpointError(source + ": missing tensor '" + name + "'");
        const Matrix& src = file.get(name);
        if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
            throw model::CheckpointError(source + ": tensor '" + name + "' has shape " + src.shape_string() +
                                         ", expected " + dst.shape_string());
        }
        dst = src;
    };
    std::size_t i = 0;
    visit_parameters(state, [&](const std::string& name, Matrix& p) {
        copy(name, p);
        copy("adam.m." + name, state.moments[i].m);
        copy("adam.v." + name, state.moments[i].v);
        ++i;
    });
    if (!(file.config == state.config)) {
        throw model::CheckpointError(source + ": model config differs: file has " + model::describe(file.config) +
                                     ", expected " + model::describe(state.config));
    }
    for (const char* key : {"train.step", "train.rng_seed", "train.rng_position"}) {
        if (!file.metadata.contains(key)) throw model::CheckpointError(source + ": missing metadata '" + key + "'");
    }
    state.step = file.metadata.at("train.step");
    state.metadata.clear();
    for (const auto& [key, value] : file.metadata) {
        if (!key.starts_with("train.")) state.metadata[key] = value;
    }
    state.batch_rng = numerics::Rng::at(file.metadata.at("train.rng_seed"), file.metadata.at("train.rng_position"));
}

}  // namespace

TrainState load_checkpoint(const std::filesystem::path& path) {
    const model::TensorFile file = model::read_tensor_file(path);
    if (!file.contains("adapter.w1") || !file.contains("adapter.w2")) {
        throw model::CheckpointError(path.string() + ": no adapter tensors");
    }
    TrainState state;
    state.config = file.config;
    state.weights = model::zero_weights<float>(file.config);
    state.adapter = modality::zero_adapter<float>(file.get("adapter.w1").rows(), file.get("adapter.w1").cols(),
                                                  file.get("adapter.w2").cols());
    visit_parameters(state, [&](const std::string&, const Matrix& p) {
        state.moments.push_back({Matrix(p.rows(), p.cols()), Matrix(p.rows(), p.cols())});
    });
    restore_from(file, state, path.string());
    return state;
}

void restore_checkpoint(const std::filesystem::path& path, TrainState& state) {
    TrainState staged = state;
    restore_from(model::read_tensor_file(path), staged, path.string());
    state = std::move(staged);
}

}  // namespace deepinsert::training

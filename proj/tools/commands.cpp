#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "deepinsert/analysis/alignment.hpp"
#include "deepinsert/analysis/attention.hpp"
#include "deepinsert/analysis/flops.hpp"
#include "deepinsert/analysis/report.hpp"
#include "deepinsert/analysis/timing.hpp"
#include "deepinsert/common/io.hpp"
#include "deepinsert/modality/dataset_io.hpp"
#include "deepinsert/training/objective.hpp"

namespace deepinsert::cli {

using json = nlohmann::json;
using common::format_number;
using modality::GridSample;

namespace {

void emit(const Context& ctx, const std::string& name, const std::string& text) {
    common::write_file_atomic(ctx.out_dir / name, text);
}

void emit_report(const Context& ctx, const std::string& command, json body) {
    body["command"] = command;
    body["config_hash"] = ctx.config_hash;
    emit(ctx, "report.json", body.dump(2) + "\n");
}

modality::DatasetSplits load_splits(const RunConfig& c) {
    if (c.data_dir.empty()) return modality::generate_dataset(c.data);
    const std::filesystem::path dir(c.data_dir);
    return {modality::read_split(dir / "train.jsonl"), modality::read_split(dir / "val.jsonl"),
            modality::read_split(dir / "test.jsonl")};
}

std::vector<GridSample> eval_split(const RunConfig& c, const modality::DatasetSplits& splits) {
    std::vector<GridSample> out = c.split == "test" ? splits.test : splits.val;
    if (c.train.eval_limit > 0 && out.size() > c.train.eval_limit) out.resize(c.train.eval_limit);
    if (out.empty()) throw std::runtime_error("split '" + c.split + "' is empty");
    return out;
}

modality::FrozenEncoder make_encoder(const RunConfig& c) {
    return modality::FrozenEncoder(c.encoder_seed, c.data.n_symbols, c.d_enc, c.d_symbol);
}

std::string task_signature(const RunConfig& c) {
    return "gridqa-g" + std::to_string(c.data.grid_size) + "-s" + std::to_string(c.data.n_symbols) + "-seed" +
           std::to_string(c.data.seed) + "-n" + std::to_string(c.data.size) + "-enc" + std::to_string(c.encoder_seed);
}

std::map<std::string, std::uint64_t> checkpoint_metadata(const RunConfig& c) {
    return {{"data.grid_size", c.data.grid_size},
            {"data.n_symbols", c.data.n_symbols},
            {"encoder.seed", c.encoder_seed},
            {"encoder.d_enc", c.d_enc},
            {"encoder.d_symbol", c.d_symbol}};
}

training::TrainState load_model(const Context& ctx, const std::string& path) {
    if (path.empty()) throw ConfigError("a checkpoint is required (run.checkpoint)");
    training::TrainState state = training::load_checkpoint(path);
    for (const auto& [key, want] : checkpoint_metadata(ctx.config)) {
        const auto it = state.metadata.find(key);
        if (it != state.metadata.end() && it->second != want) {
            throw ConfigError(path + ": trained with " + key + "=" + std::to_string(it->second) +
                              " but the run configuration has " + std::to_string(want));
        }
    }
    if (ctx.binder->was_set("model.insert_layer")) state.config.insert_layer = ctx.config.model.insert_layer;
    try {
        state.config.validate();
        ctx.config.prune.validate(state.config);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return state;
}

double mean_flops(const model::ModelConfig& config, const std::vector<GridSample>& split,
                  const insertion::PruneConfig& prune = {}) {
    double total = 0.0;
    for (const auto& s : split) {
        const auto q = analysis::FlopsQuery::from(config, s.prompt_template().size() - 1, s.cells.size());
        total += static_cast<double>(
            analysis::flops_piecewise(analysis::effective_lengths(q, prune), q.d_model, q.d_ff, q.n_heads).total());
    }
    return total / static_cast<double>(split.size());
}

struct EvalPoint {
    std::size_t insert_layer = 0;
    training::EvalResult eval;
    double flops = 0.0;
    analysis::TimingStats timing;
};

EvalPoint eval_point(const Context& ctx, const training::TrainState& state, const model::ModelConfig& config,
                     const modality::FrozenEncoder& encoder, const std::vector<GridSample>& split) {
    const auto& c = ctx.config;
    EvalPoint p;
    p.insert_layer = config.insert_layer;
    p.eval = training::evaluate(state.weights, state.adapter, encoder, split, config, c.prune);
    p.flops = mean_flops(config, split, c.prune);
    const auto layout = training::make_layout(split.front(), encoder, state.adapter, config);
    p.timing = analysis::time_prefill(layout, state.weights, config, c.timing_reps, c.timing_warmup, c.prune);
    return p;
}

json point_json(const EvalPoint& p) {
    return {{"insert_layer", p.insert_layer},
            {"accuracy", p.eval.accuracy},
            {"acc_cell", p.eval.acc_cell},
            {"acc_majority", p.eval.acc_majority},
            {"nll", p.eval.mean_nll},
            {"flops", p.flops},
            {"muladds_fwd", p.eval.muladds_fwd},
            {"median_ms", p.timing.median_ms},
            {"timing_reps", p.timing.samples_ms.size()}};
}

std::string point_csv_header() {
    return "insert_layer,accuracy,acc_cell,acc_majority,nll,flops,muladds_fwd,median_ms\n";
}

std::string point_csv_row(const EvalPoint& p) {
    std::ostringstream out;
    out << p.insert_layer << ',' << format_number(p.eval.accuracy) << ',' << format_number(p.eval.acc_cell) << ','
        << format_number(p.eval.acc_majority) << ',' << format_number(p.eval.mean_nll) << ',' << format_number(p.flops)
        << ',' << format_number(p.eval.muladds_fwd) << ',' << format_number(p.timing.median_ms) << '\n';
    return out.str();
}

std::vector<std::string> index_labels(std::size_t n, const std::string& prefix) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

}  // namespace

int run_gen_data(const Context& ctx) {
    const auto splits = modality::generate_dataset(ctx.config.data);
    emit(ctx, "train.jsonl", modality::to_jsonl(splits.train));
    emit(ctx, "val.jsonl", modality::to_jsonl(splits.val));
    emit(ctx, "test.jsonl", modality::to_jsonl(splits.test));
    std::ostringstream csv;
    csv << "split,samples\ntrain," << splits.train.size() << "\nval," << splits.val.size() << "\ntest,"
        << splits.test.size() << '\n';
    emit(ctx, "splits.csv", csv.str());
    emit_report(ctx, "gen-data",
                {{"task", task_signature(ctx.config)},
                 {"train", splits.train.size()},
                 {"val", splits.val.size()},
                 {"test", splits.test.size()}});
    std::cout << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
              << " samples to " << ctx.out_dir.string() << "\n";
    return 0;
}

int run_train(const Context& ctx) {
    const auto& c = ctx.config;
    const auto splits = load_splits(c);
    const auto encoder = make_encoder(c);
    training::TrainState state = c.resume
                                     ? load_model(ctx, c.checkpoint)
                                     : training::init_train_state(c.model, c.d_enc, c.adapter_hidden, c.train.seed);
    state.metadata = checkpoint_metadata(c);
    training::TrainConfig tc = c.train;
    tc.checkpoint_path = (ctx.out_dir / "checkpoint.bin").string();

    training::MetricsLog log;
    try {
        log = training::train(state, splits.train, splits.val, encoder, tc, [](const training::EvalRow& r) {
            std::cerr << "step " << r.step << "  loss " << format_number(r.train_loss) << "  val_acc_identity "
                      << format_number(r.val_acc_identity) << "  val_acc_majority " << format_number(r.val_acc_majority)
                      << "  " << format_number(r.elapsed_s) << "s\n";
        });
    } catch (const training::TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << "; checkpoint " << tc.checkpoint_path << "\n";
        return 1;
    }
    if (log.evals.empty()) {
        // Resumed at or past train.steps: report the restored model as is.
        const auto ev = training::evaluate(state.weights, state.adapter, encoder, eval_split(c, splits), state.config);
        training::EvalRow row;
        row.step = state.step;
        row.val_loss = ev.mean_nll;
        row.val_acc_identity = ev.acc_cell;
        row.val_acc_majority = ev.acc_majority;
        row.muladds_fwd = ev.muladds_fwd;
        row.ms_fwd = ev.ms_fwd;
        log.evals.push_back(row);
    }
    emit(ctx, "metrics.csv", log.to_csv());
    emit(ctx, "loss_curve.csv", log.loss_curve_csv());
    const auto& last = log.evals.back();
    emit_report(ctx, "train",
                {{"task", task_signature(c)},
                 {"insert_layer", state.config.insert_layer},
                 {"steps", state.step},
                 {"final",
                  {{"step", last.step},
                   {"loss", last.train_loss},
                   {"val_loss", last.val_loss},
                   {"val_acc_identity", last.val_acc_identity},
                   {"val_acc_majority", last.val_acc_majority},
                   {"muladds_fwd", last.muladds_fwd},
                   {"ms_fwd", last.ms_fwd}}},
                 {"flops_fwd", mean_flops(state.config, eval_split(c, splits))},
                 {"train_seconds", last.elapsed_s},
                 {"checkpoint", tc.checkpoint_path}});
    return 0;
}

int run_eval(const Context& ctx) {
    const auto& c = ctx.config;
    const auto state = load_model(ctx, c.checkpoint);
    const auto splits = load_splits(c);
    const auto split = eval_split(c, splits);
    const auto encoder = make_encoder(c);
    const EvalPoint p = eval_point(ctx, state, state.config, encoder, split);
    emit(ctx, "eval.csv", point_csv_header() + point_csv_row(p));
    json body = point_json(p);
    body["task"] = task_signature(c);
    body["split"] = c.split;
    body["samples"] = split.size();
    emit_report(ctx, "eval", body);
    std::cout << "accuracy " << format_number(p.eval.accuracy) << " (cell " << format_number(p.eval.acc_cell)
              << ", majority " << format_number(p.eval.acc_majority) << "), nll " << format_number(p.eval.mean_nll)
              << ", " << format_number(p.timing.median_ms) << " ms/prefill\n";
    return 0;
}

int run_sweep(const Context& ctx) {
    const auto& c = ctx.config;
    const auto state = load_model(ctx, c.checkpoint);
    const auto splits = load_splits(c);
    const auto split = eval_split(c, splits);
    const auto encoder = make_encoder(c);
    const auto layers = parse_list(c.layers, "run.layers");
    const auto sweep = selection::noretrain_sweep(state.weights, state.adapter, encoder, state.config, layers, split);
    emit(ctx, "sweep.csv", sweep.to_csv());
    const auto criterion = selection::parse_criterion(c.criterion);
    if (criterion == selection::Criterion::expected_depth) {
        throw ConfigError("sweep: run.criterion expected-depth applies to rl-select only");
    }
    const std::size_t pick = selection::select_layer(sweep, criterion, c.knee_delta);
    json entries = json::array();
    for (const auto& e : sweep.entries) {
        entries.push_back({{"insert_layer", e.insert_layer},
                           {"accuracy", e.eval.accuracy},
                           {"nll", e.eval.mean_nll},
                           {"flops", e.flops}});
    }
    emit_report(
        ctx, "sweep",
        {{"task", task_signature(c)}, {"entries", entries}, {"criterion", c.criterion}, {"recommended_layer", pick}});
    std::cout << "recommended insert layer (" << c.criterion << "): " << pick << "\n";
    return 0;
}

int run_rl_select(const Context& ctx) {
    const auto& c = ctx.config;
    const auto state = load_model(ctx, c.checkpoint);
    const auto splits = load_splits(c);
    const auto encoder = make_encoder(c);
    const auto n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(c.policy_subset * static_cast<double>(splits.train.size()))));
    const std::vector<GridSample> subset(splits.train.begin(), splits.train.begin() + static_cast<std::ptrdiff_t>(n));
    const auto result =
        selection::reinforce_train(state.weights, state.adapter, encoder, state.config, c.policy, subset);
    emit(ctx, "rewards.csv", result.reward_csv());
    std::ostringstream probs;
    probs << "insert_layer,mean_probability\n";
    for (std::size_t k = 0; k < result.policy.candidates.size(); ++k) {
        probs << result.policy.candidates[k] << ',' << format_number(result.mean_probabilities[k]) << '\n';
    }
    emit(ctx, "policy.csv", probs.str());
    const std::size_t pick = selection::select_layer(result, selection::Criterion::expected_depth);
    emit_report(ctx, "rl-select",
                {{"task", task_signature(c)},
                 {"lambda", c.policy.lambda},
                 {"subset", n},
                 {"expected_depth", result.expected_depth},
                 {"modal_layer", result.modal_layer},
                 {"recommended_layer", pick}});
    std::cout << "expected depth " << format_number(result.expected_depth) << ", modal layer " << result.modal_layer
              << ", recommended " << pick << "\n";
    return 0;
}

int run_flops(const Context& ctx) {
    const auto& c = ctx.config;
    analysis::FlopsQuery q = analysis::FlopsQuery::from(c.model, c.flops_text_length, c.flops_mm_length);
    try {
        q.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto report = analysis::flops_deepinsert(q);
    const auto lengths = analysis::effective_lengths(q, c.prune);
    std::ostringstream csv;
    csv << "layer,length,projection,attention,feed_forward,total\n";
    analysis::LayerFlops sum;
    for (std::size_t l = 0; l < lengths.size(); ++l) {
        const auto f = analysis::flops_per_layer(lengths[l], q.d_model, q.d_ff, q.n_heads);
        sum += f;
        csv << l << ',' << lengths[l] << ',' << f.projection << ',' << f.attention << ',' << f.feed_forward << ','
            << f.total() << '\n';
    }
    emit(ctx, "flops.csv", csv.str());
    emit_report(ctx, "flops",
                {{"query",
                  {{"n_layers", q.n_layers},
                   {"d_model", q.d_model},
                   {"d_ff", q.d_ff},
                   {"n_heads", q.n_heads},
                   {"text_length", q.text_length},
                   {"mm_length", q.mm_length},
                   {"insert_layer", q.insert_layer}}},
                 {"total", sum.total()},
                 {"total_without_pruning", report.total},
                 {"subtractive_form", analysis::flops_subtractive(q)},
                 {"split_form", analysis::flops_split(q)}});
    std::cout << "total " << sum.total() << "\n";
    return 0;
}

int run_analyze_attn(const Context& ctx) {
    const auto& c = ctx.config;
    const auto state = load_model(ctx, c.checkpoint);
    const auto splits = load_splits(c);
    auto split = c.split == "test" ? splits.test : splits.val;
    if (split.size() > c.analysis_samples) split.resize(c.analysis_samples);
    const auto encoder = make_encoder(c);
    const modality::GridVocab vocab{c.data.grid_size, c.data.n_symbols};

    std::vector<analysis::AttentionTrace> prompt_traces, answer_traces;
    for (const auto& s : split) {
        const auto layout = training::make_layout(s, encoder, state.adapter, state.config);
        auto answer = analysis::capture_answer_trace(layout, state.weights, state.config, vocab.symbol_tokens());
        if (answer.answer_token != s.answer_token) continue;
        prompt_traces.push_back(analysis::capture_prompt_trace(layout, state.weights, state.config));
        answer_traces.push_back(std::move(answer.trace));
    }
    if (prompt_traces.empty()) throw std::runtime_error("analyze-attn: no correctly answered samples to analyze");
    const std::size_t mm_length = c.data.grid_size * c.data.grid_size;
    const auto map = analysis::token_contribution_map(prompt_traces, 1, mm_length, c.top_k, c.exclude_first);
    for (const auto& w : map.warnings) std::cerr << "warning: " << w << "\n";
    const auto var = analysis::var_per_layer(answer_traces);

    emit(ctx, "contribution.csv",
         analysis::matrix_csv(map.scores, "layer", index_labels(map.scores.rows(), ""), index_labels(mm_length, "mm")));
    emit(ctx, "contribution.svg",
         analysis::heatmap_svg(map.scores, "Layer-relative contribution per multimodal token", "layer", "token"));
    std::ostringstream var_csv;
    var_csv << "layer,var,language_ratio\n";
    for (std::size_t l = 0; l < var.size(); ++l) {
        var_csv << l << ',' << format_number(var[l]) << ',' << format_number(1.0 - var[l]) << '\n';
    }
    emit(ctx, "var.csv", var_csv.str());
    emit(ctx, "trace_first.jsonl", analysis::trace_to_jsonl(prompt_traces.front()));
    emit_report(ctx, "analyze-attn",
                {{"task", task_signature(c)},
                 {"insert_layer", state.config.insert_layer},
                 {"samples", split.size()},
                 {"correct", prompt_traces.size()},
                 {"var", var},
                 {"warnings", map.warnings}});
    return 0;
}

int run_align(const Context& ctx) {
    const auto& c = ctx.config;
    const auto a = load_model(ctx, c.checkpoint);
    const auto b = c.other_checkpoint.empty() ? a : load_model(ctx, c.other_checkpoint);
    const auto splits = load_splits(c);
    auto samples = c.split == "test" ? splits.test : splits.val;
    if (samples.size() > c.align_samples) samples.resize(c.align_samples);
    if (c.align_k >= samples.size()) {
        throw ConfigError("align.k (" + std::to_string(c.align_k) + ") must be below the sample count (" +
                          std::to_string(samples.size()) + ")");
    }
    const auto encoder = make_encoder(c);
    const auto fa = analysis::collect_layer_features(samples, a.weights, a.adapter, encoder, a.config);
    const auto fb = analysis::collect_layer_features(samples, b.weights, b.adapter, encoder, b.config);
    const auto grid = analysis::alignment_grid(fa, fb, c.align_k);
    emit(ctx, "alignment.csv",
         analysis::matrix_csv(grid, "layer_a", index_labels(grid.rows(), ""), index_labels(grid.cols(), "b")));
    emit(ctx, "alignment.svg", analysis::heatmap_svg(grid, "Mutual k-NN alignment", "model A layer", "model B layer"));
    double diag = 0.0;
    const std::size_t n_diag = std::min(grid.rows(), grid.cols());
    for (std::size_t i = 0; i < n_diag; ++i) diag += grid(i, i) / static_cast<double>(n_diag);
    emit_report(ctx, "align", {{"samples", samples.size()}, {"k", c.align_k}, {"mean_diagonal", diag}});
    return 0;
}

int run_tradeoff(const Context& ctx) {
    const auto& c = ctx.config;
    struct Point {
        std::size_t layer;
        double accuracy, flops, ms;
    };
    std::vector<Point> points;
    if (!c.reports.empty()) {
        std::stringstream in(c.reports);
        std::string path, task;
        while (std::getline(in, path, ',')) {
            if (path.empty()) continue;
            const json r = json::parse(common::read_file(path));
            if (r.value("command", "") != "eval") throw std::runtime_error(path + ": not an eval report");
            const auto t = r.at("task").get<std::string>();
            if (!task.empty() && t != task) {
                throw std::runtime_error("tradeoff: mixed tasks (" + task + " vs " + t + " in " + path + ")");
            }
            task = t;
            points.push_back({r.at("insert_layer").get<std::size_t>(), r.at("accuracy").get<double>(),
                              r.at("flops").get<double>(), r.at("median_ms").get<double>()});
        }
    } else {
        const auto state = load_model(ctx, c.checkpoint);
        const auto splits = load_splits(c);
        const auto split = eval_split(c, splits);
        const auto encoder = make_encoder(c);
        for (std::size_t layer : parse_list(c.layers, "run.layers")) {
            const auto config = model::with_insert_layer(state.config, layer);
            const auto p = eval_point(ctx, state, config, encoder, split);
            points.push_back({layer, p.eval.accuracy, p.flops, p.timing.median_ms});
        }
    }
    if (points.size() < 2) throw ConfigError("tradeoff: need at least two runs");
    std::stable_sort(points.begin(), points.end(), [](const Point& a, const Point& b) { return a.layer < b.layer; });

    std::ostringstream csv;
    csv << "layer,accuracy,flops,ms\n";
    std::vector<double> x, acc, flops, ms;
    json rows = json::array();
    for (const auto& p : points) {
        csv << p.layer << ',' << format_number(p.accuracy) << ',' << format_number(p.flops) << ','
            << format_number(p.ms) << '\n';
        x.push_back(static_cast<double>(p.layer));
        acc.push_back(p.accuracy);
        flops.push_back(p.flops);
        ms.push_back(p.ms);
        rows.push_back({{"layer", p.layer}, {"accuracy", p.accuracy}, {"flops", p.flops}, {"ms", p.ms}});
    }
    emit(ctx, "tradeoff.csv", csv.str());
    emit(ctx, "tradeoff.svg",
         analysis::line_chart_svg("Accuracy and forward cost vs insertion layer", "insertion layer", x,
                                  {{"accuracy", acc}, {"analytical FLOPs", flops}, {"median ms", ms}}));
    emit_report(ctx, "tradeoff", {{"points", rows}});
    return 0;
}

int run_generate(const Context& ctx) {
    const auto& c = ctx.config;
    const auto state = load_model(ctx, c.checkpoint);
    const auto splits = load_splits(c);
    const auto& split = c.split == "test" ? splits.test : splits.val;
    if (c.sample_index >= split.size()) {
        throw ConfigError("generate.sample_index " + std::to_string(c.sample_index) + " outside split of " +
                          std::to_string(split.size()));
    }
    const auto& sample = split[c.sample_index];
    const auto encoder = make_encoder(c);
    insertion::GenerateOptions options;
    options.max_new_tokens = c.max_new_tokens;
    options.stop_token = modality::GridVocab::eos;
    options.prune = c.prune;
    const auto tokens = insertion::generate(training::make_layout(sample, encoder, state.adapter, state.config),
                                            state.weights, state.config, options);
    emit(ctx, "generate.json",
         json{{"sample_index", c.sample_index},
              {"prompt", sample.prompt_template()},
              {"generated", tokens},
              {"gold_answer", sample.answer_token}}
                 .dump(2) +
             "\n");
    std::ostringstream csv;
    csv << "index,token\n";
    for (std::size_t i = 0; i < tokens.size(); ++i) csv << i << ',' << tokens[i] << '\n';
    emit(ctx, "generate.csv", csv.str());
    emit_report(ctx, "generate", {{"generated", tokens}, {"gold_answer", sample.answer_token}});
    for (auto t : tokens) std::cout << t << ' ';
    std::cout << "\n";
    return 0;
}

}  // namespace deepinsert::cli

#include "run_config.hpp"

#include <yaml-cpp/yaml.h>

#include <map>
#include <sstream>

#include "deepinsert/common/io.hpp"

namespace deepinsert::cli {

RunConfig::RunConfig() {
    // Desk-scale defaults; see README for the budget.
    model.n_layers = 8;
    model.d_model = 64;
    model.d_ff = 128;
    model.n_heads = 4;
    model.max_positions = 32;
    train.lr = 1.5e-3;
    train.warmup_steps = 200;
    train.batch_size = 16;
    train.steps = 6000;
    train.eval_interval = 500;
}

namespace {

template <typename T>
std::string text_of(const T& v) {
    if constexpr (std::is_same_v<T, std::string>) {
        return v;
    } else if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
        return common::format_number(static_cast<double>(v));
    } else {
        return std::to_string(v);
    }
}

void flatten(const YAML::Node& node, const std::string& prefix, std::vector<std::string>& out) {
    if (node.IsMap()) {
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
        }
    } else if (node.IsSequence()) {
        std::string joined;
        for (std::size_t i = 0; i < node.size(); ++i) joined += (i ? "," : "") + node[i].as<std::string>();
        out.push_back("--" + prefix + "=" + joined);
    } else if (node.IsScalar()) {
        out.push_back("--" + prefix + "=" + node.as<std::string>());
    } else if (!node.IsNull()) {
        throw ConfigError("config: unsupported value at '" + prefix + "'");
    }
}

}  // namespace

template <typename T>
void ConfigBinder::add(const std::string& key, T& ref, const std::string& help) {
    CLI::Option* opt = app_.add_option("--" + key, ref, help)->capture_default_str();
    fields_.push_back({key, opt, [&ref] { return text_of(ref); }});
}

ConfigBinder::ConfigBinder(CLI::App& app, RunConfig& c) : app_(app) {
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    add("data.seed", c.data.seed, "dataset seed");
    add("data.size", c.data.size, "total samples over all splits");
    add("data.grid_size", c.data.grid_size, "grid side length");
    add("data.n_symbols", c.data.n_symbols, "distinct cell symbols");
    add("data.cell_fraction", c.data.cell_fraction, "fraction of cell-identity queries");
    add("data.val_fraction", c.data.val_fraction, "validation fraction");
    add("data.test_fraction", c.data.test_fraction, "test fraction");
    add("data.dir", c.data_dir, "directory with train/val/test.jsonl (empty: generate)");

    add("encoder.seed", c.encoder_seed, "frozen encoder seed");
    add("encoder.d_enc", c.d_enc, "encoder feature width");
    add("encoder.d_symbol", c.d_symbol, "encoder symbol table width");
    add("adapter.hidden", c.adapter_hidden, "adapter hidden width");

    add("model.n_layers", c.model.n_layers, "transformer layers");
    add("model.d_model", c.model.d_model, "model width");
    add("model.d_ff", c.model.d_ff, "feed-forward width");
    add("model.n_heads", c.model.n_heads, "attention heads");
    add("model.max_positions", c.model.max_positions, "maximum sequence length");
    add("model.insert_layer", c.model.insert_layer, "first layer that sees multimodal tokens");

    add("train.lr", c.train.lr, "peak learning rate");
    add("train.schedule", c.schedule, "constant or cosine");
    add("train.warmup_steps", c.train.warmup_steps, "linear warmup steps");
    add("train.batch_size", c.train.batch_size, "samples per step");
    add("train.steps", c.train.steps, "optimizer steps");
    add("train.eval_interval", c.train.eval_interval, "steps between evaluations");
    add("train.eval_limit", c.train.eval_limit, "validation samples per evaluation (0: all)");
    add("train.seed", c.train.seed, "initialization and batching seed");
    add("train.grad_clip", c.train.grad_clip, "global gradient norm clip (0: off)");
    add("train.checkpoint_interval", c.train.checkpoint_interval, "steps between checkpoints (0: end only)");

    add("prune.mode", c.prune_mode, "none, fastv or vtw");
    add("prune.start_layer", c.prune.start_layer, "fastv: first pruned layer");
    add("prune.retention", c.prune.retention, "fastv: kept fraction of multimodal tokens");
    add("prune.exit_layer", c.prune.exit_layer, "vtw: first layer without multimodal tokens");

    add("run.out_dir", c.out_dir, "output directory (relative to $DEEPINSERT_OUTPUT_ROOT if set)");
    add("run.checkpoint", c.checkpoint, "input checkpoint");
    add("run.resume", c.resume, "train: continue from run.checkpoint");
    add("run.split", c.split, "val or test");
    add("run.layers", c.layers, "candidate insertion layers, comma-separated");
    add("run.reports", c.reports, "tradeoff: report.json files, comma-separated");
    add("run.timing_reps", c.timing_reps, "timed prefill repetitions");
    add("run.timing_warmup", c.timing_warmup, "untimed warmup prefills");
    add("run.criterion", c.criterion, "best-accuracy, knee or expected-depth");
    add("run.knee_delta", c.knee_delta, "knee tolerance in accuracy points");

    add("policy.lambda", c.policy.lambda, "weight of the skipped-depth reward");
    add("policy.lr", c.policy.lr, "policy learning rate");
    add("policy.rollout_steps", c.policy.rollout_steps, "REINFORCE rollouts");
    add("policy.candidates", c.policy_candidates, "candidate layers, comma-separated");
    add("policy.hidden", c.policy.hidden, "policy hidden width");
    add("policy.seed", c.policy.seed, "policy seed");
    add("policy.subset", c.policy_subset, "fraction of the training split used for rollouts");

    add("analysis.samples", c.analysis_samples, "samples traced by analyze-attn");
    add("analysis.top_k", c.top_k, "heads averaged per token in the contribution map");
    add("analysis.exclude_first", c.exclude_first, "layers left out of the contribution map");
    add("align.samples", c.align_samples, "samples used for alignment");
    add("align.k", c.align_k, "neighbors per sample");
    add("align.other_checkpoint", c.other_checkpoint, "second model (empty: the first model again)");

    add("flops.text_length", c.flops_text_length, "language tokens");
    add("flops.mm_length", c.flops_mm_length, "multimodal tokens");

    add("generate.max_new_tokens", c.max_new_tokens, "tokens to generate");
    add("generate.sample_index", c.sample_index, "split index of the prompt");

    app.add_option("--config", "YAML run configuration");
}

std::vector<std::string> ConfigBinder::yaml_to_args(const std::filesystem::path& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    std::vector<std::string> out;
    flatten(root, "", out);
    return out;
}

bool ConfigBinder::was_set(const std::string& key) const {
    for (const auto& f : fields_) {
        if (f.key == key) return f.option->count() > 0;
    }
    throw std::logic_error("unknown config key " + key);
}

std::string ConfigBinder::to_yaml() const {
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    std::vector<std::string> order;
    for (const auto& f : fields_) {
        const auto dot = f.key.find('.');
        const auto section = f.key.substr(0, dot);
        if (!sections.contains(section)) order.push_back(section);
        sections[section].emplace_back(f.key.substr(dot + 1), f.get());
    }
    YAML::Emitter out;
    out << YAML::BeginMap;
    for (const auto& section : order) {
        out << YAML::Key << section << YAML::Value << YAML::BeginMap;
        for (const auto& [k, v] : sections[section]) out << YAML::Key << k << YAML::Value << v;
        out << YAML::EndMap;
    }
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::vector<std::size_t> parse_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoul(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(what + ": '" + item + "' is not a non-negative integer");
        }
    }
    if (out.empty()) throw ConfigError(what + ": empty list");
    return out;
}

void finalize(RunConfig& c) {
    try {
        c.train.schedule = training::parse_schedule(c.schedule);
        if (c.prune_mode == "none") {
            c.prune.mode = insertion::PruneMode::none;
        } else if (c.prune_mode == "fastv") {
            c.prune.mode = insertion::PruneMode::fastv;
        } else if (c.prune_mode == "vtw") {
            c.prune.mode = insertion::PruneMode::vtw;
        } else {
            throw ConfigError("prune.mode: expected none, fastv or vtw, got '" + c.prune_mode + "'");
        }
        if (c.split != "val" && c.split != "test") throw ConfigError("run.split: expected val or test");
        selection::parse_criterion(c.criterion);
        c.policy.candidates = parse_list(c.policy_candidates, "policy.candidates");
        parse_list(c.layers, "run.layers");
        const modality::GridVocab vocab{c.data.grid_size, c.data.n_symbols};
        c.model.vocab_size = vocab.size();
        c.train.validate();
        c.model.validate();
        c.prune.validate(c.model);
        if (!(c.policy_subset > 0.0 && c.policy_subset <= 1.0)) throw ConfigError("policy.subset must be in (0, 1]");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace deepinsert::cli

#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/modality/grid_task.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/selection/selection.hpp"
#include "deepinsert/training/trainer.hpp"

namespace deepinsert::cli {

// Thrown for configuration problems; maps to exit status 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    modality::DatasetConfig data;
    std::string data_dir;  // empty: generate splits in memory from data.*

    std::uint64_t encoder_seed = 0;
    std::size_t d_enc = 16;
    std::size_t d_symbol = 16;
    std::size_t adapter_hidden = 64;

    model::ModelConfig model;
    training::TrainConfig train;
    std::string schedule = "cosine";

    std::string prune_mode = "none";
    insertion::PruneConfig prune;

    std::string out_dir = "runs/default";
    std::string checkpoint;
    bool resume = false;
    std::string split = "val";
    std::string layers = "0,2,4,6";
    std::string reports;  // comma-separated report.json paths for tradeoff
    std::size_t timing_reps = 30;
    std::size_t timing_warmup = 5;
    std::string criterion = "knee";
    double knee_delta = 1.0;

    selection::PolicyConfig policy;
    std::string policy_candidates = "0,2,4,6";
    double policy_subset = 0.1;

    std::size_t analysis_samples = 64;
    std::size_t top_k = 5;
    std::size_t exclude_first = 0;
    std::size_t align_samples = 256;
    std::size_t align_k = 10;
    std::string other_checkpoint;

    std::uint64_t flops_text_length = 3;
    std::uint64_t flops_mm_length = 2;

    std::size_t max_new_tokens = 4;
    std::size_t sample_index = 0;

    RunConfig();
};

// Every configurable field as a dotted "section.key" flag.
class ConfigBinder {
public:
    ConfigBinder(CLI::App& app, RunConfig& config);

    // YAML file -> flag list; nested maps become dotted keys, sequences are
    // joined with commas.
    static std::vector<std::string> yaml_to_args(const std::filesystem::path& path);

    bool was_set(const std::string& key) const;
    // Fully resolved configuration as YAML.
    std::string to_yaml() const;

private:
    struct Field {
        std::string key;
        CLI::Option* option;
        std::function<std::string()> get;
    };
    template <typename T>
    void add(const std::string& key, T& ref, const std::string& help);

    CLI::App& app_;
    std::vector<Field> fields_;
};

// Copies string-typed settings into their typed counterparts and validates.
void finalize(RunConfig& config);

std::vector<std::size_t> parse_list(const std::string& text, const std::string& what);

}  // namespace deepinsert::cli

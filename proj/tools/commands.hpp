#pragma once

#include <filesystem>
#include <string>

#include "run_config.hpp"

namespace deepinsert::cli {

struct Context {
    RunConfig config;
    const ConfigBinder* binder = nullptr;
    std::filesystem::path out_dir;
    std::string config_yaml;
    std::string config_hash;
};

int run_gen_data(const Context& ctx);
int run_train(const Context& ctx);
int run_eval(const Context& ctx);
int run_sweep(const Context& ctx);
int run_rl_select(const Context& ctx);
int run_flops(const Context& ctx);
int run_analyze_attn(const Context& ctx);
int run_align(const Context& ctx);
int run_tradeoff(const Context& ctx);
int run_generate(const Context& ctx);

}  // namespace deepinsert::cli

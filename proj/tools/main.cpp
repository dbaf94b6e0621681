#include <cstdlib>
#include <iostream>
#include <map>

#include "commands.hpp"
#include "deepinsert/common/io.hpp"
#include "deepinsert/model/checkpoint.hpp"
#include "run_config.hpp"

using namespace deepinsert;

namespace {

// Value of --config, if any, without disturbing the argument list.
std::string find_config_path(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].starts_with("--config=")) return args[i].substr(9);
    }
    return "";
}

std::filesystem::path resolve_out_dir(const std::string& out_dir) {
    std::filesystem::path dir(out_dir);
    if (const char* root = std::getenv("DEEPINSERT_OUTPUT_ROOT"); root && *root && dir.is_relative()) {
        dir = std::filesystem::path(root) / dir;
    }
    return dir;
}

}  // namespace

int main(int argc, char** argv) {
    cli::RunConfig config;
    CLI::App app{"Late-entry multimodal insertion toolkit on a synthetic grid-QA task"};
    app.fallthrough();
    const cli::ConfigBinder binder(app, config);

    using Handler = int (*)(const cli::Context&);
    const std::vector<std::tuple<std::string, std::string, Handler>> commands{
        {"gen-data", "write train/val/test splits as JSONL", cli::run_gen_data},
        {"train", "train transformer and adapter at model.insert_layer", cli::run_train},
        {"eval", "evaluate a checkpoint", cli::run_eval},
        {"sweep", "evaluate a checkpoint at each run.layers without retraining", cli::run_sweep},
        {"rl-select", "train a REINFORCE layer-selection policy", cli::run_rl_select},
        {"flops", "analytical FLOPs for a model and prompt shape", cli::run_flops},
        {"analyze-attn", "token contribution map and attention ratio per layer", cli::run_analyze_attn},
        {"align", "mutual k-NN alignment between the layers of two models", cli::run_align},
        {"tradeoff", "accuracy vs forward cost over insertion layers", cli::run_tradeoff},
        {"generate", "greedy generation for one prompt", cli::run_generate},
    };
    std::map<const CLI::App*, Handler> handlers;
    for (const auto& [name, help, fn] : commands) handlers[app.add_subcommand(name, help)] = fn;
    app.require_subcommand(1, 1);

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        if (const auto path = find_config_path(args); !path.empty()) {
            auto from_file = cli::ConfigBinder::yaml_to_args(path);
            args.insert(args.begin(), from_file.begin(), from_file.end());
        }
        std::reverse(args.begin(), args.end());
        app.parse(args);
        cli::finalize(config);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    cli::Context ctx;
    ctx.config = config;
    ctx.binder = &binder;
    ctx.out_dir = resolve_out_dir(config.out_dir);
    ctx.config_yaml = binder.to_yaml();
    ctx.config_hash = common::fnv1a_hex(ctx.config_yaml);
    const CLI::App* chosen = app.get_subcommands().front();
    try {
        std::filesystem::create_directories(ctx.out_dir);
        common::write_file_atomic(ctx.out_dir / "config.yaml", ctx.config_yaml);
        return handlers.at(chosen)(ctx);
    } catch (const cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

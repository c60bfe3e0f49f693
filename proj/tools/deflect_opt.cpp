// deflect-opt: runs configured sweeps and writes CSV tables.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "deflect/deflect.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

deflect::ScenarioConfig load(const std::string& path) {
    auto cfg = deflect::parse_config(read_file(path));
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deflection-based power allocation sweeps for sensor networks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    auto* run = app.add_subcommand("run", "Run the sweep described by a config file");
    run->add_option("config", config_path, "Scenario config")->required();
    auto* seed_opt = run->add_option("--seed", seed, "Override the base seed");
    auto* threads_opt = run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* validate = app.add_subcommand("validate", "Parse and validate a config file");
    validate->add_option("config", config_path, "Scenario config")->required();

    std::string preset_name;
    auto* preset = app.add_subcommand("preset", "Print a built-in config");
    preset->add_option("name", preset_name, "Preset name");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto cfg = load(config_path);
            if (*seed_opt) cfg.sim.seed = seed;
            if (*threads_opt) cfg.sim.threads = threads;
            for (const auto& path : deflect::run_scenario(cfg, out_dir)) std::cout << path.string() << '\n';
            return 0;
        }
        if (*validate) {
            const auto cfg = load(config_path);
            std::cout << config_path << ": ok (" << deflect::to_string(cfg.kind) << ", " << cfg.model.size()
                      << " sensors)\n";
            return 0;
        }
        if (*preset) {
            if (const auto text = deflect::preset_text(preset_name)) {
                std::cout << *text;
                return 0;
            }
            if (!preset_name.empty()) std::cerr << "unknown preset '" << preset_name << "'\n";
            std::cerr << "available presets:\n";
            for (const auto& n : deflect::preset_names()) std::cerr << "  " << n << '\n';
            return preset_name.empty() ? 0 : 2;
        }
    } catch (const deflect::ConfigError& e) {
        std::cerr << config_path << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

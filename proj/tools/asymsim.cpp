// asymsim: batch experiments over the asymmetric-memory inference simulator.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "asymsim/experiments.hpp"

namespace fs = std::filesystem;
using namespace asymsim;

namespace {

struct Args {
    std::string config;
    std::string preset;
    int jobs = 1;
    std::string out = "results";
    std::optional<std::uint64_t> seed;
    bool no_translation = false;
    std::string barrier;
    std::string frag_mode;
};

ExperimentConfig load(const Args& a) {
    if (a.config.empty() == a.preset.empty())
        throw ConfigError("give exactly one of --config or --preset");
    ExperimentConfig cfg = a.config.empty() ? experiment_preset(a.preset)
                                            : parse_experiment(ConfigDocument::load(a.config));
    Overrides o;
    o.seed = a.seed;
    o.no_translation = a.no_translation;
    if (!a.barrier.empty()) o.barrier = parse_barrier_mode(a.barrier);
    if (!a.frag_mode.empty()) o.frag_mode = parse_frag_mode(a.frag_mode);
    apply_overrides(cfg, o);
    return cfg;
}

void write(const Args& a, const std::string& stem, const Table& t) {
    fs::create_directories(a.out);
    const fs::path path = fs::path(a.out) / (stem + ".csv");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimError("cannot write " + path.string());
    f << t.to_csv();
    if (!f) throw SimError("write failed: " + path.string());
    std::printf("wrote %s (%zu rows)\n", path.string().c_str(), t.rows.size());
}

std::string stem(const std::string& cmd, const Args& a) {
    return a.preset.empty() ? cmd : cmd + "-" + a.preset;
}

void add_common(CLI::App* sub, Args& a) {
    sub->add_option("--config", a.config, "Experiment config file (JSON)");
    sub->add_option("--preset", a.preset, "Built-in experiment preset");
    sub->add_option("--jobs", a.jobs, "Grid points run concurrently")->check(CLI::Range(1, 1024));
    sub->add_option("--out", a.out, "Output directory");
    sub->add_option("--seed", a.seed, "Seed of the dynamic scenario");
    sub->add_flag("--no-translation", a.no_translation, "Disable address-translation costs");
    sub->add_option("--barrier", a.barrier, "Barrier granularity")->check(CLI::IsMember({"stage", "kernel"}));
    sub->add_option("--frag-mode", a.frag_mode, "Fragmentation accounting")
        ->check(CLI::IsMember({"residue", "slack"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Asymmetric HBM/LPDDR memory simulator for LLM decoding"};
    app.require_subcommand(1);
    Args a;

    auto* sweep = app.add_subcommand("sweep", "Static grid over batch size, sequence length and system");
    auto* dynamic = app.add_subcommand("dynamic", "Multi-iteration run with growing and finishing requests");
    auto* frag = app.add_subcommand("frag", "Page fragmentation breakdown");
    auto* sens = app.add_subcommand("sensitivity", "Greedy speedup across platform presets");
    for (auto* s : {sweep, dynamic, frag, sens}) add_common(s, a);

    std::string show;
    auto* presets = app.add_subcommand("presets", "List built-in presets or print one");
    presets->add_option("name", show, "Preset to print");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*presets) {
            if (show.empty()) {
                for (const auto& n : experiment_preset_names()) std::printf("%s\n", n.c_str());
            } else {
                std::printf("%s\n", experiment_preset_text(show).c_str());
            }
            return 0;
        }
        const ExperimentConfig cfg = load(a);
        if (*sweep) {
            const auto records = run_sweep(cfg, a.jobs);
            write(a, stem("sweep", a), sweep_table(records));
            write(a, stem("sweep", a) + "-summary", sweep_summary(records));
        } else if (*dynamic) {
            write(a, stem("dynamic", a), dynamic_table(run_dynamic(cfg, a.jobs), cfg.dynamic));
        } else if (*frag) {
            write(a, stem("frag", a), frag_table(run_frag(cfg), cfg.platform.bandwidth_tier.capacity));
        } else if (*sens) {
            write(a, stem("sensitivity", a), sensitivity_table(run_sensitivity(cfg, a.jobs)));
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const OutOfMemory& e) {
        std::fprintf(stderr, "out of memory: %s\n", e.what());
        return 3;
    } catch (const BudgetExceeded& e) {
        std::fprintf(stderr, "search budget exceeded: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

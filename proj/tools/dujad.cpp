// Command-line front end: gen, train, eval, verify.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acceptance.hpp"
#include "dujad/harness.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
};

dujad::ExperimentConfig load(const Common& c) {
    auto kv = dujad::KeyValueConfig::load(c.config);
    if (c.seed) kv.set("seed", std::to_string(*c.seed));
    return dujad::experiment_from_config(kv);
}

int cmd_gen(const Common& c, const std::string& out, std::optional<int> trials, std::optional<int> P) {
    const auto cfg = load(c);
    auto scenario = cfg.scenario;
    scenario.P = P.value_or(cfg.P_sweep.front());
    scenario.validate();
    const int count = trials.value_or(cfg.trials);
    const auto pilots = dujad::experiment_pilots(scenario, cfg.seed);
    std::vector<dujad::Instance> instances;
    instances.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) {
        auto rng = dujad::trial_stream(cfg.seed, scenario.P, t);
        const auto geo = dujad::generate_geometry(scenario, rng);
        instances.push_back(dujad::generate_instance(scenario, geo, pilots, rng));
    }
    dujad::write_instances(out, instances);
    std::cout << "wrote " << count << " instances (P=" << scenario.P << ") to " << out << '\n';
    return 0;
}

int cmd_train(const Common& c, std::string checkpoint, const std::string& trace_dir) {
    const auto cfg = load(c);
    if (checkpoint.empty()) checkpoint = cfg.checkpoint;
    if (checkpoint.empty()) throw dujad::ConfigError("checkpoint", "no checkpoint path given");
    {
        std::ofstream probe(checkpoint, std::ios::app);
        if (!probe) throw std::runtime_error("checkpoint '" + checkpoint + "' is not writable");
    }
    const auto report = dujad::train_all(cfg, true);
    dujad::save_checkpoint(checkpoint, report.checkpoint);
    if (!trace_dir.empty()) {
        std::filesystem::create_directories(trace_dir);
        for (std::size_t i = 0; i < report.checkpoint.models.size(); ++i) {
            const auto P = std::to_string(report.checkpoint.models[i].P);
            dujad::write_trace_csv(trace_dir + "/fbs_P" + P + ".csv", report.fbs_traces[i]);
            dujad::write_trace_csv(trace_dir + "/aud_P" + P + ".csv", report.aud_traces[i]);
        }
    }
    std::cout << "wrote checkpoint " << checkpoint << '\n';
    return 0;
}

int cmd_eval(const Common& c, const std::string& out, const std::string& checkpoint, std::optional<int> trials,
             const std::vector<std::string>& methods) {
    auto cfg = load(c);
    if (!out.empty()) cfg.output = out;
    if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
    if (trials) cfg.trials = *trials;
    if (!methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : methods) cfg.methods.push_back(dujad::parse_method(m));
    }
    cfg.validate();
    const auto rows = dujad::run_experiment(cfg);
    dujad::export_csv(rows, cfg.output);
    dujad::write_summary(std::cout, dujad::aggregate(rows));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint activity and data detection for grant-free cell-free uplink"};
    app.require_subcommand(1);

    Common common;
    std::string out, checkpoint, trace_dir;
    std::optional<int> trials, P;
    std::vector<std::string> methods;
    bool full = false;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", common.config, "experiment config file (key = value)");
        if (config_required) opt->required();
        sub->add_option("--seed", common.seed, "override the config seed");
    };

    auto* gen = app.add_subcommand("gen", "write a dataset of simulated instances");
    add_common(gen, true);
    gen->add_option("--out", out, "dataset file")->required();
    gen->add_option("--trials", trials, "number of instances (default: config trials)");
    gen->add_option("--P", P, "AP count (default: first of P_sweep)");

    auto* train = app.add_subcommand("train", "fit one network and AUD head per AP count");
    add_common(train, true);
    train->add_option("--checkpoint", checkpoint, "checkpoint file to write (default: config checkpoint)");
    train->add_option("--out", trace_dir, "directory for training traces");

    auto* eval = app.add_subcommand("eval", "Monte-Carlo comparison of all methods");
    add_common(eval, true);
    eval->add_option("--out", out, "results CSV (default: config output)");
    eval->add_option("--checkpoint", checkpoint, "trained checkpoint (default: config checkpoint)");
    eval->add_option("--trials", trials, "trials per AP count");
    eval->add_option("--methods", methods, "subset of baseline1, baseline4_200it, baseline4_10it, dujad")
        ->delimiter(',');

    auto* verify = app.add_subcommand("verify", "run the oracle and property checks");
    verify->add_flag("--full", full, "include the training and desk-scale comparison checks");
    verify->add_option("--seed", common.seed, "seed for the seeded checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* bad = &app;
        for (auto* sub : app.get_subcommands()) bad = sub;
        std::cerr << bad->help();
        return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
    }

    try {
        if (*gen) return cmd_gen(common, out, trials, P);
        if (*train) return cmd_train(common, checkpoint, trace_dir);
        if (*eval) return cmd_eval(common, out, checkpoint, trials, methods);
        if (*verify) {
            dujad::acceptance::Options opt;
            opt.full = full;
            if (common.seed) opt.seed = *common.seed;
            return dujad::acceptance::run_all(opt, std::cout) == 0 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

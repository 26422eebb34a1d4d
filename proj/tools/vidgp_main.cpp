#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vidgp/cli.hpp"

using vidgp::cli::RunConfig;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string seed;
    std::vector<std::pair<std::string, std::string>> overrides;
};

/// Registers --config, --seed, and one override flag per config key.
void add_config_flags(CLI::App* cmd, RunConfig& cfg, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value configuration file");
    cmd->add_option("--seed", args.seed, "master seed (overrides the config file)");
    for (const std::string& key : cfg.keys()) {
        if (key == "seed") continue;
        auto setter = [&args, key](const std::string& v) {
            args.overrides.emplace_back(key, v);
            return true;
        };
        cmd->add_option_function<std::string>("--" + key, setter, cfg.describe(key));
    }
}

void resolve_config(RunConfig& cfg, const CommonArgs& args) {
    if (!args.config_path.empty()) cfg.load_file(args.config_path);
    for (const auto& [k, v] : args.overrides) cfg.set(k, v);
    if (!args.seed.empty()) cfg.set("seed", args.seed);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian inversion for Darcy flow with a deep generative prior"};
    app.require_subcommand(1);

    RunConfig cfg;

    // gen-data
    CommonArgs gen_args;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "generate training corpus, truth, observations");
    add_config_flags(gen, cfg, gen_args);
    gen->add_option("--out", gen_out, "output directory")->required();

    // train-dgp
    CommonArgs dgp_args;
    std::string dgp_data, dgp_out;
    CLI::App* dgp = app.add_subcommand("train-dgp", "train the generative prior");
    add_config_flags(dgp, cfg, dgp_args);
    dgp->add_option("--data", dgp_data, "dataset directory")->required();
    dgp->add_option("--out", dgp_out, "output directory")->required();

    // train-surrogate
    CommonArgs sur_args;
    std::string sur_data, sur_out;
    CLI::App* sur = app.add_subcommand("train-surrogate", "train the physics-constrained surrogate");
    add_config_flags(sur, cfg, sur_args);
    sur->add_option("--data", sur_data, "dataset directory")->required();
    sur->add_option("--out", sur_out, "output directory")->required();

    // infer
    CommonArgs inf_args;
    std::string inf_obs, inf_vae, inf_sur, inf_truth, inf_out;
    CLI::App* inf = app.add_subcommand("infer", "posterior estimation");
    add_config_flags(inf, cfg, inf_args);
    inf->add_option("--obs", inf_obs, "observation file")->required();
    inf->add_option("--vae", inf_vae, "trained generative prior model")->required();
    inf->add_option("--surrogate", inf_sur, "trained surrogate model (vi-nn / mcmc-nn)");
    inf->add_option("--truth", inf_truth, "true field for error reporting");
    inf->add_option("--out", inf_out, "output directory")->required();

    // gradcheck
    CommonArgs gc_args;
    std::string gc_vae, gc_obs, gc_out;
    std::vector<std::string> gc_surrogates;
    CLI::App* gc = app.add_subcommand("gradcheck", "surrogate/adjoint gradient agreement study");
    add_config_flags(gc, cfg, gc_args);
    gc->add_option("--vae", gc_vae, "trained generative prior model")->required();
    gc->add_option("--obs", gc_obs, "observation file")->required();
    gc->add_option("--surrogate", gc_surrogates, "SIZE=MODEL_PATH (repeatable)");
    gc->add_option("--out", gc_out, "output directory")->required();

    // render
    std::string render_in, render_out;
    CLI::App* render = app.add_subcommand("render", "field file to grayscale PGM");
    render->add_option("--in", render_in, "field file")->required();
    render->add_option("--out", render_out, "output image path")->required();

    // report
    std::string report_out;
    std::vector<std::string> report_dirs;
    CLI::App* report = app.add_subcommand("report", "combine report.csv rows from run directories");
    report->add_option("--out", report_out, "combined CSV path")->required();
    report->add_option("dirs", report_dirs, "run directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            resolve_config(cfg, gen_args);
            return vidgp::cli::cmd_gen_data(cfg, gen_out);
        }
        if (dgp->parsed()) {
            resolve_config(cfg, dgp_args);
            return vidgp::cli::cmd_train_dgp(cfg, dgp_data, dgp_out);
        }
        if (sur->parsed()) {
            resolve_config(cfg, sur_args);
            return vidgp::cli::cmd_train_surrogate(cfg, sur_data, sur_out);
        }
        if (inf->parsed()) {
            resolve_config(cfg, inf_args);
            return vidgp::cli::cmd_infer(cfg, inf_obs, inf_vae, inf_sur, inf_truth, inf_out);
        }
        if (gc->parsed()) {
            resolve_config(cfg, gc_args);
            std::vector<std::pair<int, std::string>> models;
            for (const std::string& spec : gc_surrogates) {
                const std::size_t eq = spec.find('=');
                if (eq == std::string::npos)
                    throw vidgp::ConfigError("--surrogate expects SIZE=PATH, got '" + spec + "'");
                models.emplace_back(std::stoi(spec.substr(0, eq)), spec.substr(eq + 1));
            }
            return vidgp::cli::cmd_gradcheck(cfg, gc_vae, gc_obs, models, gc_out);
        }
        if (render->parsed()) return vidgp::cli::cmd_render(render_in, render_out);
        if (report->parsed()) return vidgp::cli::cmd_report(report_dirs, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

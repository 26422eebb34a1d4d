#include "vidgp/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "vidgp/darcy.hpp"
#include "vidgp/dgp_vae.hpp"
#include "vidgp/diagnostics.hpp"
#include "vidgp/pc_surrogate.hpp"
#include "vidgp/pcn_mcmc.hpp"
#include "vidgp/prior_gen.hpp"
#include "vidgp/textio.hpp"
#include "vidgp/vi_dgp.hpp"

namespace fs = std::filesystem;

namespace vidgp::cli {

namespace {

struct SchemaItem {
    const char* key;
    const char* kind;
    const char* def;
    const char* help;
    std::vector<std::string> choices;
};

const std::vector<SchemaItem>& schema() {
    static const std::vector<SchemaItem> items = {
        {"seed", "int", "0", "master seed for every derived stream", {}},
        {"grid.nx", "int", "64", "cells in x1", {}},
        {"grid.ny", "int", "64", "cells in x2", {}},
        {"f_const", "real", "3", "constant source term", {}},
        {"obs.grid", "int", "8", "observation layout n (n*n points at (i+1/2)/n)", {}},
        {"noise_level", "real", "0.05", "relative observation noise", {}},
        {"method", "enum", "vi-nn", "inference method",
         {"vi-nn", "vi-adjoint", "mcmc-nn", "mcmc-fem-analog"}},
        {"dataset.kind", "enum", "grf", "training corpus generator", {"grf", "channel"}},
        {"dataset.n_lengths", "int", "10", "GRF correlation-length pairs", {}},
        {"dataset.n_per_length", "int", "1000", "GRF fields per length pair", {}},
        {"dataset.length_min", "real", "0.1", "correlation length lower bound", {}},
        {"dataset.length_max", "real", "0.4", "correlation length upper bound", {}},
        {"dataset.count", "int", "1000", "channel dataset size", {}},
        {"grf.mean", "real", "0", "GRF mean", {}},
        {"grf.sigma_k2", "real", "0.5", "GRF variance", {}},
        {"channel.n_channels", "int", "3", "bands per channel field", {}},
        {"channel.width_min", "real", "0.08", "band width lower bound", {}},
        {"channel.width_max", "real", "0.2", "band width upper bound", {}},
        {"channel.amp_min", "real", "0.05", "centerline amplitude lower bound", {}},
        {"channel.amp_max", "real", "0.25", "centerline amplitude upper bound", {}},
        {"channel.wavelength_min", "real", "0.5", "centerline wavelength lower bound", {}},
        {"channel.wavelength_max", "real", "2", "centerline wavelength upper bound", {}},
        {"channel.k_low", "real", "0", "background log-permeability", {}},
        {"channel.k_high", "real", "4", "channel log-permeability", {}},
        {"vae.latent_dim", "int", "256", "latent dimension h", {}},
        {"vae.epochs", "int", "300", "VAE training epochs", {}},
        {"vae.batch", "int", "64", "VAE minibatch size", {}},
        {"vae.lr", "real", "0.0001", "VAE Adam learning rate", {}},
        {"vae.mc_samples", "int", "1", "ELBO Monte Carlo draws L", {}},
        {"vae.activation", "enum", "auto", "decoder activation", {"auto", "relu", "sigmoid"}},
        {"surrogate.backend", "enum", "conv", "network family", {"mlp", "conv"}},
        {"surrogate.hidden", "intlist", "256,256,256", "MLP hidden widths", {}},
        {"surrogate.conv_channels", "int", "16", "conv encoder base channels", {}},
        {"surrogate.gamma", "real", "10", "boundary-loss penalty", {}},
        {"surrogate.epochs", "int", "300", "surrogate training epochs", {}},
        {"surrogate.batch", "int", "32", "surrogate minibatch size", {}},
        {"surrogate.lr", "real", "0.001", "surrogate (max) learning rate", {}},
        {"surrogate.schedule", "enum", "onecycle", "lr schedule", {"constant", "onecycle"}},
        {"surrogate.n_train", "int", "1024", "training fields used", {}},
        {"surrogate.stencil", "enum", "fv", "residual discretization", {"fv", "central"}},
        {"vi.iterations", "int", "5000", "VI iterations N_opt", {}},
        {"vi.samples", "int", "1", "gradient samples M_s", {}},
        {"vi.lr_mu", "real", "0.0008", "learning rate for the mean", {}},
        {"vi.lr_logvar", "real", "0.0008", "learning rate for the log variance", {}},
        {"vi.entropy", "enum", "closed", "entropy estimator", {"closed", "mc"}},
        {"vi.posterior_samples", "int", "10000", "posterior draws N_s", {}},
        {"vi.optimizer", "enum", "sgd", "VI optimizer", {"sgd", "adam"}},
        {"vi.clip_norm", "real", "0", "gradient max-norm, 0 disables", {}},
        {"vi.store_latents", "bool", "false", "write posterior latent draws", {}},
        {"mcmc.beta", "real", "0.15", "pCN step parameter", {}},
        {"mcmc.iterations", "int", "50000", "chain length N_ite", {}},
        {"mcmc.burn_in", "int", "40000", "burn-in N_b", {}},
        {"mcmc.thin", "int", "1", "thinning stride", {}},
        {"gradcheck.n_pairs", "int", "1000", "sampled variational parameters N_g", {}},
        {"gradcheck.min_cos_mu", "real", "0.7", "pass threshold for the mean block", {}},
        {"gradcheck.min_cos_logvar", "real", "0.7", "pass threshold for the log-variance block", {}},
        {"timing", "enum", "none", "wall-clock columns in CSV outputs", {"none", "wall"}},
    };
    return items;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean value '" + v + "'");
}

} // namespace

RunConfig::RunConfig() {
    for (const SchemaItem& it : schema()) {
        Entry e;
        e.value = it.def;
        e.kind = it.kind;
        e.help = it.help;
        e.choices = it.choices;
        entries_.emplace(it.key, std::move(e));
    }
}

const RunConfig::Entry& RunConfig::entry(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

bool RunConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    Entry& e = it->second;
    if (e.kind == "int") {
        char* end = nullptr;
        (void)std::strtol(value.c_str(), &end, 10);
        if (end == value.c_str() || *end != '\0')
            throw ConfigError("key '" + key + "' expects an integer, got '" + value + "'");
    } else if (e.kind == "real") {
        char* end = nullptr;
        (void)std::strtod(value.c_str(), &end);
        if (end == value.c_str() || *end != '\0')
            throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
    } else if (e.kind == "bool") {
        (void)parse_bool(value);
    } else if (e.kind == "enum") {
        if (std::find(e.choices.begin(), e.choices.end(), value) == e.choices.end()) {
            std::string opts;
            for (const auto& c : e.choices) opts += (opts.empty() ? "" : "|") + c;
            throw ConfigError("key '" + key + "' expects one of {" + opts + "}, got '" + value +
                              "'");
        }
    } else if (e.kind == "intlist") {
        std::size_t pos = 0;
        if (value.empty()) throw ConfigError("key '" + key + "' expects a comma-separated list");
        while (pos < value.size()) {
            std::size_t comma = value.find(',', pos);
            if (comma == std::string::npos) comma = value.size();
            const std::string tok = value.substr(pos, comma - pos);
            char* end = nullptr;
            (void)std::strtol(tok.c_str(), &end, 10);
            if (end == tok.c_str() || *end != '\0')
                throw ConfigError("key '" + key + "' has a bad list entry '" + tok + "'");
            pos = comma + 1;
        }
    }
    e.value = value;
}

void RunConfig::load_file(const std::string& path) {
    const std::string text = read_text_file(path);
    std::size_t pos = 0;
    long line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (const std::size_t hash = line.find('#'); hash != std::string::npos)
            line = line.substr(0, hash);
        // trim
        const auto notspace = [](char c) { return c != ' ' && c != '\t' && c != '\r'; };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
        try {
            set(line.substr(0, eq), line.substr(eq + 1));
        } catch (const ConfigError& err) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + err.what());
        }
    }
}

const std::string& RunConfig::str(const std::string& key) const { return entry(key).value; }
long RunConfig::integer(const std::string& key) const { return std::stol(entry(key).value); }
double RunConfig::real(const std::string& key) const { return std::stod(entry(key).value); }
bool RunConfig::flag(const std::string& key) const { return parse_bool(entry(key).value); }

std::vector<int> RunConfig::int_list(const std::string& key) const {
    const std::string& v = entry(key).value;
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < v.size()) {
        std::size_t comma = v.find(',', pos);
        if (comma == std::string::npos) comma = v.size();
        out.push_back(std::stoi(v.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

std::string RunConfig::snapshot() const {
    std::string out = "# resolved configuration snapshot\n";
    for (const auto& [k, e] : entries_) out += k + "=" + e.value + "\n";
    return out;
}

void RunConfig::save_snapshot(const std::string& path) const {
    write_text_file(path, snapshot());
}

std::vector<std::string> RunConfig::keys() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
}

const std::string& RunConfig::describe(const std::string& key) const { return entry(key).help; }

// --- shared helpers -----------------------------------------------------------------

namespace {

Grid2D config_grid(const RunConfig& cfg) {
    return Grid2D(static_cast<int>(cfg.integer("grid.nx")), static_cast<int>(cfg.integer("grid.ny")));
}

std::uint64_t config_seed(const RunConfig& cfg) {
    return static_cast<std::uint64_t>(cfg.integer("seed"));
}

vae::VAEConfig vae_config_from(const RunConfig& cfg, const FieldDataset& ds) {
    vae::VAEConfig vc;
    vc.nx = ds.grid.nx;
    vc.ny = ds.grid.ny;
    vc.latent_dim = static_cast<int>(cfg.integer("vae.latent_dim"));
    vc.epochs = static_cast<int>(cfg.integer("vae.epochs"));
    vc.batch = static_cast<int>(cfg.integer("vae.batch"));
    vc.lr = cfg.real("vae.lr");
    vc.mc_samples = static_cast<int>(cfg.integer("vae.mc_samples"));
    std::string act = cfg.str("vae.activation");
    if (act == "auto") {
        const std::string* gen = ds.find_meta("generator");
        act = (gen && *gen == "channel") ? "sigmoid" : "relu";
    }
    vc.decoder_activation = act == "sigmoid" ? vae::Activation::Sigmoid : vae::Activation::ReLU;
    vc.final_sigmoid = act == "sigmoid";
    return vc;
}

pcs::SurrogateConfig surrogate_config_from(const RunConfig& cfg) {
    pcs::SurrogateConfig sc;
    sc.backend = cfg.str("surrogate.backend") == "mlp" ? pcs::Backend::MLP : pcs::Backend::Conv;
    sc.hidden.clear();
    for (int w : cfg.int_list("surrogate.hidden")) sc.hidden.push_back(w);
    sc.conv_channels = static_cast<int>(cfg.integer("surrogate.conv_channels"));
    sc.gamma = cfg.real("surrogate.gamma");
    sc.epochs = static_cast<int>(cfg.integer("surrogate.epochs"));
    sc.batch = static_cast<int>(cfg.integer("surrogate.batch"));
    sc.lr = cfg.real("surrogate.lr");
    sc.schedule = cfg.str("surrogate.schedule") == "constant" ? pcs::Schedule::Constant
                                                              : pcs::Schedule::OneCycle;
    sc.stencil =
        cfg.str("surrogate.stencil") == "central" ? pcs::Stencil::Central : pcs::Stencil::FV;
    sc.f_const = cfg.real("f_const");
    return sc;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

} // namespace

// --- subcommands ---------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    ensure_dir(out_dir + "/truth");
    const Grid2D grid = config_grid(cfg);
    const std::uint64_t seed = config_seed(cfg);
    const std::string kind = cfg.str("dataset.kind");

    FieldDataset ds;
    ScalarField truth = ScalarField::zero(grid);
    if (kind == "grf") {
        Rng data_rng(derive_seed(seed, "dataset"));
        ds = sample_grf_dataset(grid, static_cast<int>(cfg.integer("dataset.n_lengths")),
                                static_cast<int>(cfg.integer("dataset.n_per_length")),
                                cfg.real("dataset.length_min"), cfg.real("dataset.length_max"),
                                cfg.real("grf.sigma_k2"), cfg.real("grf.mean"), data_rng);
        Rng truth_rng(derive_seed(seed, "truth"));
        GRFSpec spec;
        spec.mean = cfg.real("grf.mean");
        spec.sigma2 = cfg.real("grf.sigma_k2");
        spec.l1 = truth_rng.uniform(cfg.real("dataset.length_min"), cfg.real("dataset.length_max"));
        spec.l2 = truth_rng.uniform(cfg.real("dataset.length_min"), cfg.real("dataset.length_max"));
        truth = sample_grf(grid, spec, truth_rng);
    } else {
        ChannelSpec spec;
        spec.n_channels = static_cast<int>(cfg.integer("channel.n_channels"));
        spec.width_min = cfg.real("channel.width_min");
        spec.width_max = cfg.real("channel.width_max");
        spec.amp_min = cfg.real("channel.amp_min");
        spec.amp_max = cfg.real("channel.amp_max");
        spec.wavelength_min = cfg.real("channel.wavelength_min");
        spec.wavelength_max = cfg.real("channel.wavelength_max");
        spec.k_low = cfg.real("channel.k_low");
        spec.k_high = cfg.real("channel.k_high");
        Rng data_rng(derive_seed(seed, "dataset"));
        ds = sample_channel_dataset(grid, spec, static_cast<int>(cfg.integer("dataset.count")),
                                    data_rng);
        Rng truth_rng(derive_seed(seed, "truth"));
        truth = sample_channel(grid, spec, truth_rng);
    }
    write_dataset(out_dir + "/dataset", ds);
    write_field(out_dir + "/truth/truth_field.txt", truth);

    const DarcySolution sol = solve_pressure(truth, cfg.real("f_const"));
    write_field(out_dir + "/truth/pressure.txt", sol.p);
    const ObservationPlan plan = ObservationPlan::regular(static_cast<int>(cfg.integer("obs.grid")));
    Rng noise_rng(derive_seed(seed, "noise"));
    const ObservationSet obs = make_observations(sol.p, plan, cfg.real("noise_level"), noise_rng);
    write_observations(out_dir + "/truth/observations.txt", obs);
    cfg.save_snapshot(out_dir + "/config.cfg");

    std::cout << "gen-data: wrote " << ds.size() << " " << kind << " fields on " << grid.nx << "x"
              << grid.ny << ", truth + " << obs.size() << " observations at noise level "
              << cfg.real("noise_level") << "\n";
    return 0;
}

int cmd_train_dgp(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    ensure_dir(out_dir);
    const FieldDataset ds = read_dataset(data_dir);
    vae::VAEConfig vc = vae_config_from(cfg, ds);
    Rng rng(derive_seed(config_seed(cfg), "train-dgp"));
    vae::VAETrainResult result = vae::train_vae(ds, vc, rng);
    result.model.save(out_dir + "/vae_model.txt");

    CsvWriter csv({"epoch", "mean_elbo"});
    for (std::size_t e = 0; e < result.trace.size(); ++e)
        csv.row({std::to_string(e), fmt_full(result.trace[e])});
    csv.save(out_dir + "/vae_trace.csv");
    cfg.save_snapshot(out_dir + "/config.cfg");
    std::cout << "train-dgp: " << result.trace.size() << " epochs, first/final mean ELBO "
              << fmt_full(result.trace.front()) << " / " << fmt_full(result.trace.back()) << "\n";
    return 0;
}

int cmd_train_surrogate(const RunConfig& cfg, const std::string& data_dir,
                        const std::string& out_dir) {
    ensure_dir(out_dir);
    const FieldDataset ds = read_dataset(data_dir);
    pcs::SurrogateConfig sc = surrogate_config_from(cfg);
    const int n_train = static_cast<int>(cfg.integer("surrogate.n_train"));
    Rng rng(derive_seed(config_seed(cfg), "train-surrogate"));
    pcs::SurrogateTrainResult result = pcs::train_surrogate(ds, sc, rng, n_train);
    result.model.save(out_dir + "/surrogate_model.txt");

    CsvWriter csv({"epoch", "mean_j"});
    for (std::size_t e = 0; e < result.trace.size(); ++e)
        csv.row({std::to_string(e), fmt_full(result.trace[e])});
    csv.save(out_dir + "/surrogate_trace.csv");
    cfg.save_snapshot(out_dir + "/config.cfg");
    std::cout << "train-surrogate: n_train=" << n_train << ", first/final mean J "
              << fmt_full(result.trace.front()) << " / " << fmt_full(result.trace.back()) << "\n";
    return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& obs_path, const std::string& vae_path,
              const std::string& surrogate_path, const std::string& truth_path,
              const std::string& out_dir) {
    ensure_dir(out_dir);
    const ObservationSet obs = read_observations(obs_path);
    vae::VAEModel vmodel = vae::VAEModel::load(vae_path);
    const vi::VaeGenerator gen(std::move(vmodel));
    const Grid2D grid = gen.grid();
    const std::string method = cfg.str("method");
    const bool record_wall = cfg.str("timing") == "wall";

    std::unique_ptr<vi::MisfitBackend> backend;
    if (method == "vi-nn" || method == "mcmc-nn") {
        if (surrogate_path.empty())
            throw ConfigError("method '" + method + "' requires --surrogate MODEL");
        backend = std::make_unique<vi::SurrogateBackend>(pcs::SurrogateModel::load(surrogate_path),
                                                         obs);
    } else {
        backend = std::make_unique<vi::AdjointBackend>(grid, obs, cfg.real("f_const"));
    }

    Rng rng(derive_seed(config_seed(cfg), "infer"));
    const auto t0 = std::chrono::steady_clock::now();
    long iterations = 0;
    vi::VariationalParams lambda = vi::VariationalParams::zero(gen.latent_dim());
    Eigen::MatrixXd latents;

    if (method == "vi-nn" || method == "vi-adjoint") {
        vi::VIConfig vic;
        vic.iterations = cfg.integer("vi.iterations");
        vic.samples = static_cast<int>(cfg.integer("vi.samples"));
        vic.lr_mu = cfg.real("vi.lr_mu");
        vic.lr_logvar = cfg.real("vi.lr_logvar");
        vic.entropy = cfg.str("vi.entropy") == "mc" ? vi::EntropyMode::MonteCarlo
                                                    : vi::EntropyMode::ClosedForm;
        vic.posterior_samples = cfg.integer("vi.posterior_samples");
        vic.use_adam = cfg.str("vi.optimizer") == "adam";
        vic.clip_norm = cfg.real("vi.clip_norm");
        vic.record_wall_time = record_wall;
        vi::VIResult res = vi::optimize(vic, *backend, gen, rng);
        iterations = vic.iterations;
        lambda = res.params;
        write_text_file(out_dir + "/vi_trace.csv", vi::trace_to_csv(res.trace, vic.entropy));
        latents = vi::posterior_latents(lambda, vic.posterior_samples, rng);
    } else {
        mcmc::PCNConfig mc;
        mc.beta = cfg.real("mcmc.beta");
        mc.iterations = cfg.integer("mcmc.iterations");
        mc.burn_in = cfg.integer("mcmc.burn_in");
        mc.thin = cfg.integer("mcmc.thin");
        const vi::MisfitBackend* b = backend.get();
        const vi::Generator* g = &gen;
        mcmc::ChainResult res = mcmc::run_chain(
            mc, [b, g](const Eigen::VectorXd& z) { return -b->phi(g->decode(z)); },
            gen.latent_dim(), rng);
        iterations = mc.iterations;
        write_text_file(out_dir + "/chain.csv", mcmc::chain_to_csv(res.trace));
        latents = res.samples;
        std::cout << "infer: pCN acceptance rate " << res.acceptance_rate << ", median ESS "
                  << res.ess[res.ess.size() / 2] << "\n";
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // decode posterior samples and summarize
    std::vector<ScalarField> fields;
    fields.reserve(static_cast<std::size_t>(latents.cols()));
    for (Eigen::Index i = 0; i < latents.cols(); ++i)
        fields.emplace_back(grid, gen.decode(latents.col(i)));

    ScalarField truth = ScalarField::zero(grid);
    const bool has_truth = !truth_path.empty();
    if (has_truth) truth = read_field(truth_path);
    const diag::PosteriorSummary summary =
        diag::posterior_stats(fields, has_truth ? &truth : nullptr);
    write_field(out_dir + "/posterior_mean.txt", summary.mean);
    write_field(out_dir + "/posterior_std.txt", summary.std);

    CsvWriter report({"method", "iterations", "inference_seconds"});
    report.row({method, std::to_string(iterations), record_wall ? fmt_full(seconds) : "0"});
    report.save(out_dir + "/report.csv");

    if (has_truth) {
        CsvWriter metrics({"rel_l2_error"});
        metrics.row({fmt_full(summary.rel_l2)});
        metrics.save(out_dir + "/metrics.csv");
    }
    if (cfg.flag("vi.store_latents")) {
        ParamVector pv;
        pv.add_block("latents", latents.size());
        Eigen::Map<Eigen::VectorXd>(pv.data().data(), latents.size()) =
            Eigen::Map<const Eigen::VectorXd>(latents.data(), latents.size());
        pv.save(out_dir + "/latents.txt");
    }
    cfg.save_snapshot(out_dir + "/config.cfg");

    std::cout << "infer: method=" << method << " iterations=" << iterations << " samples="
              << fields.size();
    if (has_truth) std::cout << " rel_l2=" << fmt_full(summary.rel_l2);
    std::cout << " seconds=" << fmt_full(seconds) << "\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, const std::string& vae_path, const std::string& obs_path,
                  const std::vector<std::pair<int, std::string>>& surrogate_models,
                  const std::string& out_dir) {
    ensure_dir(out_dir);
    const ObservationSet obs = read_observations(obs_path);
    const vi::VaeGenerator gen(vae::VAEModel::load(vae_path));
    const vi::AdjointBackend adjoint(gen.grid(), obs, cfg.real("f_const"));

    std::vector<std::unique_ptr<vi::MisfitBackend>> owned;
    std::vector<std::pair<int, const vi::MisfitBackend*>> list;
    list.emplace_back(0, &adjoint); // wrapped-adjoint self-test row
    for (const auto& [size, path] : surrogate_models) {
        owned.push_back(std::make_unique<vi::SurrogateBackend>(pcs::SurrogateModel::load(path), obs));
        list.emplace_back(size, owned.back().get());
    }

    Rng rng(derive_seed(config_seed(cfg), "gradcheck"));
    const std::vector<diag::StudyRow> rows = diag::gradient_agreement_study(
        list, adjoint, gen, static_cast<int>(cfg.integer("gradcheck.n_pairs")), rng);
    write_text_file(out_dir + "/cos_report.csv", diag::study_to_csv(rows));
    cfg.save_snapshot(out_dir + "/config.cfg");

    // threshold check on the largest surrogate
    int largest = 0;
    for (const auto& [size, _] : surrogate_models) largest = std::max(largest, size);
    bool pass = true;
    for (const diag::StudyRow& r : rows) {
        std::cout << "gradcheck: block=" << r.block << " size=" << r.dataset_size
                  << " cos_alpha=" << fmt_full(r.cos_alpha) << "\n";
        if (r.dataset_size == largest && largest > 0) {
            const double threshold = r.block == "mu" ? cfg.real("gradcheck.min_cos_mu")
                                                     : cfg.real("gradcheck.min_cos_logvar");
            if (r.cos_alpha < threshold) pass = false;
        }
    }
    std::cout << (pass ? "gradcheck: PASS" : "gradcheck: FAIL") << "\n";
    return pass ? 0 : 2;
}

std::string field_to_pgm(const ScalarField& field) {
    const double lo = field.values.minCoeff();
    const double hi = field.values.maxCoeff();
    std::string out = "P5\n" + std::to_string(field.grid.nx) + " " + std::to_string(field.grid.ny) +
                      "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(field.grid.cells()));
    for (int j = 0; j < field.grid.ny; ++j)
        for (int i = 0; i < field.grid.nx; ++i) {
            int v = 0;
            if (hi > lo)
                v = static_cast<int>(std::lround(255.0 * (field(i, j) - lo) / (hi - lo)));
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0, 255))));
        }
    return out;
}

int cmd_render(const std::string& field_path, const std::string& image_path) {
    const ScalarField field = read_field(field_path);
    write_text_file(image_path, field_to_pgm(field));
    std::cout << "render: " << field.grid.nx << "x" << field.grid.ny << " -> " << image_path
              << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path) {
    CsvWriter combined({"run", "method", "iterations", "inference_seconds"});
    for (const std::string& dir : run_dirs) {
        const std::string text = read_text_file(dir + "/report.csv");
        const std::size_t first_nl = text.find('\n');
        if (first_nl == std::string::npos)
            throw ParseError(dir + "/report.csv: missing data row");
        std::size_t pos = first_nl + 1;
        while (pos < text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            const std::string line = text.substr(pos, eol - pos);
            pos = eol + 1;
            if (line.empty()) continue;
            std::vector<std::string> cells{fs::path(dir).filename().string()};
            std::size_t c = 0;
            while (c < line.size()) {
                std::size_t comma = line.find(',', c);
                if (comma == std::string::npos) comma = line.size();
                cells.push_back(line.substr(c, comma - c));
                c = comma + 1;
            }
            if (cells.size() != 4)
                throw ParseError(dir + "/report.csv: expected 3 columns per row");
            combined.row(cells);
        }
    }
    combined.save(out_path);
    std::cout << combined.str();
    return 0;
}

} // namespace vidgp::cli

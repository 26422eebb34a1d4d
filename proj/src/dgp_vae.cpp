#include "vidgp/dgp_vae.hpp"

#include <cmath>

#include "vidgp/textio.hpp"

namespace vidgp::vae {

using ad::Tape;
using ad::Var;

namespace {

// block order inside the flat parameter vector
enum BlockIndex {
    kEncW1 = 0, kEncB1, kEncW2, kEncB2,
    kMuW1, kMuB1, kMuW2, kMuB2,
    kLvW1, kLvB1, kLvW2, kLvB2,
    kDecW1, kDecB1, kDecW2, kDecB2, kDecW3, kDecB3, kDecW4, kDecB4,
    kBlockCount
};

Var activate(Tape& t, Var x, Activation a) {
    return a == Activation::ReLU ? t.relu(x) : t.sigmoid(x);
}

void init_uniform(ParamVector& pv, std::size_t w_block, Eigen::Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    auto w = pv.block(w_block);
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
}

} // namespace

void VAEConfig::validate() const {
    if (nx < 2 || ny < 2) throw DomainError("VAEConfig: grid must be at least 2x2");
    if (latent_dim < 1) throw DomainError("VAEConfig: latent_dim must be positive");
    if (latent_dim >= input_dim())
        throw DomainError("VAEConfig: latent_dim must be smaller than input_dim");
    if (mc_samples < 1) throw DomainError("VAEConfig: mc_samples (L) must be >= 1");
    if (epochs < 1 || batch < 1) throw DomainError("VAEConfig: epochs and batch must be positive");
    if (!(lr > 0)) throw DomainError("VAEConfig: learning rate must be positive");
    if (normalized && !(norm_hi > norm_lo))
        throw DomainError("VAEConfig: normalization needs norm_hi > norm_lo");
}

ParamVector make_vae_params(const VAEConfig& c) {
    c.validate();
    const Eigen::Index M = c.input_dim(), h = c.latent_dim;
    ParamVector pv;
    pv.add_block("enc.w1", h * M);
    pv.add_block("enc.b1", h);
    pv.add_block("enc.w2", h * h);
    pv.add_block("enc.b2", h);
    pv.add_block("mu.w1", h * h);
    pv.add_block("mu.b1", h);
    pv.add_block("mu.w2", h * h);
    pv.add_block("mu.b2", h);
    pv.add_block("lv.w1", h * h);
    pv.add_block("lv.b1", h);
    pv.add_block("lv.w2", h * h);
    pv.add_block("lv.b2", h);
    pv.add_block("dec.w1", M * h);
    pv.add_block("dec.b1", M);
    pv.add_block("dec.w2", M * M);
    pv.add_block("dec.b2", M);
    pv.add_block("dec.w3", M * M);
    pv.add_block("dec.b3", M);
    pv.add_block("dec.w4", M * M);
    pv.add_block("dec.b4", M);
    return pv;
}

VAEModel VAEModel::zeros(const VAEConfig& config) { return VAEModel{config, make_vae_params(config)}; }

VAEModel VAEModel::init(const VAEConfig& config, Rng& rng) {
    VAEModel m = zeros(config);
    const Eigen::Index M = config.input_dim(), h = config.latent_dim;
    init_uniform(m.params, kEncW1, M, rng);
    init_uniform(m.params, kEncW2, h, rng);
    init_uniform(m.params, kMuW1, h, rng);
    init_uniform(m.params, kMuW2, h, rng);
    init_uniform(m.params, kLvW1, h, rng);
    init_uniform(m.params, kLvW2, h, rng);
    init_uniform(m.params, kDecW1, h, rng);
    init_uniform(m.params, kDecW2, M, rng);
    init_uniform(m.params, kDecW3, M, rng);
    init_uniform(m.params, kDecW4, M, rng);
    return m;
}

std::pair<Var, Var> encoder_graph(Tape& t, const std::vector<Var>& p, Var k,
                                  const VAEConfig& c) {
    const Eigen::Index M = c.input_dim(), h = c.latent_dim;
    Var h1 = t.relu(t.affine(p[kEncW1], p[kEncB1], k, h, M));
    Var h2 = t.relu(t.affine(p[kEncW2], p[kEncB2], h1, h, h));
    Var mu = t.affine(p[kMuW2], p[kMuB2], t.relu(t.affine(p[kMuW1], p[kMuB1], h2, h, h)), h, h);
    Var lv = t.affine(p[kLvW2], p[kLvB2], t.relu(t.affine(p[kLvW1], p[kLvB1], h2, h, h)), h, h);
    return {mu, lv};
}

Var decoder_graph(Tape& t, const std::vector<Var>& p, Var z, const VAEConfig& c) {
    const Eigen::Index M = c.input_dim(), h = c.latent_dim;
    Var d1 = activate(t, t.affine(p[kDecW1], p[kDecB1], z, M, h), c.decoder_activation);
    Var d2 = activate(t, t.affine(p[kDecW2], p[kDecB2], d1, M, M), c.decoder_activation);
    Var d3 = activate(t, t.affine(p[kDecW3], p[kDecB3], d2, M, M), c.decoder_activation);
    Var out = t.affine(p[kDecW4], p[kDecB4], d3, M, M);
    return c.final_sigmoid ? t.sigmoid(out) : out;
}

namespace {

std::vector<Var> constant_param_vars(Tape& t, const ParamVector& pv) {
    std::vector<Var> vars;
    vars.reserve(pv.block_count());
    for (std::size_t b = 0; b < pv.block_count(); ++b) vars.push_back(t.input(pv.block(b)));
    return vars;
}

} // namespace

std::pair<Eigen::VectorXd, Eigen::VectorXd> encode(const VAEModel& model,
                                                   const Eigen::VectorXd& k_norm) {
    if (k_norm.size() != model.config.input_dim())
        throw ShapeError("encode: field length " + std::to_string(k_norm.size()) +
                         " != input_dim " + std::to_string(model.config.input_dim()));
    Tape t;
    std::vector<Var> p = constant_param_vars(t, model.params);
    auto [mu, lv] = encoder_graph(t, p, t.input(k_norm), model.config);
    return {t.value(mu).col(0), t.value(lv).col(0)};
}

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar,
                               const Eigen::VectorXd& eps) {
    if (mu.size() != logvar.size() || mu.size() != eps.size())
        throw ShapeError("reparameterize: mu/logvar/eps sizes disagree");
    return mu.array() + (0.5 * logvar.array()).exp() * eps.array();
}

Eigen::VectorXd decode(const VAEModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.config.latent_dim)
        throw ShapeError("decode: latent length " + std::to_string(z.size()) + " != latent_dim " +
                         std::to_string(model.config.latent_dim));
    Tape t;
    std::vector<Var> p = constant_param_vars(t, model.params);
    Var out = decoder_graph(t, p, t.input(z), model.config);
    return t.value(out).col(0);
}

double kl_diag_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
    if (mu.size() != logvar.size()) throw ShapeError("kl_diag_gaussian: sizes disagree");
    return 0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array()).sum();
}

ad::DiffProgram elbo_program(const VAEConfig& config) {
    return {"vae_elbo",
            [config](Tape& t, const std::vector<Var>& p, const std::vector<ad::Mat>& aux) {
                if (aux.size() != 2) throw ShapeError("vae_elbo expects aux = {K, EPS}");
                const Eigen::Index B = aux[0].cols();
                const int L = config.mc_samples;
                if (aux[1].cols() != B * L)
                    throw ShapeError("vae_elbo: EPS must provide B*L columns");
                Var k = t.input(aux[0]);
                auto [mu, lv] = encoder_graph(t, p, k, config);

                // KL term: 1/2 (mu^2 + e^lv - 1 - lv), summed then batch-averaged
                Var kl_core = t.add_const(
                    t.add(t.sum(t.square(mu)), t.sub(t.sum(t.exp_(lv)), t.sum(lv))),
                    -static_cast<double>(config.latent_dim) * static_cast<double>(B));
                Var kl = t.scale(kl_core, 0.5 / static_cast<double>(B));

                // reconstruction: mean over L draws of -1/2 ||k - G(z)||^2
                Var sigma = t.exp_(t.scale(lv, 0.5));
                Var recon{};
                for (int l = 0; l < L; ++l) {
                    Var eps = t.input(aux[1].middleCols(static_cast<Eigen::Index>(l) * B, B));
                    Var z = t.add(mu, t.mul(sigma, eps));
                    Var khat = decoder_graph(t, p, z, config);
                    Var term = t.sum(t.square(t.sub(k, khat)));
                    recon = (l == 0) ? term : t.add(recon, term);
                }
                recon = t.scale(recon, -0.5 / (static_cast<double>(L) * static_cast<double>(B)));
                return t.sub(recon, kl);
            }};
}

double elbo(const VAEModel& model, const Eigen::VectorXd& k_norm, const Eigen::MatrixXd& eps) {
    VAEConfig cfg = model.config;
    cfg.mc_samples = static_cast<int>(eps.cols());
    return ad::value_only(elbo_program(cfg), model.params, {k_norm, eps});
}

Eigen::VectorXd denormalize(const VAEConfig& config, const Eigen::VectorXd& u) {
    if (!config.normalized) return u;
    return (config.norm_lo + (config.norm_hi - config.norm_lo) * u.array()).matrix();
}

ScalarField generate(const VAEModel& model, const Eigen::VectorXd& z) {
    Grid2D grid(model.config.nx, model.config.ny);
    return ScalarField(grid, denormalize(model.config, decode(model, z)));
}

ScalarField generate(const VAEModel& model, Rng& rng) {
    return generate(model, rng.normal_vector(model.config.latent_dim));
}

VAETrainResult train_vae(const FieldDataset& dataset, VAEConfig config, Rng& rng) {
    if (dataset.fields.empty()) throw DomainError("train_vae: dataset is empty");
    config.nx = dataset.grid.nx;
    config.ny = dataset.grid.ny;

    // adopt the dataset's normalization convention
    if (const std::string* norm = dataset.find_meta("normalization"); norm && *norm != "none") {
        Tokenizer tok(*norm);
        if (tok.expect("normalization kind") != "affine")
            throw ParseError("train_vae: unknown normalization '" + *norm + "'");
        config.normalized = true;
        config.norm_lo = tok.expect_double("norm lo");
        config.norm_hi = tok.expect_double("norm hi");
    }
    config.validate();

    const Eigen::Index M = config.input_dim();
    const Eigen::Index N = static_cast<Eigen::Index>(dataset.size());
    Eigen::MatrixXd fields(M, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        if (dataset.fields[static_cast<std::size_t>(i)].size() != M)
            throw ShapeError("train_vae: dataset member " + std::to_string(i) + " has wrong length");
        Eigen::VectorXd f = dataset.fields[static_cast<std::size_t>(i)];
        if (config.normalized)
            f = ((f.array() - config.norm_lo) / (config.norm_hi - config.norm_lo)).matrix();
        fields.col(i) = f;
    }

    VAEModel model = VAEModel::init(config, rng);
    ad::DiffProgram prog = elbo_program(config);
    ad::Adam opt(config.lr, /*ascent=*/true);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;

    VAETrainResult result;
    result.trace.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double weighted = 0;
        Eigen::Index seen = 0;
        for (Eigen::Index start = 0; start < N; start += config.batch) {
            const Eigen::Index B = std::min<Eigen::Index>(config.batch, N - start);
            Eigen::MatrixXd K(M, B);
            for (Eigen::Index b = 0; b < B; ++b) K.col(b) = fields.col(order[static_cast<std::size_t>(start + b)]);
            Eigen::MatrixXd eps = rng.normal_matrix(config.latent_dim, B * config.mc_samples);
            ad::ValueGrad vg = ad::value_and_grad(prog, model.params, {K, eps});
            if (!std::isfinite(vg.value))
                throw NumericalError("train_vae: non-finite ELBO at epoch " +
                                     std::to_string(epoch) + ", batch offset " +
                                     std::to_string(start));
            opt.step(model.params, vg.grad);
            weighted += vg.value * static_cast<double>(B);
            seen += B;
        }
        result.trace.push_back(weighted / static_cast<double>(seen));
    }
    result.model = std::move(model);
    return result;
}

// --- model file ------------------------------------------------------------------

void VAEModel::save(const std::string& path) const {
    std::string out = "VAEMODEL v1\n";
    std::vector<std::pair<std::string, std::string>> kv = {
        {"nx", std::to_string(config.nx)},
        {"ny", std::to_string(config.ny)},
        {"latent_dim", std::to_string(config.latent_dim)},
        {"decoder_activation", config.decoder_activation == Activation::ReLU ? "relu" : "sigmoid"},
        {"final_sigmoid", config.final_sigmoid ? "1" : "0"},
        {"mc_samples", std::to_string(config.mc_samples)},
        {"epochs", std::to_string(config.epochs)},
        {"batch", std::to_string(config.batch)},
        {"lr", fmt_full(config.lr)},
        {"normalized", config.normalized ? "1" : "0"},
        {"norm_lo", fmt_full(config.norm_lo)},
        {"norm_hi", fmt_full(config.norm_hi)},
    };
    out += "vaeconfig " + std::to_string(kv.size()) + "\n";
    for (const auto& [k, v] : kv) out += k + " " + v + "\n";
    out += params.serialize();
    write_text_file(path, out);
}

VAEModel VAEModel::load(const std::string& path) {
    const std::string text = read_text_file(path);
    Tokenizer tok(text);
    if (tok.expect("model magic") != "VAEMODEL") throw ParseError(path + ": expected VAEMODEL header");
    if (tok.expect("version") != "v1") throw ParseError(path + ": unsupported VAEMODEL version");
    if (tok.expect("vaeconfig tag") != "vaeconfig") throw ParseError(path + ": expected vaeconfig block");
    const long n = tok.expect_long("vaeconfig entry count");
    VAEConfig c;
    for (long i = 0; i < n; ++i) {
        const std::string key = tok.expect("config key");
        if (key == "nx") c.nx = static_cast<int>(tok.expect_long("nx"));
        else if (key == "ny") c.ny = static_cast<int>(tok.expect_long("ny"));
        else if (key == "latent_dim") c.latent_dim = static_cast<int>(tok.expect_long("latent_dim"));
        else if (key == "decoder_activation")
            c.decoder_activation = tok.expect("activation") == "sigmoid" ? Activation::Sigmoid
                                                                         : Activation::ReLU;
        else if (key == "final_sigmoid") c.final_sigmoid = tok.expect_long("final_sigmoid") != 0;
        else if (key == "mc_samples") c.mc_samples = static_cast<int>(tok.expect_long("mc_samples"));
        else if (key == "epochs") c.epochs = static_cast<int>(tok.expect_long("epochs"));
        else if (key == "batch") c.batch = static_cast<int>(tok.expect_long("batch"));
        else if (key == "lr") c.lr = tok.expect_double("lr");
        else if (key == "normalized") c.normalized = tok.expect_long("normalized") != 0;
        else if (key == "norm_lo") c.norm_lo = tok.expect_double("norm_lo");
        else if (key == "norm_hi") c.norm_hi = tok.expect_double("norm_hi");
        else throw ParseError(path + ": unknown vaeconfig key '" + key + "'");
    }
    c.validate();
    VAEModel m;
    m.config = c;
    m.params = ParamVector::deserialize_from(tok);
    if (!m.params.same_shape(make_vae_params(c)))
        throw ParseError(path + ": parameter blocks do not match the declared architecture");
    return m;
}

} // namespace vidgp::vae

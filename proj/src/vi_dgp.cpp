#include "vidgp/vi_dgp.hpp"

#include <chrono>
#include <cmath>

#include "vidgp/diff_engine.hpp"
#include "vidgp/textio.hpp"

namespace vidgp::vi {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

// --- generators --------------------------------------------------------------------

VaeGenerator::VaeGenerator(vae::VAEModel model) : model_(std::move(model)) {}

Eigen::VectorXd VaeGenerator::decode(const Eigen::VectorXd& z) const {
    return vae::denormalize(model_.config, vae::decode(model_, z));
}

Eigen::VectorXd VaeGenerator::decode_vjp(const Eigen::VectorXd& z,
                                         const Eigen::VectorXd& cot) const {
    ad::Tape t;
    std::vector<ad::Var> p;
    p.reserve(model_.params.block_count());
    for (std::size_t b = 0; b < model_.params.block_count(); ++b)
        p.push_back(t.input(model_.params.block(b)));
    ad::Var zleaf = t.leaf(z);
    ad::Var out = vae::decoder_graph(t, p, zleaf, model_.config);
    const double scale =
        model_.config.normalized ? (model_.config.norm_hi - model_.config.norm_lo) : 1.0;
    t.backward(out, scale * cot);
    return t.grad(zleaf).col(0);
}

LinearGenerator::LinearGenerator(const Grid2D& grid, Eigen::MatrixXd A, Eigen::VectorXd b)
    : grid_(grid), A_(std::move(A)), b_(std::move(b)) {
    if (A_.rows() != grid_.cells() || b_.size() != A_.rows())
        throw ShapeError("LinearGenerator: A rows and b must match the grid cell count");
}

// --- backends ----------------------------------------------------------------------

AdjointBackend::AdjointBackend(const Grid2D& grid, ObservationSet obs, double f_const)
    : grid_(grid), obs_(std::move(obs)), f_const_(f_const) {
    if (obs_.plan.size() != static_cast<std::size_t>(obs_.size()))
        throw ShapeError("AdjointBackend: observation set carries no plan");
}

double AdjointBackend::phi(const Eigen::VectorXd& k) const {
    return misfit(ScalarField(grid_, k), obs_, f_const_);
}

std::pair<double, Eigen::VectorXd> AdjointBackend::phi_grad(const Eigen::VectorXd& k) const {
    ScalarField kf(grid_, k);
    return {misfit(kf, obs_, f_const_), adjoint_grad(kf, obs_, f_const_).values};
}

SurrogateBackend::SurrogateBackend(pcs::SurrogateModel model, ObservationSet obs)
    : model_(std::move(model)), obs_(std::move(obs)) {
    if (obs_.plan.size() != static_cast<std::size_t>(obs_.size()))
        throw ShapeError("SurrogateBackend: observation set carries no plan");
}

double SurrogateBackend::phi(const Eigen::VectorXd& k) const {
    return pcs::surrogate_misfit(model_, obs_, ScalarField(Grid2D(model_.config.nx, model_.config.ny), k));
}

std::pair<double, Eigen::VectorXd> SurrogateBackend::phi_grad(const Eigen::VectorXd& k) const {
    ScalarField kf(Grid2D(model_.config.nx, model_.config.ny), k);
    return {pcs::surrogate_misfit(model_, obs_, kf),
            pcs::surrogate_misfit_grad_k(model_, obs_, kf).values};
}

GaussianLinearBackend::GaussianLinearBackend(Eigen::MatrixXd B, Eigen::VectorXd d,
                                             Eigen::VectorXd sigma)
    : B_(std::move(B)), d_(std::move(d)), sigma_(std::move(sigma)) {
    if (B_.rows() != d_.size() || d_.size() != sigma_.size())
        throw ShapeError("GaussianLinearBackend: B rows, d, sigma must agree");
    if (!(sigma_.array() > 0).all()) throw DomainError("GaussianLinearBackend: sigma must be positive");
}

double GaussianLinearBackend::phi(const Eigen::VectorXd& k) const {
    return 0.5 * ((B_ * k - d_).array() / sigma_.array()).square().sum();
}

std::pair<double, Eigen::VectorXd> GaussianLinearBackend::phi_grad(const Eigen::VectorXd& k) const {
    const Eigen::VectorXd r = B_ * k - d_;
    const Eigen::VectorXd w = r.array() / sigma_.array().square();
    return {0.5 * (r.array() / sigma_.array()).square().sum(), B_.transpose() * w};
}

// --- objective ---------------------------------------------------------------------

double log_joint(const Eigen::VectorXd& z, const MisfitBackend& backend, const Generator& gen) {
    return -backend.phi(gen.decode(z)) - 0.5 * z.squaredNorm();
}

namespace {

double entropy_closed_form(const VariationalParams& lambda) {
    const double h = static_cast<double>(lambda.logvar.size());
    return 0.5 * lambda.logvar.sum() + 0.5 * h * (kLog2Pi + 1.0);
}

double neg_log_q_at_eps(const VariationalParams& lambda, const Eigen::VectorXd& eps) {
    // -log q(g_lambda(eps)) = 1/2 sum(logvar) + h/2 log(2 pi) + 1/2 ||eps||^2
    const double h = static_cast<double>(lambda.logvar.size());
    return 0.5 * lambda.logvar.sum() + 0.5 * h * kLog2Pi + 0.5 * eps.squaredNorm();
}

} // namespace

double elbo_vi(const VariationalParams& lambda, const MisfitBackend& backend, const Generator& gen,
               const Eigen::MatrixXd& eps, EntropyMode mode) {
    if (eps.rows() != lambda.mu.size()) throw ShapeError("elbo_vi: eps rows must equal latent dim");
    if (eps.cols() < 1) throw DomainError("elbo_vi: need at least one eps draw");
    const Eigen::VectorXd sig = lambda.sigma();
    double joint = 0, entropy_mc = 0;
    for (Eigen::Index i = 0; i < eps.cols(); ++i) {
        const Eigen::VectorXd z = lambda.mu.array() + sig.array() * eps.col(i).array();
        joint += log_joint(z, backend, gen);
        entropy_mc += neg_log_q_at_eps(lambda, eps.col(i));
    }
    const double m = static_cast<double>(eps.cols());
    const double H = mode == EntropyMode::ClosedForm ? entropy_closed_form(lambda) : entropy_mc / m;
    return joint / m + H;
}

VIGradient grad_elbo_vi(const VariationalParams& lambda, const MisfitBackend& backend,
                        const Generator& gen, const Eigen::MatrixXd& eps, EntropyMode mode) {
    const Eigen::Index h = lambda.mu.size();
    if (eps.rows() != h) throw ShapeError("grad_elbo_vi: eps rows must equal latent dim");
    if (eps.cols() < 1) throw DomainError("grad_elbo_vi: need at least one eps draw");
    const Eigen::VectorXd sig = lambda.sigma();

    VIGradient g;
    g.d_mu = Eigen::VectorXd::Zero(h);
    g.d_logvar = Eigen::VectorXd::Zero(h);
    double joint = 0, entropy_mc = 0;
    for (Eigen::Index i = 0; i < eps.cols(); ++i) {
        const Eigen::VectorXd e = eps.col(i);
        const Eigen::VectorXd z = lambda.mu.array() + sig.array() * e.array();
        const Eigen::VectorXd k = gen.decode(z);
        const auto [phi, gk] = backend.phi_grad(k);
        // d log pi(z, d)/dz = -J_G^T dPhi/dk - z
        const Eigen::VectorXd dz = -gen.decode_vjp(z, gk) - z;
        g.d_mu += dz;                                              // dg/dmu = I
        g.d_logvar.array() += dz.array() * 0.5 * sig.array() * e.array(); // dg/dlogvar
        joint += -phi - 0.5 * z.squaredNorm();
        if (mode == EntropyMode::MonteCarlo) {
            // score-removed pathwise entropy gradient
            g.d_mu.array() += e.array() / sig.array();
            g.d_logvar.array() += 0.5 * e.array().square();
            entropy_mc += neg_log_q_at_eps(lambda, e);
        }
    }
    const double m = static_cast<double>(eps.cols());
    g.d_mu /= m;
    g.d_logvar /= m;
    if (mode == EntropyMode::ClosedForm) {
        g.d_logvar.array() += 0.5;
        g.elbo_estimate = joint / m + entropy_closed_form(lambda);
    } else {
        g.elbo_estimate = (joint + entropy_mc) / m;
    }
    return g;
}

// --- optimizer loop ----------------------------------------------------------------

namespace {

class BlockOptimizer {
public:
    BlockOptimizer(bool use_adam, double lr, Eigen::Index n) : use_adam_(use_adam), lr_(lr) {
        if (use_adam_) {
            m_ = Eigen::VectorXd::Zero(n);
            v_ = Eigen::VectorXd::Zero(n);
        }
    }
    void ascend(Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
        if (!use_adam_) {
            x += lr_ * grad;
            return;
        }
        ++t_;
        m_ = 0.9 * m_ + 0.1 * grad;
        v_ = 0.999 * v_ + 0.001 * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(0.9, t_);
        const double c2 = 1.0 - std::pow(0.999, t_);
        x.array() += lr_ * (m_ / c1).array() / ((v_ / c2).array().sqrt() + 1e-8);
    }

private:
    bool use_adam_;
    double lr_;
    Eigen::VectorXd m_, v_;
    long t_ = 0;
};

} // namespace

VIResult optimize(const VIConfig& config, const MisfitBackend& backend, const Generator& gen,
                  Rng& rng) {
    config.validate();
    const Eigen::Index h = gen.latent_dim();
    VIResult result;
    result.params = VariationalParams::zero(h);
    result.trace.reserve(static_cast<std::size_t>(config.iterations));
    BlockOptimizer opt_mu(config.use_adam, config.lr_mu, h);
    BlockOptimizer opt_lv(config.use_adam, config.lr_logvar, h);

    const auto t0 = std::chrono::steady_clock::now();
    for (long it = 0; it < config.iterations; ++it) {
        const Eigen::MatrixXd eps = rng.normal_matrix(h, config.samples);
        VIGradient g = grad_elbo_vi(result.params, backend, gen, eps, config.entropy);
        if (config.clip_norm > 0) {
            const double n = std::sqrt(g.d_mu.squaredNorm() + g.d_logvar.squaredNorm());
            if (n > config.clip_norm) {
                g.d_mu *= config.clip_norm / n;
                g.d_logvar *= config.clip_norm / n;
            }
        }
        opt_mu.ascend(result.params.mu, g.d_mu);
        opt_lv.ascend(result.params.logvar, g.d_logvar);
        if (!result.params.mu.allFinite() || !result.params.logvar.allFinite())
            throw NumericalError("vi optimize: non-finite variational parameters at iteration " +
                                 std::to_string(it));
        TraceRow row;
        row.iter = it;
        row.elbo_estimate = g.elbo_estimate;
        row.grad_norm_mu = g.d_mu.norm();
        row.grad_norm_logvar = g.d_logvar.norm();
        row.wall_ms =
            config.record_wall_time
                ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count()
                : 0.0;
        result.trace.push_back(row);
    }
    return result;
}

Eigen::MatrixXd posterior_latents(const VariationalParams& lambda, long n, Rng& rng) {
    const Eigen::Index h = lambda.mu.size();
    const Eigen::VectorXd sig = lambda.sigma();
    Eigen::MatrixXd z(h, n);
    for (long i = 0; i < n; ++i)
        z.col(i) = lambda.mu.array() + sig.array() * rng.normal_vector(h).array();
    return z;
}

std::vector<ScalarField> posterior_sample(const VariationalParams& lambda, const Generator& gen,
                                          long n, Rng& rng) {
    const Eigen::MatrixXd z = posterior_latents(lambda, n, rng);
    std::vector<ScalarField> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) out.emplace_back(gen.grid(), gen.decode(z.col(i)));
    return out;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace, EntropyMode mode) {
    const std::string convention = mode == EntropyMode::ClosedForm
                                       ? "[loglik-const-dropped;entropy-closed-form]"
                                       : "[loglik-const-dropped;entropy-mc-score-removed]";
    CsvWriter csv({"iter", "elbo_estimate" + convention, "grad_norm_mu", "grad_norm_logvar",
                   "wall_ms"});
    for (const TraceRow& r : trace)
        csv.row({std::to_string(r.iter), fmt_full(r.elbo_estimate), fmt_full(r.grad_norm_mu),
                 fmt_full(r.grad_norm_logvar), fmt_full(r.wall_ms)});
    return csv.str();
}

} // namespace vidgp::vi

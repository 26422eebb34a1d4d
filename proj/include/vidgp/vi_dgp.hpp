#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vidgp/darcy.hpp"
#include "vidgp/dgp_vae.hpp"
#include "vidgp/grid_field.hpp"
#include "vidgp/pc_surrogate.hpp"

namespace vidgp::vi {

/// Diagonal-Gaussian variational parameters over the latent space.
struct VariationalParams {
    Eigen::VectorXd mu;
    Eigen::VectorXd logvar;

    static VariationalParams zero(Eigen::Index h) {
        return {Eigen::VectorXd::Zero(h), Eigen::VectorXd::Zero(h)};
    }
    Eigen::VectorXd sigma() const { return (0.5 * logvar.array()).exp(); }
};

/// Latent-to-field map with a vector-Jacobian product (the trained decoder, or
/// a fixed linear map in oracle tests).
class Generator {
public:
    virtual ~Generator() = default;
    virtual int latent_dim() const = 0;
    virtual Grid2D grid() const = 0;
    virtual Eigen::VectorXd decode(const Eigen::VectorXd& z) const = 0;
    /// Returns J_G(z)^T cot.
    virtual Eigen::VectorXd decode_vjp(const Eigen::VectorXd& z,
                                       const Eigen::VectorXd& cot) const = 0;
};

/// Trained VAE decoder including denormalization.
class VaeGenerator : public Generator {
public:
    explicit VaeGenerator(vae::VAEModel model);
    int latent_dim() const override { return model_.config.latent_dim; }
    Grid2D grid() const override { return Grid2D(model_.config.nx, model_.config.ny); }
    Eigen::VectorXd decode(const Eigen::VectorXd& z) const override;
    Eigen::VectorXd decode_vjp(const Eigen::VectorXd& z, const Eigen::VectorXd& cot) const override;
    const vae::VAEModel& model() const { return model_; }

private:
    vae::VAEModel model_;
};

/// k = A z + b on a given grid; the conjugate-oracle generator.
class LinearGenerator : public Generator {
public:
    LinearGenerator(const Grid2D& grid, Eigen::MatrixXd A, Eigen::VectorXd b);
    int latent_dim() const override { return static_cast<int>(A_.cols()); }
    Grid2D grid() const override { return grid_; }
    Eigen::VectorXd decode(const Eigen::VectorXd& z) const override { return A_ * z + b_; }
    Eigen::VectorXd decode_vjp(const Eigen::VectorXd&, const Eigen::VectorXd& cot) const override {
        return A_.transpose() * cot;
    }
    const Eigen::MatrixXd& matrix() const { return A_; }

private:
    Grid2D grid_;
    Eigen::MatrixXd A_;
    Eigen::VectorXd b_;
};

/// Provider of the data misfit Phi(k) and its field gradient. The adjoint
/// solver and the trained surrogate are interchangeable behind this interface.
class MisfitBackend {
public:
    virtual ~MisfitBackend() = default;
    virtual std::string name() const = 0;
    virtual double phi(const Eigen::VectorXd& k) const = 0;
    virtual std::pair<double, Eigen::VectorXd> phi_grad(const Eigen::VectorXd& k) const = 0;
};

/// Finite-volume forward solve + discrete adjoint (the VI-adjoint backend).
class AdjointBackend : public MisfitBackend {
public:
    AdjointBackend(const Grid2D& grid, ObservationSet obs, double f_const);
    std::string name() const override { return "adjoint"; }
    double phi(const Eigen::VectorXd& k) const override;
    std::pair<double, Eigen::VectorXd> phi_grad(const Eigen::VectorXd& k) const override;

private:
    Grid2D grid_;
    ObservationSet obs_;
    double f_const_;
};

/// Physics-constrained network backend (the VI-NN backend).
class SurrogateBackend : public MisfitBackend {
public:
    SurrogateBackend(pcs::SurrogateModel model, ObservationSet obs);
    std::string name() const override { return "surrogate"; }
    double phi(const Eigen::VectorXd& k) const override;
    std::pair<double, Eigen::VectorXd> phi_grad(const Eigen::VectorXd& k) const override;
    const pcs::SurrogateModel& model() const { return model_; }

private:
    pcs::SurrogateModel model_;
    ObservationSet obs_;
};

/// Phi = 1/2 ||(B k - d) / sigma||^2; linear-Gaussian conjugate oracle backend.
class GaussianLinearBackend : public MisfitBackend {
public:
    GaussianLinearBackend(Eigen::MatrixXd B, Eigen::VectorXd d, Eigen::VectorXd sigma);
    std::string name() const override { return "linear-gaussian"; }
    double phi(const Eigen::VectorXd& k) const override;
    std::pair<double, Eigen::VectorXd> phi_grad(const Eigen::VectorXd& k) const override;

private:
    Eigen::MatrixXd B_;
    Eigen::VectorXd d_, sigma_;
};

enum class EntropyMode { ClosedForm, MonteCarlo };

/// log pi(z, d) = -Phi(G(z)) - 1/2 ||z||^2, additive constants dropped.
double log_joint(const Eigen::VectorXd& z, const MisfitBackend& backend, const Generator& gen);

/// Monte Carlo lower bound over the given eps draws (columns). Closed-form
/// entropy: sum(logvar)/2 + h/2 log(2 pi e); Monte Carlo entropy keeps its
/// normalization constant so both modes share one convention.
double elbo_vi(const VariationalParams& lambda, const MisfitBackend& backend, const Generator& gen,
               const Eigen::MatrixXd& eps, EntropyMode mode);

struct VIGradient {
    Eigen::VectorXd d_mu;
    Eigen::VectorXd d_logvar;
    double elbo_estimate = 0;
};

/// Pathwise (reparameterized) gradient estimator averaged over the eps
/// columns. Monte Carlo entropy mode removes the score term, keeping the
/// estimator unbiased.
VIGradient grad_elbo_vi(const VariationalParams& lambda, const MisfitBackend& backend,
                        const Generator& gen, const Eigen::MatrixXd& eps, EntropyMode mode);

struct VIConfig {
    long iterations = 5000;
    int samples = 1; // M_s
    double lr_mu = 8e-4;
    double lr_logvar = 8e-4;
    EntropyMode entropy = EntropyMode::ClosedForm;
    long posterior_samples = 10000; // N_s
    bool use_adam = false;
    double clip_norm = 0; // 0 disables clipping
    bool record_wall_time = false;

    void validate() const {
        if (iterations < 1) throw DomainError("VIConfig: iterations must be positive");
        if (samples < 1) throw DomainError("VIConfig: samples (M_s) must be >= 1");
        if (!(lr_mu > 0) || !(lr_logvar > 0)) throw DomainError("VIConfig: learning rates must be positive");
        if (posterior_samples < 1) throw DomainError("VIConfig: posterior_samples must be positive");
        if (clip_norm < 0) throw DomainError("VIConfig: clip_norm must be >= 0");
    }
};

struct TraceRow {
    long iter = 0;
    double elbo_estimate = 0;
    double grad_norm_mu = 0;
    double grad_norm_logvar = 0;
    double wall_ms = 0;
};

struct VIResult {
    VariationalParams params;
    std::vector<TraceRow> trace;
};

/// Stochastic gradient ascent from zero initialization; seed-deterministic.
VIResult optimize(const VIConfig& config, const MisfitBackend& backend, const Generator& gen,
                  Rng& rng);

/// Latent draws z ~ N(mu, diag(sigma^2)), one per column.
Eigen::MatrixXd posterior_latents(const VariationalParams& lambda, long n, Rng& rng);

/// Decoded posterior fields.
std::vector<ScalarField> posterior_sample(const VariationalParams& lambda, const Generator& gen,
                                          long n, Rng& rng);

/// CSV with the dropped-constants convention recorded in the header.
std::string trace_to_csv(const std::vector<TraceRow>& trace, EntropyMode mode);

} // namespace vidgp::vi

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vidgp/diff_engine.hpp"
#include "vidgp/grid_field.hpp"
#include "vidgp/param_vector.hpp"

namespace vidgp::vae {

enum class Activation { ReLU, Sigmoid };

/// Architecture and training hyperparameters. The encoder runs
/// M -> h -> h and then two h -> h -> h branches for the mean and the log
/// variance; the decoder runs h -> M -> M -> M -> M with the configured hidden
/// activation and an optional Sigmoid on the output (channel fields).
struct VAEConfig {
    int nx = 0;
    int ny = 0;
    int latent_dim = 0;
    Activation decoder_activation = Activation::ReLU;
    bool final_sigmoid = false;
    int mc_samples = 1; // L
    int epochs = 300;
    int batch = 64;
    double lr = 1e-4;
    // training-space normalization: field = lo + (hi - lo) * u
    bool normalized = false;
    double norm_lo = 0;
    double norm_hi = 1;

    int input_dim() const { return nx * ny; }
    void validate() const;
};

struct VAEModel {
    VAEConfig config;
    ParamVector params;

    /// Weights uniform in +-1/sqrt(fan_in), biases zero.
    static VAEModel init(const VAEConfig& config, Rng& rng);
    /// All-zero parameters (bias-image decoder); used by shape tests.
    static VAEModel zeros(const VAEConfig& config);

    void save(const std::string& path) const;
    static VAEModel load(const std::string& path);
};

/// Parameter layout shared by the graph builders and the model constructors.
ParamVector make_vae_params(const VAEConfig& config);

/// Graph builders operating on an existing tape; `params` follows the
/// make_vae_params block order. Inputs/outputs are (dim x batch) nodes.
std::pair<ad::Var, ad::Var> encoder_graph(ad::Tape& t, const std::vector<ad::Var>& params,
                                          ad::Var k, const VAEConfig& config);
ad::Var decoder_graph(ad::Tape& t, const std::vector<ad::Var>& params, ad::Var z,
                      const VAEConfig& config);

/// Deterministic encoder evaluation on one normalized field vector.
std::pair<Eigen::VectorXd, Eigen::VectorXd> encode(const VAEModel& model,
                                                   const Eigen::VectorXd& k_norm);

/// z = mu + exp(logvar / 2) .* eps.
Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar,
                               const Eigen::VectorXd& eps);

/// Decoder evaluation; output stays in normalized training space.
Eigen::VectorXd decode(const VAEModel& model, const Eigen::VectorXd& z);

/// 1/2 sum(mu^2 + sigma^2 - 1 - logvar), the closed-form KL against N(0, I).
double kl_diag_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

/// Minibatch ELBO program; aux = { K (M x B), EPS (h x B*L) }. The
/// reconstruction term is -1/2 ||k - G(z)||^2 (identity decoder covariance,
/// additive constants dropped), averaged over the L epsilon draws and the
/// batch; the KL term is the batch mean of the closed form.
ad::DiffProgram elbo_program(const VAEConfig& config);

/// Single-field ELBO with explicit epsilon draws (columns of eps).
double elbo(const VAEModel& model, const Eigen::VectorXd& k_norm, const Eigen::MatrixXd& eps);

struct VAETrainResult {
    VAEModel model;
    std::vector<double> trace; // per-epoch mean ELBO
};

/// Algorithm: Adam ascent on the minibatch ELBO for config.epochs epochs.
/// Dataset fields are normalized according to the dataset metadata before
/// training; the constants are recorded in the returned model.
VAETrainResult train_vae(const FieldDataset& dataset, VAEConfig config, Rng& rng);

/// Map a normalized decoder output back to field units.
Eigen::VectorXd denormalize(const VAEConfig& config, const Eigen::VectorXd& u);

/// k' = denormalize(G(z')); the deep generative prior sample.
ScalarField generate(const VAEModel& model, const Eigen::VectorXd& z);
ScalarField generate(const VAEModel& model, Rng& rng);

} // namespace vidgp::vae

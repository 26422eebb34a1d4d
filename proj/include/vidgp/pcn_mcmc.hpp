#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vidgp/errors.hpp"
#include "vidgp/rng.hpp"

namespace vidgp::mcmc {

/// Preconditioned Crank-Nicolson sampler over the latent prior N(0, I).
struct PCNConfig {
    double beta = 0.15;
    long iterations = 50000; // N_ite
    long burn_in = 40000;    // N_b
    long thin = 1;

    void validate() const {
        if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("PCNConfig: beta must be in [0, 1]");
        if (iterations < 1) throw DomainError("PCNConfig: iterations must be positive");
        if (burn_in < 0 || burn_in >= iterations)
            throw DomainError("PCNConfig: burn_in must satisfy 0 <= N_b < N_ite");
        if (thin < 1) throw DomainError("PCNConfig: thin must be >= 1");
    }
};

using LogLik = std::function<double(const Eigen::VectorXd&)>;

struct ChainState {
    Eigen::VectorXd z;
    double loglik = 0; // cached log-likelihood of z
    long accepts = 0;
    long steps = 0;
};

/// One pCN transition: z' = sqrt(1 - beta^2) z + beta xi, accepted with
/// probability exp(min(0, l(z') - l(z))). Exactly one likelihood evaluation.
void pcn_step(ChainState& state, double beta, const LogLik& loglik, Rng& rng);

struct ChainRow {
    long iter = 0;
    int accepted = 0;
    double loglik = 0;
};

struct ChainResult {
    Eigen::MatrixXd samples; // latent draws, one per column (post burn-in, thinned)
    double acceptance_rate = 0;
    Eigen::VectorXd ess; // per-coordinate batch-means effective sample size
    std::vector<ChainRow> trace;
};

ChainResult run_chain(const PCNConfig& config, const LogLik& loglik, int latent_dim, Rng& rng);

/// Batch-means ESS of one scalar chain.
double batch_means_ess(const Eigen::VectorXd& x);

/// CSV of iter, acceptance flag, log-likelihood rows.
std::string chain_to_csv(const std::vector<ChainRow>& trace);

} // namespace vidgp::mcmc

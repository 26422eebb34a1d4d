#include "vidgp/pcn_mcmc.hpp"

#include <cmath>

#include "vidgp/textio.hpp"

namespace vidgp::mcmc {

void pcn_step(ChainState& state, double beta, const LogLik& loglik, Rng& rng) {
    const Eigen::VectorXd xi = rng.normal_vector(state.z.size());
    const Eigen::VectorXd proposal = std::sqrt(1.0 - beta * beta) * state.z + beta * xi;
    const double ll = loglik(proposal);
    if (!std::isfinite(ll))
        throw NumericalError("pcn_step: non-finite log-likelihood at step " +
                             std::to_string(state.steps + 1));
    // acceptance in log space; exp of a clamped non-positive number never overflows
    const double alpha = std::exp(std::min(0.0, ll - state.loglik));
    const double u = rng.uniform();
    ++state.steps;
    if (u < alpha) {
        state.z = proposal;
        state.loglik = ll;
        ++state.accepts;
    }
}

ChainResult run_chain(const PCNConfig& config, const LogLik& loglik, int latent_dim, Rng& rng) {
    config.validate();
    ChainState state;
    state.z = rng.normal_vector(latent_dim);
    state.loglik = loglik(state.z);

    const long kept = (config.iterations - config.burn_in) / config.thin;
    ChainResult result;
    result.samples.resize(latent_dim, kept);
    result.trace.reserve(static_cast<std::size_t>(config.iterations));

    long stored = 0;
    for (long it = 1; it <= config.iterations; ++it) {
        const long before = state.accepts;
        pcn_step(state, config.beta, loglik, rng);
        result.trace.push_back({it, static_cast<int>(state.accepts - before), state.loglik});
        if (it > config.burn_in && (it - config.burn_in) % config.thin == 0 && stored < kept)
            result.samples.col(stored++) = state.z;
    }
    result.samples.conservativeResize(latent_dim, stored);
    result.acceptance_rate =
        static_cast<double>(state.accepts) / static_cast<double>(config.iterations);
    result.ess.resize(latent_dim);
    for (int d = 0; d < latent_dim; ++d)
        result.ess[d] = batch_means_ess(result.samples.row(d).transpose());
    return result;
}

double batch_means_ess(const Eigen::VectorXd& x) {
    const long n = x.size();
    if (n < 4) return static_cast<double>(n);
    const long bsize = static_cast<long>(std::floor(std::sqrt(static_cast<double>(n))));
    const long nb = n / bsize;
    const double mean = x.head(nb * bsize).mean();
    double var = 0;
    for (long i = 0; i < nb * bsize; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(nb * bsize - 1);
    if (var <= 0) return static_cast<double>(n);
    double bm_var = 0;
    for (long b = 0; b < nb; ++b) {
        const double bm = x.segment(b * bsize, bsize).mean();
        bm_var += (bm - mean) * (bm - mean);
    }
    bm_var *= static_cast<double>(bsize) / static_cast<double>(nb - 1);
    return std::max(1.0, static_cast<double>(n) * var / std::max(bm_var, 1e-300));
}

std::string chain_to_csv(const std::vector<ChainRow>& trace) {
    CsvWriter csv({"iter", "accepted", "loglik"});
    for (const ChainRow& r : trace)
        csv.row({std::to_string(r.iter), std::to_string(r.accepted), fmt_full(r.loglik)});
    return csv.str();
}

} // namespace vidgp::mcmc

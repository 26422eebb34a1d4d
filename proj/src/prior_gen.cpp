#include "vidgp/prior_gen.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "vidgp/textio.hpp"

namespace vidgp {

double exp_cov(const Point2& x, const Point2& y, const GRFSpec& spec) {
    spec.validate();
    const double d1 = (x.x1 - y.x1) / spec.l1;
    const double d2 = (x.x2 - y.x2) / spec.l2;
    return spec.sigma2 * std::exp(-std::sqrt(d1 * d1 + d2 * d2));
}

namespace {

Eigen::MatrixXd cholesky_with_escalation(const Grid2D& grid, const GRFSpec& spec) {
    const int n = grid.cells();
    Eigen::MatrixXd C(n, n);
    for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i) {
            const int r = grid.index(i, j);
            const Point2 xr{grid.cx(i), grid.cy(j)};
            for (int jj = 0; jj <= j; ++jj)
                for (int ii = 0; ii < grid.nx; ++ii) {
                    const int c = grid.index(ii, jj);
                    if (c > r) continue;
                    const double v = exp_cov(xr, {grid.cx(ii), grid.cy(jj)}, spec);
                    C(r, c) = v;
                    C(c, r) = v;
                }
        }
    double jitter = spec.jitter_rel * spec.sigma2;
    for (int attempt = 0; attempt <= 3; ++attempt) {
        Eigen::LLT<Eigen::MatrixXd> llt(C + jitter * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success) return llt.matrixL();
        jitter = (jitter == 0 ? 1e-12 * spec.sigma2 : jitter * 10);
    }
    throw NumericalError("GRF covariance factorization failed after jitter escalation (l1=" +
                         fmt_full(spec.l1) + ", l2=" + fmt_full(spec.l2) + ")");
}

} // namespace

GRFSampler::GRFSampler(const Grid2D& grid, const GRFSpec& spec) : grid_(grid), spec_(spec) {
    spec.validate();
    chol_ = cholesky_with_escalation(grid, spec);
}

ScalarField GRFSampler::sample(Rng& rng) const {
    Eigen::VectorXd xi = rng.normal_vector(grid_.cells());
    Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>() * xi;
    v.array() += spec_.mean;
    return ScalarField(grid_, std::move(v));
}

ScalarField sample_grf(const Grid2D& grid, const GRFSpec& spec, Rng& rng) {
    return GRFSampler(grid, spec).sample(rng);
}

FieldDataset sample_grf_dataset(const Grid2D& grid, int n_lengths, int n_per_length,
                                double length_min, double length_max, double sigma2, double mean,
                                Rng& rng) {
    if (n_lengths < 1 || n_per_length < 1)
        throw DomainError("sample_grf_dataset: counts must be positive");
    if (!(length_min > 0 && length_max < 1 && length_min <= length_max))
        throw DomainError("sample_grf_dataset: length range must lie inside (0, 1)");

    FieldDataset ds;
    ds.grid = grid;
    ds.fields.reserve(static_cast<std::size_t>(n_lengths) * n_per_length);
    std::string pairs;
    for (int li = 0; li < n_lengths; ++li) {
        GRFSpec spec;
        spec.mean = mean;
        spec.sigma2 = sigma2;
        spec.l1 = rng.uniform(length_min, length_max);
        spec.l2 = rng.uniform(length_min, length_max);
        if (!pairs.empty()) pairs += ";";
        pairs += fmt_full(spec.l1) + "," + fmt_full(spec.l2);
        GRFSampler sampler(grid, spec);
        for (int s = 0; s < n_per_length; ++s) ds.fields.push_back(sampler.sample(rng).values);
    }
    ds.metadata.emplace_back("generator", "grf");
    ds.metadata.emplace_back("sigma_k2", fmt_full(sigma2));
    ds.metadata.emplace_back("mean", fmt_full(mean));
    ds.metadata.emplace_back("length_pairs", pairs);
    ds.metadata.emplace_back("normalization", "none");
    return ds;
}

ScalarField sample_channel(const Grid2D& grid, const ChannelSpec& spec, Rng& rng) {
    spec.validate();
    Eigen::VectorXd v = Eigen::VectorXd::Constant(grid.cells(), spec.k_low);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (int c = 0; c < spec.n_channels; ++c) {
        const double center = rng.uniform();
        const double amp = rng.uniform(spec.amp_min, spec.amp_max);
        const double wavelength = rng.uniform(spec.wavelength_min, spec.wavelength_max);
        const double phase = rng.uniform(0.0, two_pi);
        const double width = rng.uniform(spec.width_min, spec.width_max);
        for (int j = 0; j < grid.ny; ++j) {
            for (int i = 0; i < grid.nx; ++i) {
                const double yc = center + amp * std::sin(two_pi * grid.cx(i) / wavelength + phase);
                if (std::abs(grid.cy(j) - yc) <= 0.5 * width) v[grid.index(i, j)] = spec.k_high;
            }
        }
    }
    return ScalarField(grid, std::move(v));
}

FieldDataset sample_channel_dataset(const Grid2D& grid, const ChannelSpec& spec, int count,
                                    Rng& rng) {
    if (count < 1) throw DomainError("sample_channel_dataset: count must be positive");
    FieldDataset ds;
    ds.grid = grid;
    ds.fields.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) ds.fields.push_back(sample_channel(grid, spec, rng).values);
    ds.metadata.emplace_back("generator", "channel");
    ds.metadata.emplace_back("k_low", fmt_full(spec.k_low));
    ds.metadata.emplace_back("k_high", fmt_full(spec.k_high));
    ds.metadata.emplace_back("n_channels", std::to_string(spec.n_channels));
    // fields are affinely mapped onto [0, 1] for the Sigmoid decoder
    ds.metadata.emplace_back("normalization",
                             "affine " + fmt_full(spec.k_low) + " " + fmt_full(spec.k_high));
    return ds;
}

} // namespace vidgp

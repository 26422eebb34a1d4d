#pragma once

#include "vidgp/grid_field.hpp"
#include "vidgp/rng.hpp"

namespace vidgp {

/// Gaussian random field with the L2-norm exponential covariance of the
/// uncertain-correlation-length prior.
struct GRFSpec {
    double mean = 0.0;
    double sigma2 = 0.5;
    double l1 = 0.2;
    double l2 = 0.2;
    double jitter_rel = 1e-10; // jitter = jitter_rel * sigma2 on the diagonal

    void validate() const {
        if (!(sigma2 > 0)) throw DomainError("GRFSpec: sigma2 must be positive");
        if (!(l1 > 0) || !(l2 > 0)) throw DomainError("GRFSpec: correlation lengths must be positive");
        if (jitter_rel < 0) throw DomainError("GRFSpec: jitter must be non-negative");
    }
};

/// sigma2 * exp(-sqrt((dx1/l1)^2 + (dx2/l2)^2)).
double exp_cov(const Point2& x, const Point2& y, const GRFSpec& spec);

/// Exact sampling: dense covariance over cell centers, Cholesky factor, then
/// mean + L * xi. Jitter escalates x10 up to 3 retries before failing.
ScalarField sample_grf(const Grid2D& grid, const GRFSpec& spec, Rng& rng);

/// Reusable factor for drawing many fields from one (l1, l2) pair.
class GRFSampler {
public:
    GRFSampler(const Grid2D& grid, const GRFSpec& spec);
    ScalarField sample(Rng& rng) const;

private:
    Grid2D grid_;
    GRFSpec spec_;
    Eigen::MatrixXd chol_; // lower factor
};

/// Draws n_lengths (l1, l2) pairs uniformly from [length_min, length_max]^2
/// and n_per_length fields per pair; metadata records generator parameters
/// and every sampled pair.
FieldDataset sample_grf_dataset(const Grid2D& grid, int n_lengths, int n_per_length,
                                double length_min, double length_max, double sigma2, double mean,
                                Rng& rng);

/// Binary channelized medium built from sinusoidal bands.
struct ChannelSpec {
    int n_channels = 3;
    double width_min = 0.08;
    double width_max = 0.20;
    double amp_min = 0.05;
    double amp_max = 0.25;
    double wavelength_min = 0.5;
    double wavelength_max = 2.0;
    double k_low = 0.0;
    double k_high = 4.0;

    void validate() const {
        if (n_channels < 0) throw DomainError("ChannelSpec: n_channels must be >= 0");
        if (!(width_min > 0 && width_max < 1 && width_min <= width_max))
            throw DomainError("ChannelSpec: need 0 < width_min <= width_max < 1");
        if (!(k_low < k_high)) throw DomainError("ChannelSpec: k_low must be < k_high");
        if (!(amp_min <= amp_max) || amp_min < 0) throw DomainError("ChannelSpec: bad amplitude range");
        if (!(wavelength_min > 0 && wavelength_min <= wavelength_max))
            throw DomainError("ChannelSpec: bad wavelength range");
    }
};

/// Rasterizes n_channels sinusoidal bands; cells inside any band take k_high,
/// all others k_low. Output is exactly two-valued.
ScalarField sample_channel(const Grid2D& grid, const ChannelSpec& spec, Rng& rng);

FieldDataset sample_channel_dataset(const Grid2D& grid, const ChannelSpec& spec, int count,
                                    Rng& rng);

} // namespace vidgp

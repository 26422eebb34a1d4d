#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vidgp/diff_engine.hpp"
#include "vidgp/grid_field.hpp"
#include "vidgp/param_vector.hpp"

namespace vidgp::pcs {

enum class Backend { MLP, Conv };
enum class Schedule { Constant, OneCycle };

/// Residual discretization used in the loss. Central: second-order central
/// differences (one-sided at boundary-adjacent cells) applied to the three
/// cell-value channels. FV: flux-form residuals consistent with the forward
/// solver; the velocity channels are read as right-face/top-face harmonic
/// fluxes, which makes the solver's own solution the exact loss minimum.
enum class Stencil { FV, Central };

/// Residual-trained field-to-fields network. The MLP backend maps the
/// flattened field through `hidden` widths to the 3 output channels; the Conv
/// backend is a small 3-level encoder-decoder (conv/pool/conv/upsample/conv)
/// with `conv_channels` base channels.
struct SurrogateConfig {
    int nx = 0;
    int ny = 0;
    Backend backend = Backend::Conv;
    std::vector<int> hidden = {256, 256, 256};
    int conv_channels = 16;
    double gamma = 10.0;
    int epochs = 300;
    int batch = 32;
    double lr = 1e-3;
    Schedule schedule = Schedule::OneCycle;
    Stencil stencil = Stencil::FV;
    double f_const = 3.0;

    int field_dim() const { return nx * ny; }
    /// Velocity channels are emitted in units of the source magnitude so the
    /// network trains on O(1) outputs.
    double velocity_scale() const { return f_const != 0 ? std::abs(f_const) : 1.0; }
    void validate() const;
};

struct SurrogateModel {
    SurrogateConfig config;
    ParamVector params;

    static SurrogateModel init(const SurrogateConfig& config, Rng& rng);
    static SurrogateModel zeros(const SurrogateConfig& config);
    void save(const std::string& path) const;
    static SurrogateModel load(const std::string& path);
};

/// Pressure and the two cell-centered velocity components.
struct SurrogatePrediction {
    ScalarField p;
    ScalarField vx;
    ScalarField vy;
};

struct ResidualLoss {
    double j = 0;
    double j_pde = 0;
    double j_b = 0;
};

ParamVector make_surrogate_params(const SurrogateConfig& config);

/// Network graph: input (M x B) log-permeability columns, output (3M x B)
/// stacked (p, vx, vy) channels.
ad::Var surrogate_graph(ad::Tape& t, const std::vector<ad::Var>& params, ad::Var k,
                        const SurrogateConfig& config);

/// Shared sparse d/dx1 and d/dx2 stencils: second-order central differences on
/// interior cells, one-sided second-order on boundary-adjacent cells.
std::shared_ptr<const Eigen::SparseMatrix<double>> ddx_stencil(const Grid2D& grid);
std::shared_ptr<const Eigen::SparseMatrix<double>> ddy_stencil(const Grid2D& grid);

/// Loss graph over a prediction node (3M x B) and its inputs (M x B):
/// j_pde = mean |div v - f|^2 + mean |v + exp(k) grad p|^2 over all cells,
/// j_b = per-side means of the Dirichlet/no-flow violations, j = j_pde + gamma j_b.
struct LossVars {
    ad::Var j;
    ad::Var j_pde;
    ad::Var j_b;
};
LossVars residual_loss_graph(ad::Tape& t, ad::Var prediction, ad::Var k, const Grid2D& grid,
                             double f_const, double gamma, Stencil stencil = Stencil::Central);

SurrogatePrediction predict(const SurrogateModel& model, const ScalarField& k);

ResidualLoss residual_loss(const SurrogatePrediction& prediction, const ScalarField& k,
                           double f_const, double gamma, Stencil stencil = Stencil::Central);

struct SurrogateTrainResult {
    SurrogateModel model;
    std::vector<double> trace; // per-epoch mean J
};

/// Adam descent on the minibatch residual loss; uses the first n_train fields
/// when n_train > 0, the whole dataset otherwise.
SurrogateTrainResult train_surrogate(const FieldDataset& dataset, SurrogateConfig config, Rng& rng,
                                     int n_train = -1);

/// observe(predict(k).p, plan).
Eigen::VectorXd surrogate_forward(const SurrogateModel& model, const ScalarField& k,
                                  const ObservationPlan& plan);

/// Phi_hat(k) against obs.noisy through the surrogate pressure head.
double surrogate_misfit(const SurrogateModel& model, const ObservationSet& obs,
                        const ScalarField& k);

/// Reverse-mode d Phi_hat / dk (gradient with respect to the field, not the
/// network weights).
ScalarField surrogate_misfit_grad_k(const SurrogateModel& model, const ObservationSet& obs,
                                    const ScalarField& k);

} // namespace vidgp::pcs

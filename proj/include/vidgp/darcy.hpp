#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "vidgp/grid_field.hpp"

namespace vidgp {

/// Pressure plus face fluxes from one forward solve. vx lives on vertical
/// faces (index j*(nx+1)+i, i = 0..nx), vy on horizontal faces (index
/// j*nx+i, j = 0..ny); both are velocities in the +x1/+x2 direction.
struct DarcySolution {
    ScalarField p;
    Eigen::VectorXd vx;
    Eigen::VectorXd vy;
    double residual_norm = 0;
};

/// Assembled 5-point system A p = rhs. A is symmetric positive definite for
/// any finite k: harmonic-mean interior transmissibilities, Dirichlet p=1 on
/// the left and p=0 on the right folded in through half-cell coefficients,
/// no-flow top and bottom.
struct SparseSystem {
    int n = 0;
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd rhs;
};

SparseSystem assemble(const ScalarField& k, double f_const);

DarcySolution solve_pressure(const ScalarField& k, double f_const);

/// observe(solve_pressure(k).p, plan); the forward map F of the inverse problem.
Eigen::VectorXd forward(const ScalarField& k, const ObservationPlan& plan, double f_const);

/// Phi(k) = 1/2 sum_j ((F(k)_j - d_j) / sigma_j)^2 against obs.noisy.
double misfit(const ScalarField& k, const ObservationSet& obs, double f_const);

/// dPhi/dk via one extra solve of the (symmetric) system: A lam = -O^T W r,
/// then g_c = lam^T (dA/dk_c p - drhs/dk_c) accumulated over the <= 4 faces
/// touching cell c.
ScalarField adjoint_grad(const ScalarField& k, const ObservationSet& obs, double f_const);

/// Net volumetric outflow through the two Dirichlet boundaries; equals
/// f_const * |domain| by discrete conservation.
double dirichlet_outflow(const DarcySolution& sol);

/// Face fluxes averaged to cell centers (used when solver output feeds the
/// surrogate's cell-centered residual stencils).
ScalarField face_to_center_x(const DarcySolution& sol);
ScalarField face_to_center_y(const DarcySolution& sol);

} // namespace vidgp

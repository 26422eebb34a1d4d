#include "vidgp/darcy.hpp"

#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>

#include "vidgp/errors.hpp"
#include "vidgp/textio.hpp"

namespace vidgp {

namespace {

constexpr double kDirichletLeft = 1.0;
constexpr double kDirichletRight = 0.0;
constexpr double kSolveTol = 1e-10;

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

// d harmonic(a,b) / d log(a) with a = exp(k_a)
double harmonic_dlog_first(double a, double b) {
    const double s = a + b;
    return 2.0 * a * b * b / (s * s);
}

struct Assembly {
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd rhs;
    Eigen::VectorXd a; // exp(k) per cell
};

Assembly assemble_impl(const ScalarField& k, double f_const) {
    if (!k.values.allFinite()) throw NumericalError("assemble: log-permeability has non-finite entries");
    const Grid2D& g = k.grid;
    const int n = g.cells();
    const double hx = g.hx(), hy = g.hy();

    Assembly out;
    out.a = k.values.array().exp();
    out.rhs = Eigen::VectorXd::Constant(n, f_const * hx * hy);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(5 * n));

    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const int c = g.index(i, j);
            const double ac = out.a[c];
            if (i > 0) {
                const double T = harmonic(ac, out.a[g.index(i - 1, j)]) * hy / hx;
                diag[c] += T;
                trip.emplace_back(c, g.index(i - 1, j), -T);
            } else {
                const double T = 2.0 * ac * hy / hx; // half-cell Dirichlet
                diag[c] += T;
                out.rhs[c] += T * kDirichletLeft;
            }
            if (i < g.nx - 1) {
                const double T = harmonic(ac, out.a[g.index(i + 1, j)]) * hy / hx;
                diag[c] += T;
                trip.emplace_back(c, g.index(i + 1, j), -T);
            } else {
                const double T = 2.0 * ac * hy / hx;
                diag[c] += T;
                out.rhs[c] += T * kDirichletRight;
            }
            if (j > 0) {
                const double T = harmonic(ac, out.a[g.index(i, j - 1)]) * hx / hy;
                diag[c] += T;
                trip.emplace_back(c, g.index(i, j - 1), -T);
            }
            if (j < g.ny - 1) {
                const double T = harmonic(ac, out.a[g.index(i, j + 1)]) * hx / hy;
                diag[c] += T;
                trip.emplace_back(c, g.index(i, j + 1), -T);
            }
            // top/bottom faces are no-flow: no contribution
        }
    }
    for (int c = 0; c < n; ++c) trip.emplace_back(c, c, diag[c]);
    out.A.resize(n, n);
    out.A.setFromTriplets(trip.begin(), trip.end());
    return out;
}

Eigen::VectorXd factor_and_solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& rhs,
                                 Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& ldlt,
                                 bool factorize, double* residual_out) {
    if (factorize) {
        ldlt.compute(A);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("sparse LDLT factorization of the Darcy system failed");
    }
    Eigen::VectorXd x = ldlt.solve(rhs);
    const double rhs_norm = rhs.norm();
    double rel = (A * x - rhs).norm() / (rhs_norm > 0 ? rhs_norm : 1.0);
    if (rel > kSolveTol) {
        // one step of iterative refinement before giving up
        x += ldlt.solve(rhs - A * x);
        rel = (A * x - rhs).norm() / (rhs_norm > 0 ? rhs_norm : 1.0);
        if (rel > kSolveTol)
            throw ConvergenceError("Darcy solve stalled at relative residual " + fmt_full(rel) +
                                       " (tolerance " + fmt_full(kSolveTol) + ")",
                                   rel);
    }
    if (residual_out) *residual_out = rel;
    return x;
}

} // namespace

SparseSystem assemble(const ScalarField& k, double f_const) {
    Assembly asmb = assemble_impl(k, f_const);
    SparseSystem sys;
    sys.n = k.grid.cells();
    sys.A = std::move(asmb.A);
    sys.rhs = std::move(asmb.rhs);
    return sys;
}

DarcySolution solve_pressure(const ScalarField& k, double f_const) {
    const Grid2D& g = k.grid;
    Assembly asmb = assemble_impl(k, f_const);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    DarcySolution sol;
    Eigen::VectorXd p = factor_and_solve(asmb.A, asmb.rhs, ldlt, true, &sol.residual_norm);

    const double hx = g.hx(), hy = g.hy();
    sol.vx.resize((g.nx + 1) * g.ny);
    sol.vy.resize(g.nx * (g.ny + 1));
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i <= g.nx; ++i) {
            const int f = j * (g.nx + 1) + i;
            if (i == 0) {
                sol.vx[f] = 2.0 * asmb.a[g.index(0, j)] * (kDirichletLeft - p[g.index(0, j)]) / hx;
            } else if (i == g.nx) {
                sol.vx[f] =
                    2.0 * asmb.a[g.index(g.nx - 1, j)] * (p[g.index(g.nx - 1, j)] - kDirichletRight) / hx;
            } else {
                const double H = harmonic(asmb.a[g.index(i - 1, j)], asmb.a[g.index(i, j)]);
                sol.vx[f] = H * (p[g.index(i - 1, j)] - p[g.index(i, j)]) / hx;
            }
        }
    }
    for (int j = 0; j <= g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const int f = j * g.nx + i;
            if (j == 0 || j == g.ny) {
                sol.vy[f] = 0.0; // no-flow boundary
            } else {
                const double H = harmonic(asmb.a[g.index(i, j - 1)], asmb.a[g.index(i, j)]);
                sol.vy[f] = H * (p[g.index(i, j - 1)] - p[g.index(i, j)]) / hy;
            }
        }
    }
    sol.p = ScalarField(g, std::move(p));
    return sol;
}

Eigen::VectorXd forward(const ScalarField& k, const ObservationPlan& plan, double f_const) {
    return observe(solve_pressure(k, f_const).p, plan);
}

double misfit(const ScalarField& k, const ObservationSet& obs, double f_const) {
    if (obs.plan.size() != static_cast<std::size_t>(obs.size()))
        throw ShapeError("misfit: observation set carries no plan");
    if (!(obs.sigma.array() > 0).all()) throw DomainError("misfit: sigma must be positive");
    const Eigen::VectorXd r = forward(k, obs.plan, f_const) - obs.noisy;
    return 0.5 * (r.array() / obs.sigma.array()).square().sum();
}

ScalarField adjoint_grad(const ScalarField& k, const ObservationSet& obs, double f_const) {
    if (obs.plan.size() != static_cast<std::size_t>(obs.size()))
        throw ShapeError("adjoint_grad: observation set carries no plan");
    const Grid2D& g = k.grid;
    const double hx = g.hx(), hy = g.hy();

    Assembly asmb = assemble_impl(k, f_const);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    const Eigen::VectorXd p = factor_and_solve(asmb.A, asmb.rhs, ldlt, true, nullptr);

    const Eigen::SparseMatrix<double> O = observation_matrix(g, obs.plan);
    const Eigen::VectorXd r = O * p - obs.noisy;
    const Eigen::VectorXd w = r.array() / obs.sigma.array().square();
    // A is symmetric, so the adjoint system reuses the factorization
    const Eigen::VectorXd lam = factor_and_solve(asmb.A, -(O.transpose() * w), ldlt, false, nullptr);

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(g.cells());
    // interior faces: T = H(a_L, a_R) * geo; dT/dk_L = geo * dH/dlog a_L, etc.
    // lam^T dA/dk_c p collapses to dT * (lam_L - lam_R)(p_L - p_R) per face.
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i + 1 < g.nx; ++i) {
            const int L = g.index(i, j), R = g.index(i + 1, j);
            const double geo = hy / hx;
            const double s = (lam[L] - lam[R]) * (p[L] - p[R]) * geo;
            grad[L] += harmonic_dlog_first(asmb.a[L], asmb.a[R]) * s;
            grad[R] += harmonic_dlog_first(asmb.a[R], asmb.a[L]) * s;
        }
    }
    for (int j = 0; j + 1 < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const int L = g.index(i, j), R = g.index(i, j + 1);
            const double geo = hx / hy;
            const double s = (lam[L] - lam[R]) * (p[L] - p[R]) * geo;
            grad[L] += harmonic_dlog_first(asmb.a[L], asmb.a[R]) * s;
            grad[R] += harmonic_dlog_first(asmb.a[R], asmb.a[L]) * s;
        }
    }
    // Dirichlet half-cell faces: T = 2 a hy/hx, dT/dk = T, and the rhs carries
    // T * p_bc, so the contribution is T * lam (p_cell - p_bc).
    for (int j = 0; j < g.ny; ++j) {
        const int cl = g.index(0, j);
        const int cr = g.index(g.nx - 1, j);
        grad[cl] += 2.0 * asmb.a[cl] * hy / hx * lam[cl] * (p[cl] - kDirichletLeft);
        grad[cr] += 2.0 * asmb.a[cr] * hy / hx * lam[cr] * (p[cr] - kDirichletRight);
    }
    return ScalarField(g, std::move(grad));
}

double dirichlet_outflow(const DarcySolution& sol) {
    const Grid2D& g = sol.p.grid;
    const double hy = g.hy();
    double out = 0;
    for (int j = 0; j < g.ny; ++j) {
        out += sol.vx[j * (g.nx + 1) + g.nx] * hy; // outflow through the right
        out -= sol.vx[j * (g.nx + 1) + 0] * hy;    // inflow through the left
    }
    return out;
}

ScalarField face_to_center_x(const DarcySolution& sol) {
    const Grid2D& g = sol.p.grid;
    Eigen::VectorXd c(g.cells());
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            c[g.index(i, j)] = 0.5 * (sol.vx[j * (g.nx + 1) + i] + sol.vx[j * (g.nx + 1) + i + 1]);
    return ScalarField(g, std::move(c));
}

ScalarField face_to_center_y(const DarcySolution& sol) {
    const Grid2D& g = sol.p.grid;
    Eigen::VectorXd c(g.cells());
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            c[g.index(i, j)] = 0.5 * (sol.vy[j * g.nx + i] + sol.vy[(j + 1) * g.nx + i]);
    return ScalarField(g, std::move(c));
}

} // namespace vidgp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "vidgp/darcy.hpp"
#include "vidgp/rng.hpp"

using namespace vidgp;

namespace {
ScalarField random_field(const Grid2D& g, Rng& rng, double scale = 1.0) {
    Eigen::VectorXd v(g.cells());
    for (int i = 0; i < g.cells(); ++i) v[i] = scale * rng.normal();
    return ScalarField(g, std::move(v));
}

ObservationSet synthetic_obs(const Grid2D& g, const ScalarField& truth, double level, Rng& rng) {
    ObservationPlan plan = ObservationPlan::regular(4);
    return [&] {
        DarcySolution sol = solve_pressure(truth, 3.0);
        return make_observations(sol.p, plan, level, rng);
    }();
}
} // namespace

TEST_CASE("assemble: 2x2 k=0 harmonic transmissibilities") {
    Grid2D g(2, 2);
    SparseSystem sys = assemble(ScalarField::zero(g), 0.0);
    Eigen::MatrixXd A(sys.A);
    // harmonic(1,1) = 1; square cells so geo = 1 for both face orientations
    CHECK(A(0, 1) == doctest::Approx(-1.0));
    CHECK(A(0, 2) == doctest::Approx(-1.0));
    // diag = interior x face + Dirichlet half face (2*1*hy/hx = 2) + interior y face
    CHECK(A(0, 0) == doctest::Approx(1.0 + 2.0 + 1.0));
}

TEST_CASE("assemble: matrix is symmetric") {
    Grid2D g(5, 4);
    Rng rng(7);
    SparseSystem sys = assemble(random_field(g, rng), 3.0);
    Eigen::MatrixXd A(sys.A);
    CHECK((A - A.transpose()).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("assemble: row sums equal Dirichlet half-cell coefficients") {
    Grid2D g(4, 4);
    Rng rng(13);
    ScalarField k = random_field(g, rng);
    SparseSystem sys = assemble(k, 0.0);
    Eigen::MatrixXd A(sys.A);
    const double geo = g.hy() / g.hx();
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const int c = g.index(i, j);
            double expected = 0.0;
            if (i == 0) expected += 2.0 * std::exp(k(i, j)) * geo;
            if (i == g.nx - 1) expected += 2.0 * std::exp(k(i, j)) * geo;
            CHECK(A.row(c).sum() == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("assemble rejects non-finite input") {
    Grid2D g(3, 3);
    ScalarField k = ScalarField::zero(g);
    k.values[4] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(assemble(k, 3.0), NumericalError);
}

TEST_CASE("solve: k=0, f=0 gives the linear pressure profile") {
    Grid2D g(16, 8);
    DarcySolution sol = solve_pressure(ScalarField::zero(g), 0.0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            CHECK(sol.p(i, j) == doctest::Approx(1.0 - g.cx(i)).epsilon(1e-12));
    CHECK(sol.residual_norm <= 1e-10);
}

TEST_CASE("solve: forward at (0.25, 0.5) on the linear profile") {
    Grid2D g(16, 16);
    ObservationPlan plan(std::vector<Point2>{{0.25, 0.5}});
    Eigen::VectorXd v = forward(ScalarField::zero(g), plan, 0.0);
    CHECK(v[0] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("solve: discrete conservation, outflow equals source integral") {
    Grid2D g(12, 12);
    Rng rng(19);
    SUBCASE("uniform k") {
        DarcySolution sol = solve_pressure(ScalarField::zero(g), 3.0);
        CHECK(dirichlet_outflow(sol) == doctest::Approx(3.0).epsilon(1e-9));
    }
    SUBCASE("random k") {
        for (int t = 0; t < 5; ++t) {
            DarcySolution sol = solve_pressure(random_field(g, rng), 3.0);
            CHECK(dirichlet_outflow(sol) == doctest::Approx(3.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("solve: pressure invariant to uniform conductivity scaling when f=0") {
    Grid2D g(8, 8);
    Rng rng(29);
    ScalarField k = random_field(g, rng);
    ScalarField shifted(g, k.values.array() + 1.7);
    DarcySolution a = solve_pressure(k, 0.0);
    DarcySolution b = solve_pressure(shifted, 0.0);
    CHECK((a.p.values - b.p.values).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("solve matches dense LU oracle on a random 8x8 field") {
    Grid2D g(8, 8);
    Rng rng(37);
    ScalarField k = random_field(g, rng);
    SparseSystem sys = assemble(k, 3.0);
    Eigen::MatrixXd A(sys.A);
    Eigen::VectorXd p_ref = Eigen::FullPivLU<Eigen::MatrixXd>(A).solve(sys.rhs);
    DarcySolution sol = solve_pressure(k, 3.0);
    CHECK((sol.p.values - p_ref).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("forward equals observe(solve_pressure) exactly") {
    Grid2D g(10, 10);
    Rng rng(43);
    ScalarField k = random_field(g, rng);
    ObservationPlan plan = ObservationPlan::regular(3);
    Eigen::VectorXd a = forward(k, plan, 3.0);
    Eigen::VectorXd b = observe(solve_pressure(k, 3.0).p, plan);
    CHECK((a - b).norm() == 0.0);
}

TEST_CASE("misfit definition") {
    Grid2D g(8, 8);
    Rng rng(47);
    ScalarField k = random_field(g, rng);
    ObservationPlan plan = ObservationPlan::regular(4);

    SUBCASE("exact data gives zero") {
        ObservationSet obs;
        obs.plan = plan;
        obs.clean = forward(k, plan, 3.0);
        obs.noisy = obs.clean;
        obs.sigma = Eigen::VectorXd::Constant(obs.clean.size(), 0.1);
        CHECK(misfit(k, obs, 3.0) == doctest::Approx(0.0));
    }
    SUBCASE("one-sigma residual gives one half") {
        ObservationPlan single(std::vector<Point2>{{0.3, 0.4}});
        ObservationSet obs;
        obs.plan = single;
        obs.clean = forward(k, single, 3.0);
        obs.sigma = Eigen::VectorXd::Constant(1, 0.2);
        obs.noisy = obs.clean.array() - 0.2;
        CHECK(misfit(k, obs, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("matches hand-summed oracle") {
        ObservationSet obs;
        obs.plan = plan;
        obs.clean = forward(k, plan, 3.0);
        obs.sigma = Eigen::VectorXd::Constant(obs.clean.size(), 0.05);
        obs.noisy = obs.clean;
        for (int i = 0; i < obs.noisy.size(); ++i) obs.noisy[i] += 0.1 * rng.normal();
        const Eigen::VectorXd f = forward(k, plan, 3.0);
        double phi = 0;
        for (int i = 0; i < f.size(); ++i) {
            const double z = (f[i] - obs.noisy[i]) / obs.sigma[i];
            phi += 0.5 * z * z;
        }
        CHECK(misfit(k, obs, 3.0) == doctest::Approx(phi).epsilon(1e-12));
    }
}

TEST_CASE("adjoint gradient is zero at exact data") {
    Grid2D g(6, 6);
    Rng rng(53);
    ScalarField k = random_field(g, rng);
    ObservationPlan plan = ObservationPlan::regular(3);
    ObservationSet obs;
    obs.plan = plan;
    obs.clean = forward(k, plan, 3.0);
    obs.noisy = obs.clean;
    obs.sigma = Eigen::VectorXd::Constant(obs.clean.size(), 0.1);
    ScalarField gfield = adjoint_grad(k, obs, 3.0);
    CHECK(gfield.values.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("adjoint gradient matches central finite differences on a 5x5 grid") {
    Grid2D g(5, 5);
    Rng rng(59);
    ScalarField k = random_field(g, rng, 0.7);
    ObservationSet obs = synthetic_obs(g, random_field(g, rng, 0.7), 0.05, rng);
    ScalarField gfield = adjoint_grad(k, obs, 3.0);
    const double h = 1e-6;
    for (int c = 0; c < g.cells(); ++c) {
        ScalarField kp = k, km = k;
        kp.values[c] += h;
        km.values[c] -= h;
        const double fd = (misfit(kp, obs, 3.0) - misfit(km, obs, 3.0)) / (2 * h);
        const double rel =
            std::abs(fd - gfield.values[c]) / std::max({std::abs(fd), std::abs(gfield.values[c]), 1e-12});
        CHECK(rel <= 1e-6);
    }
}

TEST_CASE("adjoint gradient invariant under observation reordering") {
    Grid2D g(6, 6);
    Rng rng(61);
    ScalarField k = random_field(g, rng, 0.5);
    ObservationSet obs = synthetic_obs(g, random_field(g, rng, 0.5), 0.05, rng);

    // reverse the observation order consistently
    ObservationSet rev = obs;
    const Eigen::Index n = obs.size();
    std::vector<Point2> locs(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        locs[static_cast<std::size_t>(i)] = obs.plan.locations[static_cast<std::size_t>(n - 1 - i)];
        rev.clean[i] = obs.clean[n - 1 - i];
        rev.noisy[i] = obs.noisy[n - 1 - i];
        rev.sigma[i] = obs.sigma[n - 1 - i];
    }
    rev.plan = ObservationPlan(std::move(locs));
    ScalarField a = adjoint_grad(k, obs, 3.0);
    ScalarField b = adjoint_grad(k, rev, 3.0);
    CHECK((a.values - b.values).lpNorm<Eigen::Infinity>() < 1e-12);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "vidgp/grid_field.hpp"
#include "vidgp/textio.hpp"

using namespace vidgp;
namespace fs = std::filesystem;

namespace {
ScalarField random_field(const Grid2D& g, Rng& rng) {
    Eigen::VectorXd v(g.cells());
    for (int i = 0; i < g.cells(); ++i) v[i] = rng.normal();
    return ScalarField(g, std::move(v));
}
} // namespace

TEST_CASE("grid invariants") {
    CHECK_THROWS_AS(Grid2D(1, 4), DomainError);
    CHECK_THROWS_AS(Grid2D(4, 0), DomainError);
    Grid2D g(4, 8);
    CHECK(g.cells() == 32);
    CHECK(g.hx() == doctest::Approx(0.25));
    CHECK(g.cx(0) == doctest::Approx(0.125));
    CHECK(g.index(3, 0) == 3);
    CHECK(g.index(0, 1) == 4); // x1 fastest
}

TEST_CASE("observe constant field") {
    Grid2D g(8, 8);
    ObservationPlan plan = ObservationPlan::regular(3);
    Eigen::VectorXd v = observe(ScalarField::constant(g, 2.5), plan);
    REQUIRE(v.size() == 9);
    for (int i = 0; i < v.size(); ++i) CHECK(v[i] == doctest::Approx(2.5));
}

TEST_CASE("observe affine field exactly") {
    Grid2D g(64, 64);
    Eigen::VectorXd v(g.cells());
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) v[g.index(i, j)] = 1.0 - g.cx(i);
    ScalarField p(g, v);
    ObservationPlan single(std::vector<Point2>{{0.0625, 0.5}});
    CHECK(observe(p, single)[0] == doctest::Approx(0.9375).epsilon(1e-14));

    // bilinear interpolation reproduces any affine field, including near edges
    Rng rng(11);
    Eigen::VectorXd w(g.cells());
    const double a = 0.7, b = -1.3, c = 2.1;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) w[g.index(i, j)] = a + b * g.cx(i) + c * g.cy(j);
    ScalarField affine(g, w);
    for (int t = 0; t < 50; ++t) {
        const double x1 = rng.uniform(1e-3, 1 - 1e-3), x2 = rng.uniform(1e-3, 1 - 1e-3);
        ObservationPlan pl(std::vector<Point2>{{x1, x2}});
        CHECK(observe(affine, pl)[0] == doctest::Approx(a + b * x1 + c * x2).epsilon(1e-12));
    }
}

TEST_CASE("paper plan has 64 locations at the stated coordinates") {
    ObservationPlan plan = ObservationPlan::regular(8);
    REQUIRE(plan.size() == 64);
    CHECK(plan.locations[0].x1 == doctest::Approx(0.0625));
    CHECK(plan.locations[1].x1 == doctest::Approx(0.1875));
    CHECK(plan.locations[63].x2 == doctest::Approx(0.9375));
    Grid2D g(64, 64);
    Rng rng(3);
    CHECK(observe(random_field(g, rng), plan).size() == 64);
}

TEST_CASE("observe is linear in the field") {
    Grid2D g(16, 16);
    Rng rng(5);
    ObservationPlan plan = ObservationPlan::regular(5);
    for (int t = 0; t < 10; ++t) {
        ScalarField f = random_field(g, rng);
        ScalarField h = random_field(g, rng);
        const double a = rng.normal(), b = rng.normal();
        ScalarField combo(g, a * f.values + b * h.values);
        Eigen::VectorXd lhs = observe(combo, plan);
        Eigen::VectorXd rhs = a * observe(f, plan) + b * observe(h, plan);
        CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("observation plan validation") {
    CHECK_THROWS_AS(ObservationPlan(std::vector<Point2>{{0.0, 0.5}}), DomainError);
    CHECK_THROWS_AS(ObservationPlan(std::vector<Point2>{{0.5, 1.0}}), DomainError);
    CHECK_THROWS_AS(ObservationPlan(std::vector<Point2>{{0.5, 0.5}, {0.5, 0.5}}), DomainError);
}

TEST_CASE("add_noise basics") {
    Rng rng(17);
    Eigen::VectorXd clean(1);
    clean << 1.0;

    ObservationSet zero = add_noise(clean, 0.0, rng);
    CHECK(zero.noisy[0] == 1.0);
    CHECK(zero.sigma[0] == 1e-8);

    ObservationSet five = add_noise(clean, 0.05, rng);
    CHECK(five.sigma[0] == doctest::Approx(0.05));
}

TEST_CASE("add_noise normalized residuals have unit std (MC)") {
    Rng rng(99);
    const int n = 100000;
    ObservationSet obs = add_noise(Eigen::VectorXd::Ones(n), 0.05, rng);
    Eigen::VectorXd z = (obs.noisy - obs.clean).cwiseQuotient(obs.sigma);
    const double mean = z.mean();
    const double var = (z.array() - mean).square().sum() / (n - 1);
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("field file round-trip is bit exact") {
    Grid2D g(8, 8);
    Rng rng(23);
    ScalarField f = random_field(g, rng);
    ScalarField back = field_from_string(field_to_string(f));
    CHECK(back.grid == f.grid);
    for (int i = 0; i < g.cells(); ++i) CHECK(back.values[i] == f.values[i]);
}

TEST_CASE("field parse errors") {
    CHECK_THROWS_AS(field_from_string("FIELD v1 2 2\n1 2 3\n"), ParseError);          // too short
    CHECK_THROWS_AS(field_from_string("FIELD v1 2 2\n1 2 3 4 5\n"), ParseError);      // trailing
    CHECK_THROWS_AS(field_from_string("FIELD v2 2 2\n1 2 3 4\n"), ParseError);        // version
    CHECK_THROWS_AS(field_from_string("FIELD v1 2 2\n1 2 nan 4\n"), ParseError);      // non-finite
    CHECK_THROWS_AS(field_from_string("GRID v1 2 2\n1 2 3 4\n"), ParseError);         // magic
    CHECK_THROWS_AS(field_from_string("FIELD v1 2 2\n1 2 x 4\n"), ParseError);        // token
}

TEST_CASE("dataset directory round-trip") {
    const fs::path dir = fs::temp_directory_path() / "vidgp_test_dataset";
    fs::remove_all(dir);
    Grid2D g(4, 4);
    Rng rng(31);
    FieldDataset ds;
    ds.grid = g;
    for (int i = 0; i < 3; ++i) ds.fields.push_back(random_field(g, rng).values);
    ds.metadata.emplace_back("generator", "grf");
    ds.metadata.emplace_back("sigma_k2", "0.5");
    write_dataset(dir.string(), ds);
    FieldDataset back = read_dataset(dir.string());
    REQUIRE(back.size() == 3);
    CHECK(back.grid == g);
    CHECK(*back.find_meta("generator") == "grf");
    for (int i = 0; i < 3; ++i) CHECK((back.fields[i] - ds.fields[i]).norm() == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("observation file round-trip") {
    const fs::path path = fs::temp_directory_path() / "vidgp_test_obs.txt";
    Grid2D g(8, 8);
    Rng rng(41);
    ScalarField p = random_field(g, rng);
    ObservationSet obs = make_observations(p, ObservationPlan::regular(4), 0.05, rng);
    write_observations(path.string(), obs);
    ObservationSet back = read_observations(path.string());
    CHECK(back.noise_level == obs.noise_level);
    CHECK((back.clean - obs.clean).norm() == 0.0);
    CHECK((back.noisy - obs.noisy).norm() == 0.0);
    CHECK((back.sigma - obs.sigma).norm() == 0.0);
    CHECK(back.plan.locations[3].x1 == obs.plan.locations[3].x1);
    fs::remove(path);
}

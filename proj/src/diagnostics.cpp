#include "vidgp/diagnostics.hpp"

#include <cmath>

#include "vidgp/textio.hpp"

namespace vidgp::diag {

double cos_alpha(const std::vector<GradientPair>& pairs) {
    if (pairs.empty()) throw DomainError("cos_alpha: no gradient pairs");
    double acc = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const GradientPair& p = pairs[i];
        if (p.g_nn.size() != p.g_a.size())
            throw ShapeError("cos_alpha: length mismatch at pair " + std::to_string(i));
        const double nn = p.g_nn.norm(), na = p.g_a.norm();
        if (nn == 0.0 || na == 0.0)
            throw DomainError("cos_alpha: zero-norm gradient at pair " + std::to_string(i));
        acc += p.g_nn.dot(p.g_a) / (nn * na);
    }
    return acc / static_cast<double>(pairs.size());
}

std::vector<StudyRow> gradient_agreement_study(
    const std::vector<std::pair<int, const vi::MisfitBackend*>>& surrogates,
    const vi::MisfitBackend& adjoint, const vi::Generator& gen, int n_pairs, Rng& rng) {
    if (n_pairs < 1) throw DomainError("gradient_agreement_study: n_pairs must be positive");
    const Eigen::Index h = gen.latent_dim();

    // shared lambda samples and eps draws across every backend (M_s = 1)
    std::vector<vi::VariationalParams> lambdas;
    std::vector<Eigen::MatrixXd> eps_draws;
    lambdas.reserve(static_cast<std::size_t>(n_pairs));
    eps_draws.reserve(static_cast<std::size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        vi::VariationalParams lam{rng.normal_vector(h), rng.normal_vector(h)};
        lambdas.push_back(std::move(lam));
        eps_draws.push_back(rng.normal_matrix(h, 1));
    }

    std::vector<vi::VIGradient> ref;
    ref.reserve(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i)
        ref.push_back(vi::grad_elbo_vi(lambdas[i], adjoint, gen, eps_draws[i],
                                       vi::EntropyMode::ClosedForm));

    std::vector<StudyRow> rows;
    for (const auto& [size, backend] : surrogates) {
        std::vector<GradientPair> mu_pairs, lv_pairs;
        mu_pairs.reserve(lambdas.size());
        lv_pairs.reserve(lambdas.size());
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
            const vi::VIGradient g = vi::grad_elbo_vi(lambdas[i], *backend, gen, eps_draws[i],
                                                      vi::EntropyMode::ClosedForm);
            mu_pairs.push_back({g.d_mu, ref[i].d_mu});
            lv_pairs.push_back({g.d_logvar, ref[i].d_logvar});
        }
        rows.push_back({"mu", size, cos_alpha(mu_pairs), n_pairs});
        rows.push_back({"logvar", size, cos_alpha(lv_pairs), n_pairs});
    }
    return rows;
}

PosteriorSummary posterior_stats(const std::vector<ScalarField>& samples,
                                 const ScalarField* truth) {
    if (samples.empty()) throw DomainError("posterior_stats: no samples");
    const Grid2D grid = samples.front().grid;
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (!(samples[i].grid == grid))
            throw ShapeError("posterior_stats: sample " + std::to_string(i) +
                             " is on a different grid");
    const double n = static_cast<double>(samples.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(grid.cells());
    for (const ScalarField& s : samples) mean += s.values;
    mean /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(grid.cells());
    for (const ScalarField& s : samples) var += (s.values - mean).cwiseAbs2();
    var /= n; // population convention

    PosteriorSummary out{ScalarField(grid, mean), ScalarField(grid, var.cwiseSqrt())};
    if (truth) {
        if (!(truth->grid == grid)) throw ShapeError("posterior_stats: truth grid mismatch");
        out.has_truth = true;
        const double denom = truth->values.norm();
        out.rel_l2 = (mean - truth->values).norm() / (denom > 0 ? denom : 1.0);
    }
    return out;
}

std::string study_to_csv(const std::vector<StudyRow>& rows) {
    CsvWriter csv({"block", "dataset_size", "cos_alpha", "n_pairs"});
    for (const StudyRow& r : rows)
        csv.row({r.block, std::to_string(r.dataset_size), fmt_full(r.cos_alpha),
                 std::to_string(r.n_pairs)});
    return csv.str();
}

} // namespace vidgp::diag

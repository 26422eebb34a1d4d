#pragma once

#include <string>
#include <vector>

#include "vidgp/grid_field.hpp"
#include "vidgp/vi_dgp.hpp"

namespace vidgp::diag {

/// A surrogate-computed and an adjoint-computed gradient of the same quantity.
struct GradientPair {
    Eigen::VectorXd g_nn;
    Eigen::VectorXd g_a;
};

/// Mean cosine similarity (1/N) sum (g_nn . g_a) / (|g_nn| |g_a|), in [-1, 1].
double cos_alpha(const std::vector<GradientPair>& pairs);

struct StudyRow {
    std::string block; // "mu" or "logvar"
    int dataset_size = 0;
    double cos_alpha = 0;
    int n_pairs = 0;
};

/// Samples n_pairs variational parameters (mu and logvar entries i.i.d.
/// N(0,1)), computes the stochastic lower-bound gradient with one shared eps
/// draw (M_s = 1) under the adjoint backend and each surrogate, and reports
/// cos alpha per gradient block and per surrogate. Surrogates are labeled by
/// their training-set size; size 0 conventionally marks the wrapped-adjoint
/// self-test.
std::vector<StudyRow> gradient_agreement_study(
    const std::vector<std::pair<int, const vi::MisfitBackend*>>& surrogates,
    const vi::MisfitBackend& adjoint, const vi::Generator& gen, int n_pairs, Rng& rng);

struct PosteriorSummary {
    ScalarField mean;
    ScalarField std; // population standard deviation, cellwise
    bool has_truth = false;
    double rel_l2 = 0; // ||mean - truth|| / ||truth|| when truth supplied
};

PosteriorSummary posterior_stats(const std::vector<ScalarField>& samples,
                                 const ScalarField* truth = nullptr);

std::string study_to_csv(const std::vector<StudyRow>& rows);

} // namespace vidgp::diag

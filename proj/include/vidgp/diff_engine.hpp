#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vidgp/param_vector.hpp"
#include "vidgp/tape.hpp"

namespace vidgp::ad {

/// A pure scalar objective over a ParamVector. `build` receives one leaf Var
/// per parameter block (in block order) plus the auxiliary inputs and must
/// return a 1x1 output assembled from tape primitives. Evaluation is
/// deterministic and never mutates its inputs.
struct DiffProgram {
    std::string name;
    std::function<Var(Tape&, const std::vector<Var>&, const std::vector<Mat>&)> build;
};

struct ValueGrad {
    double value = 0;
    ParamVector grad;
};

/// Exact reverse-mode value and gradient of the program at `params`.
ValueGrad value_and_grad(const DiffProgram& prog, const ParamVector& params,
                         const std::vector<Mat>& aux);

/// Forward value only (no adjoint pass).
double value_only(const DiffProgram& prog, const ParamVector& params, const std::vector<Mat>& aux);

/// Central finite differences, component step h * max(1, |p_i|).
ParamVector finite_diff_grad(const DiffProgram& prog, const ParamVector& params,
                             const std::vector<Mat>& aux, double h);

struct GradCheckReport {
    double max_rel_err = 0;
    Eigen::Index worst_index = -1;
    bool pass = false;
};

/// Compares reverse-mode and finite-difference gradients; relative error uses
/// max(|a|, |b|, 1e-12) in the denominator.
GradCheckReport grad_check(const DiffProgram& prog, const ParamVector& params,
                           const std::vector<Mat>& aux, double tol, double h = 1e-6);

// ---- optimizers -------------------------------------------------------------------

/// Plain stochastic gradient step: params +/- lr * grad.
class Sgd {
public:
    Sgd(double lr, bool ascent) : lr_(lr), ascent_(ascent) {}
    void step(ParamVector& params, const ParamVector& grad) const {
        if (!params.same_shape(grad)) throw ShapeError("Sgd::step: gradient shape mismatch");
        params.data() += (ascent_ ? lr_ : -lr_) * grad.data();
    }
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    double lr_;
    bool ascent_;
};

/// Adam with bias correction; beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
public:
    Adam(double lr, bool ascent, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), ascent_(ascent), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(ParamVector& params, const ParamVector& grad) {
        if (!params.same_shape(grad)) throw ShapeError("Adam::step: gradient shape mismatch");
        if (m_.size() != params.size()) {
            m_ = Eigen::VectorXd::Zero(params.size());
            v_ = Eigen::VectorXd::Zero(params.size());
            t_ = 0;
        }
        ++t_;
        m_ = b1_ * m_ + (1 - b1_) * grad.data();
        v_ = b2_ * v_ + (1 - b2_) * grad.data().cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        const Eigen::VectorXd update =
            (m_ / c1).array() / ((v_ / c2).array().sqrt() + eps_);
        params.data() += (ascent_ ? lr_ : -lr_) * update.matrix();
    }
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    double lr_;
    bool ascent_;
    double b1_, b2_, eps_;
    Eigen::VectorXd m_, v_;
    long t_ = 0;
};

} // namespace vidgp::ad

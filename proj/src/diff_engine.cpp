#include "vidgp/diff_engine.hpp"

#include <cmath>

namespace vidgp::ad {

namespace {

Var build_with_leaves(const DiffProgram& prog, Tape& tape, const ParamVector& params,
                      const std::vector<Mat>& aux, std::vector<Var>& leaves) {
    leaves.clear();
    leaves.reserve(params.block_count());
    for (std::size_t b = 0; b < params.block_count(); ++b)
        leaves.push_back(tape.leaf(params.block(b)));
    Var out = prog.build(tape, leaves, aux);
    if (tape.value(out).rows() != 1 || tape.value(out).cols() != 1)
        throw ShapeError("program '" + prog.name + "' did not produce a scalar output");
    return out;
}

} // namespace

ValueGrad value_and_grad(const DiffProgram& prog, const ParamVector& params,
                         const std::vector<Mat>& aux) {
    Tape tape;
    std::vector<Var> leaves;
    Var out = build_with_leaves(prog, tape, params, aux, leaves);
    tape.backward(out);
    ValueGrad vg;
    vg.value = tape.scalar(out);
    vg.grad = params.zeros_like();
    for (std::size_t b = 0; b < params.block_count(); ++b)
        vg.grad.block(b) = tape.grad(leaves[b]).col(0);
    return vg;
}

double value_only(const DiffProgram& prog, const ParamVector& params, const std::vector<Mat>& aux) {
    Tape tape;
    std::vector<Var> leaves;
    Var out = build_with_leaves(prog, tape, params, aux, leaves);
    return tape.scalar(out);
}

ParamVector finite_diff_grad(const DiffProgram& prog, const ParamVector& params,
                             const std::vector<Mat>& aux, double h) {
    if (!(h > 0)) throw DomainError("finite_diff_grad: h must be positive");
    ParamVector grad = params.zeros_like();
    ParamVector work = params;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double p0 = params.data()[i];
        const double step = h * std::max(1.0, std::abs(p0));
        work.data()[i] = p0 + step;
        const double fp = value_only(prog, work, aux);
        work.data()[i] = p0 - step;
        const double fm = value_only(prog, work, aux);
        work.data()[i] = p0;
        grad.data()[i] = (fp - fm) / (2 * step);
    }
    return grad;
}

GradCheckReport grad_check(const DiffProgram& prog, const ParamVector& params,
                           const std::vector<Mat>& aux, double tol, double h) {
    const ValueGrad vg = value_and_grad(prog, params, aux);
    const ParamVector fd = finite_diff_grad(prog, params, aux, h);
    GradCheckReport rep;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double a = vg.grad.data()[i];
        const double b = fd.data()[i];
        const double rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_index = i;
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

} // namespace vidgp::ad

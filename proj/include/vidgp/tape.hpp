#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "vidgp/errors.hpp"

namespace vidgp::ad {

using Mat = Eigen::MatrixXd;

/// Handle to a tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Eager reverse-mode tape over matrix-valued nodes. Columns carry the batch
/// dimension; a "vector" is a one-column matrix and a scalar is 1x1. Values
/// are computed at construction; backward() runs the recorded adjoint steps in
/// reverse order. Every intermediate is checked for finiteness and failures
/// name the primitive that produced them.
class Tape {
public:
    // ---- graph construction ----------------------------------------------------

    /// Constant node: participates in forward values only.
    Var input(Mat v) { return push("input", std::move(v), false, {}); }

    /// Differentiable leaf (parameter block or field being differentiated).
    Var leaf(Mat v) { return push("leaf", std::move(v), true, {}); }

    /// y = reshape(w, rows, cols) * x + b (b broadcast over columns).
    /// w is a flat (rows*cols)-vector, column-major.
    Var affine(Var w, Var b, Var x, Eigen::Index rows, Eigen::Index cols);

    Var relu(Var x);
    Var sigmoid(Var x);
    Var exp_(Var x);
    Var log_(Var x);
    Var square(Var x);
    Var recip(Var x); // 1/x, rejects zeros

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b); // elementwise
    Var scale(Var x, double c);
    Var add_const(Var x, double c);

    Var sum(Var x);  // -> 1x1
    Var mean(Var x); // -> 1x1

    /// col (n x 1) broadcast against x (n x B).
    Var bcast_add(Var col, Var x);
    Var bcast_mul(Var col, Var x);

    /// y = S * x column-wise for a fixed sparse operator S (stencil, boundary
    /// selection, observation matrix). `what` names the operator in errors.
    Var apply_linear(std::shared_ptr<const Eigen::SparseMatrix<double>> S, Var x,
                     const std::string& what = "linear");

    Var slice_rows(Var x, Eigen::Index r0, Eigen::Index n);

    /// 3x3 same-padding convolution; x packs cin images of h*w pixels per
    /// column (pixel (ix, iy) at iy*w+ix), w packs cout*cin*9 kernel weights,
    /// b has cout entries.
    Var conv3x3(Var w, Var b, Var x, int cin, int cout, int h, int wd);
    Var avgpool2(Var x, int c, int h, int wd);
    Var upsample2(Var x, int c, int h, int wd);

    // ---- evaluation ------------------------------------------------------------

    const Mat& value(Var v) const { return node(v).value; }
    double scalar(Var v) const;

    /// Reverse pass from `out` seeded with dL/dout = seed (same shape as out).
    void backward(Var out, const Mat& seed);
    /// Reverse pass from a 1x1 output seeded with 1.
    void backward(Var out) { backward(out, Mat::Ones(1, 1)); }

    /// Accumulated adjoint of a differentiable node (zeros if untouched).
    Mat grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        bool grad_alloc = false;
        std::function<void(Tape&)> back;
    };

    Node& node(Var v) {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw ShapeError("invalid tape handle");
        return nodes_[static_cast<std::size_t>(v.id)];
    }
    const Node& node(Var v) const {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw ShapeError("invalid tape handle");
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    Var push(const char* op, Mat value, bool needs_grad, std::function<void(Tape&)> back) {
        if (!value.allFinite())
            throw NumericalError(std::string("non-finite intermediate produced by primitive '") +
                                 op + "'");
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    bool any_grad(std::initializer_list<Var> vs) const {
        for (Var v : vs)
            if (node(v).needs_grad) return true;
        return false;
    }

    Mat& ensure_grad(Var v) {
        Node& n = node(v);
        if (!n.grad_alloc) {
            n.grad = Mat::Zero(n.value.rows(), n.value.cols());
            n.grad_alloc = true;
        }
        return n.grad;
    }

    void check_same_shape(const char* op, const Mat& a, const Mat& b) const {
        if (a.rows() != b.rows() || a.cols() != b.cols())
            throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                             "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()));
    }

    std::vector<Node> nodes_;
};

} // namespace vidgp::ad

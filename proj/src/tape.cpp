#include "vidgp/tape.hpp"

#include <cmath>

namespace vidgp::ad {

Var Tape::affine(Var w, Var b, Var x, Eigen::Index rows, Eigen::Index cols) {
    const Mat& wv = node(w).value;
    const Mat& bv = node(b).value;
    const Mat& xv = node(x).value;
    if (wv.cols() != 1 || wv.rows() != rows * cols)
        throw ShapeError("affine: weight block must be a flat (rows*cols)-vector, got " +
                         std::to_string(wv.rows()) + "x" + std::to_string(wv.cols()) +
                         " for rows*cols = " + std::to_string(rows * cols));
    if (bv.cols() != 1 || bv.rows() != rows)
        throw ShapeError("affine: bias must be a " + std::to_string(rows) + "-vector");
    if (xv.rows() != cols)
        throw ShapeError("affine: input has " + std::to_string(xv.rows()) + " rows, expected " +
                         std::to_string(cols));
    const Eigen::Map<const Mat> W(wv.data(), rows, cols);
    Mat y = W * xv;
    y.colwise() += bv.col(0);

    const bool ng = any_grad({w, b, x});
    Var out = push("affine", std::move(y), ng, {});
    if (ng) {
        node(out).back = [out, w, b, x, rows, cols](Tape& t) {
            const Mat& gy = t.node(out).grad;
            const Mat& xv2 = t.node(x).value;
            const Eigen::Map<const Mat> W2(t.node(w).value.data(), rows, cols);
            if (t.node(w).needs_grad) {
                Mat& gw = t.ensure_grad(w);
                Eigen::Map<Mat> gwm(gw.data(), rows, cols);
                gwm.noalias() += gy * xv2.transpose();
            }
            if (t.node(b).needs_grad) t.ensure_grad(b).col(0) += gy.rowwise().sum();
            if (t.node(x).needs_grad) t.ensure_grad(x).noalias() += W2.transpose() * gy;
        };
    }
    return out;
}

Var Tape::relu(Var x) {
    const Mat& xv = node(x).value;
    Mat y = xv.cwiseMax(0.0);
    const bool ng = node(x).needs_grad;
    Var out = push("relu", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x](Tape& t) {
            // subgradient at exactly 0 is fixed to 0
            const Mat mask = (t.node(x).value.array() > 0.0).cast<double>();
            t.ensure_grad(x).array() += t.node(out).grad.array() * mask.array();
        };
    return out;
}

Var Tape::sigmoid(Var x) {
    Mat y = (1.0 / (1.0 + (-node(x).value.array()).exp())).matrix();
    const bool ng = node(x).needs_grad;
    Var out = push("sigmoid", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x](Tape& t) {
            const auto& s = t.node(out).value.array();
            t.ensure_grad(x).array() += t.node(out).grad.array() * s * (1.0 - s);
        };
    return out;
}

Var Tape::exp_(Var x) {
    Mat y = node(x).value.array().exp().matrix();
    const bool ng = node(x).needs_grad;
    Var out = push("exp", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x](Tape& t) {
            t.ensure_grad(x).array() += t.node(out).grad.array() * t.node(out).value.array();
        };
    return out;
}

Var Tape::log_(Var x) {
    if ((node(x).value.array() <= 0.0).any())
        throw NumericalError("non-finite intermediate produced by primitive 'log' (non-positive input)");
    Mat y = node(x).value.array().log().matrix();
    const bool ng = node(x).needs_grad;
    Var out = push("log", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x](Tape& t) {
            t.ensure_grad(x).array() += t.node(out).grad.array() / t.node(x).value.array();
        };
    return out;
}

Var Tape::recip(Var x) {
    if ((node(x).value.array() == 0.0).any())
        throw NumericalError("non-finite intermediate produced by primitive 'recip' (zero input)");
    Mat y = node(x).value.cwiseInverse();
    const bool ng = node(x).needs_grad;
    Var out = push("recip", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x](Tape& t) {
            const auto& yv = t.node(out).value.array();
            t.ensure_grad(x).array() -= t.node(out).grad.array() * yv * yv;
        };
    return out;
}

Var Tape::square(Var x) {
    Mat y = node(x).value.array().square().matrix();
    const bool ng = node(x).needs_grad;
    Var out = push("square", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x](Tape& t) {
            t.ensure_grad(x).array() += 2.0 * t.node(out).grad.array() * t.node(x).value.array();
        };
    return out;
}

Var Tape::add(Var a, Var b) {
    check_same_shape("add", node(a).value, node(b).value);
    Mat y = node(a).value + node(b).value;
    const bool ng = any_grad({a, b});
    Var out = push("add", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, a, b](Tape& t) {
            if (t.node(a).needs_grad) t.ensure_grad(a) += t.node(out).grad;
            if (t.node(b).needs_grad) t.ensure_grad(b) += t.node(out).grad;
        };
    return out;
}

Var Tape::sub(Var a, Var b) {
    check_same_shape("sub", node(a).value, node(b).value);
    Mat y = node(a).value - node(b).value;
    const bool ng = any_grad({a, b});
    Var out = push("sub", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, a, b](Tape& t) {
            if (t.node(a).needs_grad) t.ensure_grad(a) += t.node(out).grad;
            if (t.node(b).needs_grad) t.ensure_grad(b) -= t.node(out).grad;
        };
    return out;
}

Var Tape::mul(Var a, Var b) {
    check_same_shape("mul", node(a).value, node(b).value);
    Mat y = node(a).value.cwiseProduct(node(b).value);
    const bool ng = any_grad({a, b});
    Var out = push("mul", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, a, b](Tape& t) {
            if (t.node(a).needs_grad)
                t.ensure_grad(a).array() += t.node(out).grad.array() * t.node(b).value.array();
            if (t.node(b).needs_grad)
                t.ensure_grad(b).array() += t.node(out).grad.array() * t.node(a).value.array();
        };
    return out;
}

Var Tape::scale(Var x, double c) {
    Mat y = node(x).value * c;
    const bool ng = node(x).needs_grad;
    Var out = push("scale", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x, c](Tape& t) { t.ensure_grad(x) += c * t.node(out).grad; };
    return out;
}

Var Tape::add_const(Var x, double c) {
    Mat y = node(x).value.array() + c;
    const bool ng = node(x).needs_grad;
    Var out = push("add_const", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x](Tape& t) { t.ensure_grad(x) += t.node(out).grad; };
    return out;
}

Var Tape::sum(Var x) {
    Mat y(1, 1);
    y(0, 0) = node(x).value.sum();
    const bool ng = node(x).needs_grad;
    Var out = push("sum", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x](Tape& t) {
            t.ensure_grad(x).array() += t.node(out).grad(0, 0);
        };
    return out;
}

Var Tape::mean(Var x) {
    const double n = static_cast<double>(node(x).value.size());
    Mat y(1, 1);
    y(0, 0) = node(x).value.sum() / n;
    const bool ng = node(x).needs_grad;
    Var out = push("mean", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x, n](Tape& t) {
            t.ensure_grad(x).array() += t.node(out).grad(0, 0) / n;
        };
    return out;
}

Var Tape::bcast_add(Var col, Var x) {
    const Mat& cv = node(col).value;
    const Mat& xv = node(x).value;
    if (cv.cols() != 1 || cv.rows() != xv.rows())
        throw ShapeError("bcast_add: column operand must be " + std::to_string(xv.rows()) + "x1");
    Mat y = xv;
    y.colwise() += cv.col(0);
    const bool ng = any_grad({col, x});
    Var out = push("bcast_add", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, col, x](Tape& t) {
            if (t.node(col).needs_grad) t.ensure_grad(col).col(0) += t.node(out).grad.rowwise().sum();
            if (t.node(x).needs_grad) t.ensure_grad(x) += t.node(out).grad;
        };
    return out;
}

Var Tape::bcast_mul(Var col, Var x) {
    const Mat& cv = node(col).value;
    const Mat& xv = node(x).value;
    if (cv.cols() != 1 || cv.rows() != xv.rows())
        throw ShapeError("bcast_mul: column operand must be " + std::to_string(xv.rows()) + "x1");
    Mat y = xv.array().colwise() * cv.col(0).array();
    const bool ng = any_grad({col, x});
    Var out = push("bcast_mul", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, col, x](Tape& t) {
            const Mat& gy = t.node(out).grad;
            if (t.node(col).needs_grad)
                t.ensure_grad(col).col(0) +=
                    (gy.array() * t.node(x).value.array()).rowwise().sum().matrix();
            if (t.node(x).needs_grad)
                t.ensure_grad(x).array() += gy.array().colwise() * t.node(col).value.col(0).array();
        };
    return out;
}

Var Tape::apply_linear(std::shared_ptr<const Eigen::SparseMatrix<double>> S, Var x,
                       const std::string& what) {
    const Mat& xv = node(x).value;
    if (S->cols() != xv.rows())
        throw ShapeError("apply_linear(" + what + "): operator is " + std::to_string(S->rows()) +
                         "x" + std::to_string(S->cols()) + " but input has " +
                         std::to_string(xv.rows()) + " rows");
    Mat y = (*S) * xv;
    const bool ng = node(x).needs_grad;
    Var out = push("apply_linear", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x, S](Tape& t) {
            t.ensure_grad(x).noalias() += S->transpose() * t.node(out).grad;
        };
    return out;
}

Var Tape::slice_rows(Var x, Eigen::Index r0, Eigen::Index n) {
    const Mat& xv = node(x).value;
    if (r0 < 0 || n <= 0 || r0 + n > xv.rows())
        throw ShapeError("slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r0 + n) +
                         ") out of range for " + std::to_string(xv.rows()) + " rows");
    Mat y = xv.middleRows(r0, n);
    const bool ng = node(x).needs_grad;
    Var out = push("slice_rows", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x, r0, n](Tape& t) {
            t.ensure_grad(x).middleRows(r0, n) += t.node(out).grad;
        };
    return out;
}

namespace {

inline double cpx(const Mat& m, int c, int h, int wd, int ci, int y, int x, int col) {
    (void)c;
    if (y < 0 || y >= h || x < 0 || x >= wd) return 0.0; // zero padding
    return m((ci * h + y) * wd + x, col);
}

// patch matrix: rows = cin*9 taps, cols = pixel-major (batch outer, pixel inner)
Mat im2col3x3(const Mat& xv, int cin, int h, int wd) {
    const Eigen::Index B = xv.cols();
    Mat col(static_cast<Eigen::Index>(cin) * 9, static_cast<Eigen::Index>(h) * wd * B);
    for (Eigen::Index bb = 0; bb < B; ++bb)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < wd; ++ix) {
                const Eigen::Index c = bb * h * wd + static_cast<Eigen::Index>(iy) * wd + ix;
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx)
                            col((ci * 3 + ky) * 3 + kx, c) =
                                cpx(xv, cin, h, wd, ci, iy + ky - 1, ix + kx - 1,
                                    static_cast<int>(bb));
            }
    return col;
}

void col2im3x3(const Mat& gcol, Mat& gx, int cin, int h, int wd) {
    const Eigen::Index B = gx.cols();
    for (Eigen::Index bb = 0; bb < B; ++bb)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < wd; ++ix) {
                const Eigen::Index c = bb * h * wd + static_cast<Eigen::Index>(iy) * wd + ix;
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = iy + ky - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = ix + kx - 1;
                            if (sx < 0 || sx >= wd) continue;
                            gx((ci * h + sy) * wd + sx, bb) += gcol((ci * 3 + ky) * 3 + kx, c);
                        }
                    }
            }
}

} // namespace

Var Tape::conv3x3(Var w, Var b, Var x, int cin, int cout, int h, int wd) {
    const Mat& wv = node(w).value;
    const Mat& bv = node(b).value;
    const Mat& xv = node(x).value;
    if (wv.rows() != static_cast<Eigen::Index>(cout) * cin * 9 || wv.cols() != 1)
        throw ShapeError("conv3x3: weight block must be cout*cin*9 flat");
    if (bv.rows() != cout || bv.cols() != 1) throw ShapeError("conv3x3: bias must have cout entries");
    if (xv.rows() != static_cast<Eigen::Index>(cin) * h * wd)
        throw ShapeError("conv3x3: input rows != cin*h*w");
    const Eigen::Index B = xv.cols();
    const Eigen::Index px = static_cast<Eigen::Index>(h) * wd;

    // weight rows must be contiguous per output channel: W(co, ci*9 + 3*ky + kx)
    Eigen::Map<const Mat> kernel(wv.data(), static_cast<Eigen::Index>(cin) * 9, cout);
    const Mat col = im2col3x3(xv, cin, h, wd);
    Mat flat = kernel.transpose() * col; // cout x (px*B)
    Mat y(static_cast<Eigen::Index>(cout) * px, B);
    for (Eigen::Index bb = 0; bb < B; ++bb)
        for (int co = 0; co < cout; ++co)
            y.col(bb).segment(static_cast<Eigen::Index>(co) * px, px) =
                flat.row(co).segment(bb * px, px).transpose() + Mat::Constant(px, 1, bv(co, 0));

    const bool ng = any_grad({w, b, x});
    Var out = push("conv3x3", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, w, b, x, cin, cout, h, wd, px](Tape& t) {
            const Mat& gy = t.node(out).grad;
            const Eigen::Index B2 = gy.cols();
            Mat gflat(cout, px * B2);
            for (Eigen::Index bb = 0; bb < B2; ++bb)
                for (int co = 0; co < cout; ++co)
                    gflat.row(co).segment(bb * px, px) =
                        gy.col(bb).segment(static_cast<Eigen::Index>(co) * px, px).transpose();
            if (t.node(b).needs_grad) t.ensure_grad(b).col(0) += gflat.rowwise().sum();
            if (t.node(w).needs_grad) {
                const Mat col2 = im2col3x3(t.node(x).value, cin, h, wd);
                Mat gk = col2 * gflat.transpose(); // (cin*9) x cout
                Eigen::Map<Mat> gw(t.ensure_grad(w).data(), static_cast<Eigen::Index>(cin) * 9,
                                   cout);
                gw += gk;
            }
            if (t.node(x).needs_grad) {
                const Eigen::Map<const Mat> kernel2(t.node(w).value.data(),
                                                    static_cast<Eigen::Index>(cin) * 9, cout);
                Mat gcol = kernel2 * gflat; // (cin*9) x (px*B)
                col2im3x3(gcol, t.ensure_grad(x), cin, h, wd);
            }
        };
    return out;
}

Var Tape::avgpool2(Var x, int c, int h, int wd) {
    const Mat& xv = node(x).value;
    if (h % 2 || wd % 2) throw ShapeError("avgpool2 requires even height and width");
    if (xv.rows() != static_cast<Eigen::Index>(c) * h * wd)
        throw ShapeError("avgpool2: input rows != c*h*w");
    const int oh = h / 2, ow = wd / 2;
    const Eigen::Index B = xv.cols();
    Mat y(static_cast<Eigen::Index>(c) * oh * ow, B);
    for (Eigen::Index col = 0; col < B; ++col)
        for (int ci = 0; ci < c; ++ci)
            for (int iy = 0; iy < oh; ++iy)
                for (int ix = 0; ix < ow; ++ix)
                    y((ci * oh + iy) * ow + ix, col) =
                        0.25 * (cpx(xv, c, h, wd, ci, 2 * iy, 2 * ix, static_cast<int>(col)) +
                                cpx(xv, c, h, wd, ci, 2 * iy, 2 * ix + 1, static_cast<int>(col)) +
                                cpx(xv, c, h, wd, ci, 2 * iy + 1, 2 * ix, static_cast<int>(col)) +
                                cpx(xv, c, h, wd, ci, 2 * iy + 1, 2 * ix + 1, static_cast<int>(col)));
    const bool ng = node(x).needs_grad;
    Var out = push("avgpool2", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x, c, h, wd](Tape& t) {
            const Mat& gy = t.node(out).grad;
            Mat& gx = t.ensure_grad(x);
            const int oh2 = h / 2, ow2 = wd / 2;
            for (Eigen::Index col = 0; col < gy.cols(); ++col)
                for (int ci = 0; ci < c; ++ci)
                    for (int iy = 0; iy < oh2; ++iy)
                        for (int ix = 0; ix < ow2; ++ix) {
                            const double g = 0.25 * gy((ci * oh2 + iy) * ow2 + ix, col);
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx)
                                    px(gx, c, h, wd, ci, 2 * iy + dy, 2 * ix + dx,
                                       static_cast<int>(col)) += g;
                        }
        };
    return out;
}

Var Tape::upsample2(Var x, int c, int h, int wd) {
    const Mat& xv = node(x).value;
    if (xv.rows() != static_cast<Eigen::Index>(c) * h * wd)
        throw ShapeError("upsample2: input rows != c*h*w");
    const int oh = 2 * h, ow = 2 * wd;
    const Eigen::Index B = xv.cols();
    Mat y(static_cast<Eigen::Index>(c) * oh * ow, B);
    for (Eigen::Index col = 0; col < B; ++col)
        for (int ci = 0; ci < c; ++ci)
            for (int iy = 0; iy < oh; ++iy)
                for (int ix = 0; ix < ow; ++ix)
                    y((ci * oh + iy) * ow + ix, col) =
                        cpx(xv, c, h, wd, ci, iy / 2, ix / 2, static_cast<int>(col));
    const bool ng = node(x).needs_grad;
    Var out = push("upsample2", std::move(y), ng, {});
    if (ng)
        node(out).back = [out, x, c, h, wd](Tape& t) {
            const Mat& gy = t.node(out).grad;
            Mat& gx = t.ensure_grad(x);
            const int oh2 = 2 * h, ow2 = 2 * wd;
            for (Eigen::Index col = 0; col < gy.cols(); ++col)
                for (int ci = 0; ci < c; ++ci)
                    for (int iy = 0; iy < oh2; ++iy)
                        for (int ix = 0; ix < ow2; ++ix)
                            px(gx, c, h, wd, ci, iy / 2, ix / 2, static_cast<int>(col)) +=
                                gy((ci * oh2 + iy) * ow2 + ix, col);
        };
    return out;
}

double Tape::scalar(Var v) const {
    const Mat& m = node(v).value;
    if (m.rows() != 1 || m.cols() != 1)
        throw ShapeError("scalar() called on a " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " node");
    return m(0, 0);
}

void Tape::backward(Var out, const Mat& seed) {
    Node& o = node(out);
    check_same_shape("backward seed", o.value, seed);
    if (!o.needs_grad) return; // output does not depend on any leaf
    ensure_grad(out) = seed;
    for (int id = out.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad_alloc && n.back) n.back(*this);
    }
}

Mat Tape::grad(Var v) const {
    const Node& n = node(v);
    if (!n.grad_alloc) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

} // namespace vidgp::ad

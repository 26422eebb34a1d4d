#include "vidgp/pc_surrogate.hpp"

#include <cmath>
#include <map>

#include "vidgp/textio.hpp"

namespace vidgp::pcs {

using ad::Tape;
using ad::Var;

void SurrogateConfig::validate() const {
    if (nx < 4 || ny < 4) throw DomainError("SurrogateConfig: grid must be at least 4x4");
    if (!(gamma > 0)) throw DomainError("SurrogateConfig: gamma must be positive");
    if (epochs < 1 || batch < 1) throw DomainError("SurrogateConfig: epochs and batch must be positive");
    if (!(lr > 0)) throw DomainError("SurrogateConfig: learning rate must be positive");
    if (backend == Backend::MLP) {
        if (hidden.empty()) throw DomainError("SurrogateConfig: MLP needs at least one hidden width");
        for (int w : hidden)
            if (w < 1) throw DomainError("SurrogateConfig: hidden widths must be positive");
    } else {
        if (conv_channels < 1) throw DomainError("SurrogateConfig: conv_channels must be positive");
        if (nx % 2 || ny % 2) throw DomainError("SurrogateConfig: conv backend needs even nx, ny");
    }
}

ParamVector make_surrogate_params(const SurrogateConfig& c) {
    c.validate();
    ParamVector pv;
    const Eigen::Index M = c.field_dim();
    if (c.backend == Backend::MLP) {
        Eigen::Index in = M;
        for (std::size_t l = 0; l < c.hidden.size(); ++l) {
            const Eigen::Index out = c.hidden[l];
            pv.add_block("mlp.w" + std::to_string(l + 1), out * in);
            pv.add_block("mlp.b" + std::to_string(l + 1), out);
            in = out;
        }
        pv.add_block("mlp.w_out", 3 * M * in);
        pv.add_block("mlp.b_out", 3 * M);
    } else {
        const int cc = c.conv_channels;
        auto conv = [&pv](const std::string& name, int cin, int cout) {
            pv.add_block(name + ".w", static_cast<Eigen::Index>(cout) * cin * 9);
            pv.add_block(name + ".b", cout);
        };
        conv("conv1", 1, cc);
        conv("conv2", cc, cc);
        conv("conv3", cc, 2 * cc);
        conv("conv4", 2 * cc, 2 * cc);
        conv("conv5", 2 * cc, cc);
        conv("conv6", cc, 3);
    }
    return pv;
}

Var surrogate_graph(Tape& t, const std::vector<Var>& p, Var k, const SurrogateConfig& c) {
    const Eigen::Index M = c.field_dim();
    Var raw{};
    if (c.backend == Backend::MLP) {
        Var h = k;
        Eigen::Index in = M;
        std::size_t pi = 0;
        for (std::size_t l = 0; l < c.hidden.size(); ++l) {
            const Eigen::Index out = c.hidden[l];
            h = t.relu(t.affine(p[pi], p[pi + 1], h, out, in));
            pi += 2;
            in = out;
        }
        raw = t.affine(p[pi], p[pi + 1], h, 3 * M, in);
    } else {
        const int cc = c.conv_channels;
        const int nx = c.nx, ny = c.ny;
        Var h = t.relu(t.conv3x3(p[0], p[1], k, 1, cc, ny, nx));
        h = t.relu(t.conv3x3(p[2], p[3], h, cc, cc, ny, nx));
        h = t.avgpool2(h, cc, ny, nx);
        h = t.relu(t.conv3x3(p[4], p[5], h, cc, 2 * cc, ny / 2, nx / 2));
        h = t.relu(t.conv3x3(p[6], p[7], h, 2 * cc, 2 * cc, ny / 2, nx / 2));
        h = t.upsample2(h, 2 * cc, ny / 2, nx / 2);
        h = t.relu(t.conv3x3(p[8], p[9], h, 2 * cc, cc, ny, nx));
        raw = t.conv3x3(p[10], p[11], h, cc, 3, ny, nx);
    }
    // velocity channels live in source-magnitude units inside the network
    const double vs = c.velocity_scale();
    if (vs == 1.0) return raw;
    Eigen::VectorXd chan_scale(3 * M);
    chan_scale.segment(0, M).setOnes();
    chan_scale.segment(M, 2 * M).setConstant(vs);
    return t.bcast_mul(t.input(chan_scale), raw);
}

SurrogateModel SurrogateModel::zeros(const SurrogateConfig& config) {
    return SurrogateModel{config, make_surrogate_params(config)};
}

SurrogateModel SurrogateModel::init(const SurrogateConfig& config, Rng& rng) {
    SurrogateModel m = zeros(config);
    for (std::size_t b = 0; b < m.params.block_count(); ++b) {
        const ParamBlock& info = m.params.block_info(b);
        if (info.name.ends_with(".b") || info.name.starts_with("mlp.b")) continue; // biases stay zero
        Eigen::Index fan_in = 0;
        if (config.backend == Backend::MLP) {
            // weight block w (out*in): fan_in = in = size / out; recover from the
            // matching bias block that follows it
            const ParamBlock& bias = m.params.block_info(b + 1);
            fan_in = info.size / bias.size;
        } else {
            // conv weights: fan_in = cin * 9 = size / cout
            const ParamBlock& bias = m.params.block_info(b + 1);
            fan_in = info.size / bias.size;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        auto w = m.params.block(b);
        for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
    }
    return m;
}

// --- stencils ---------------------------------------------------------------------

namespace {

std::shared_ptr<const Eigen::SparseMatrix<double>> line_stencil(const Grid2D& g, bool x_dir) {
    const int n = g.cells();
    const double h = x_dir ? g.hx() : g.hy();
    const int extent = x_dir ? g.nx : g.ny;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(3 * n));
    auto at = [&](int line_pos, int other) {
        return x_dir ? g.index(line_pos, other) : g.index(other, line_pos);
    };
    const int n_other = x_dir ? g.ny : g.nx;
    for (int o = 0; o < n_other; ++o) {
        for (int s = 0; s < extent; ++s) {
            const int row = at(s, o);
            if (s == 0) {
                trip.emplace_back(row, at(0, o), -1.5 / h);
                trip.emplace_back(row, at(1, o), 2.0 / h);
                trip.emplace_back(row, at(2, o), -0.5 / h);
            } else if (s == extent - 1) {
                trip.emplace_back(row, at(extent - 1, o), 1.5 / h);
                trip.emplace_back(row, at(extent - 2, o), -2.0 / h);
                trip.emplace_back(row, at(extent - 3, o), 0.5 / h);
            } else {
                trip.emplace_back(row, at(s - 1, o), -0.5 / h);
                trip.emplace_back(row, at(s + 1, o), 0.5 / h);
            }
        }
    }
    auto S = std::make_shared<Eigen::SparseMatrix<double>>(n, n);
    S->setFromTriplets(trip.begin(), trip.end());
    return S;
}

std::shared_ptr<const Eigen::SparseMatrix<double>> selection(const Grid2D& g,
                                                             const std::vector<int>& cells) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(cells.size());
    for (std::size_t r = 0; r < cells.size(); ++r)
        trip.emplace_back(static_cast<int>(r), cells[r], 1.0);
    auto S = std::make_shared<Eigen::SparseMatrix<double>>(static_cast<int>(cells.size()),
                                                           g.cells());
    S->setFromTriplets(trip.begin(), trip.end());
    return S;
}

struct GridOps {
    std::shared_ptr<const Eigen::SparseMatrix<double>> ddx, ddy;
    std::shared_ptr<const Eigen::SparseMatrix<double>> left, right, top, bottom;
    // staggered flux machinery: pair selections, face-difference divergence
    // operators, and the scatter of the left Dirichlet closure flux
    std::shared_ptr<const Eigen::SparseMatrix<double>> pair_x_lo, pair_x_hi;
    std::shared_ptr<const Eigen::SparseMatrix<double>> pair_y_lo, pair_y_hi;
    std::shared_ptr<const Eigen::SparseMatrix<double>> div_stag_x, div_stag_y;
    std::shared_ptr<const Eigen::SparseMatrix<double>> scatter_left;
};

const GridOps& grid_ops(const Grid2D& g) {
    static std::map<std::pair<int, int>, GridOps> cache;
    auto key = std::make_pair(g.nx, g.ny);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    GridOps ops;
    ops.ddx = line_stencil(g, true);
    ops.ddy = line_stencil(g, false);
    std::vector<int> left, right, top, bottom;
    for (int j = 0; j < g.ny; ++j) {
        left.push_back(g.index(0, j));
        right.push_back(g.index(g.nx - 1, j));
    }
    for (int i = 0; i < g.nx; ++i) {
        bottom.push_back(g.index(i, 0));
        top.push_back(g.index(i, g.ny - 1));
    }
    ops.left = selection(g, left);
    ops.right = selection(g, right);
    ops.top = selection(g, top);
    ops.bottom = selection(g, bottom);

    std::vector<int> xlo, xhi, ylo, yhi;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i + 1 < g.nx; ++i) {
            xlo.push_back(g.index(i, j));
            xhi.push_back(g.index(i + 1, j));
        }
    for (int j = 0; j + 1 < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            ylo.push_back(g.index(i, j));
            yhi.push_back(g.index(i, j + 1));
        }
    ops.pair_x_lo = selection(g, xlo);
    ops.pair_x_hi = selection(g, xhi);
    ops.pair_y_lo = selection(g, ylo);
    ops.pair_y_hi = selection(g, yhi);

    {
        std::vector<Eigen::Triplet<double>> tx, ty;
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const int c = g.index(i, j);
                tx.emplace_back(c, c, 1.0 / g.hx());
                if (i > 0) tx.emplace_back(c, g.index(i - 1, j), -1.0 / g.hx());
                ty.emplace_back(c, c, 1.0 / g.hy());
                if (j > 0) ty.emplace_back(c, g.index(i, j - 1), -1.0 / g.hy());
            }
        auto Dx = std::make_shared<Eigen::SparseMatrix<double>>(g.cells(), g.cells());
        Dx->setFromTriplets(tx.begin(), tx.end());
        auto Dy = std::make_shared<Eigen::SparseMatrix<double>>(g.cells(), g.cells());
        Dy->setFromTriplets(ty.begin(), ty.end());
        ops.div_stag_x = Dx;
        ops.div_stag_y = Dy;
    }
    {
        std::vector<Eigen::Triplet<double>> ts;
        for (int j = 0; j < g.ny; ++j) ts.emplace_back(g.index(0, j), j, 1.0);
        auto S = std::make_shared<Eigen::SparseMatrix<double>>(g.cells(), g.ny);
        S->setFromTriplets(ts.begin(), ts.end());
        ops.scatter_left = S;
    }
    return cache.emplace(key, std::move(ops)).first->second;
}

/// Harmonic mean node: 2ab / (a + b) for positive nodes.
Var harmonic_graph(Tape& t, Var a, Var b) {
    return t.scale(t.mul(t.mul(a, b), t.recip(t.add(a, b))), 2.0);
}

} // namespace

std::shared_ptr<const Eigen::SparseMatrix<double>> ddx_stencil(const Grid2D& g) {
    return grid_ops(g).ddx;
}
std::shared_ptr<const Eigen::SparseMatrix<double>> ddy_stencil(const Grid2D& g) {
    return grid_ops(g).ddy;
}

namespace {

/// Central-difference strong-form residual (the documented default stencil).
Var j_pde_central(Tape& t, const GridOps& ops, Var p, Var vx, Var vy, Var k, double f_const) {
    Var div = t.add(t.apply_linear(ops.ddx, vx, "ddx"), t.apply_linear(ops.ddy, vy, "ddy"));
    Var r_mass = t.mean(t.square(t.add_const(div, -f_const)));
    Var ek = t.exp_(k);
    Var r_darcy_x = t.mean(t.square(t.add(vx, t.mul(ek, t.apply_linear(ops.ddx, p, "ddx")))));
    Var r_darcy_y = t.mean(t.square(t.add(vy, t.mul(ek, t.apply_linear(ops.ddy, p, "ddy")))));
    return t.add(r_mass, t.add(r_darcy_x, r_darcy_y));
}

/// Flux-form residual consistent with the finite-volume solver. Velocity
/// channels are read as right-face / top-face fluxes; harmonic two-point
/// fluxes of the pressure channel define the Darcy ties and the staggered
/// divergence closes mass balance with the Dirichlet half-cell flux on the
/// left and the no-flow boundary at the bottom. The solver solution is the
/// exact zero of this residual.
Var j_pde_fv(Tape& t, const GridOps& ops, const Grid2D& g, Var p, Var vx, Var vy, Var k,
             double f_const) {
    const double hx = g.hx(), hy = g.hy();
    const double n_total = static_cast<double>(t.value(p).size());
    Var ek = t.exp_(k);

    // x-direction ties: interior pair fluxes and the right Dirichlet half cell
    Var ax_lo = t.apply_linear(ops.pair_x_lo, ek, "pair_x_lo");
    Var ax_hi = t.apply_linear(ops.pair_x_hi, ek, "pair_x_hi");
    Var fx = t.mul(harmonic_graph(t, ax_lo, ax_hi),
                   t.scale(t.sub(t.apply_linear(ops.pair_x_lo, p, "pair_x_lo"),
                                 t.apply_linear(ops.pair_x_hi, p, "pair_x_hi")),
                           1.0 / hx));
    Var fx_right = t.scale(t.mul(t.apply_linear(ops.right, ek, "right"),
                                 t.apply_linear(ops.right, p, "right")),
                           2.0 / hx);
    Var fx_left = t.scale(t.mul(t.apply_linear(ops.left, ek, "left"),
                                t.add_const(t.scale(t.apply_linear(ops.left, p, "left"), -1.0),
                                            1.0)),
                          2.0 / hx);
    Var r_dx = t.add(t.sum(t.square(t.sub(t.apply_linear(ops.pair_x_lo, vx, "pair_x_lo"), fx))),
                     t.sum(t.square(t.sub(t.apply_linear(ops.right, vx, "right"), fx_right))));

    // y-direction ties: interior pair fluxes; the top row holds boundary faces
    Var ay_lo = t.apply_linear(ops.pair_y_lo, ek, "pair_y_lo");
    Var ay_hi = t.apply_linear(ops.pair_y_hi, ek, "pair_y_hi");
    Var fy = t.mul(harmonic_graph(t, ay_lo, ay_hi),
                   t.scale(t.sub(t.apply_linear(ops.pair_y_lo, p, "pair_y_lo"),
                                 t.apply_linear(ops.pair_y_hi, p, "pair_y_hi")),
                           1.0 / hy));
    Var r_dy = t.add(t.sum(t.square(t.sub(t.apply_linear(ops.pair_y_lo, vy, "pair_y_lo"), fy))),
                     t.sum(t.square(t.apply_linear(ops.top, vy, "top"))));

    // staggered mass balance with boundary closures
    Var divx = t.sub(t.apply_linear(ops.div_stag_x, vx, "div_stag_x"),
                     t.apply_linear(ops.scatter_left, t.scale(fx_left, 1.0 / hx), "scatter_left"));
    Var divy = t.apply_linear(ops.div_stag_y, vy, "div_stag_y");
    Var r_mass = t.mean(t.square(t.add_const(t.add(divx, divy), -f_const)));

    return t.add(r_mass, t.scale(t.add(r_dx, r_dy), 1.0 / n_total));
}

} // namespace

LossVars residual_loss_graph(Tape& t, Var prediction, Var k, const Grid2D& g, double f_const,
                             double gamma, Stencil stencil) {
    const Eigen::Index M = g.cells();
    const GridOps& ops = grid_ops(g);
    Var p = t.slice_rows(prediction, 0, M);
    Var vx = t.slice_rows(prediction, M, M);
    Var vy = t.slice_rows(prediction, 2 * M, M);

    Var j_pde = stencil == Stencil::Central ? j_pde_central(t, ops, p, vx, vy, k, f_const)
                                            : j_pde_fv(t, ops, g, p, vx, vy, k, f_const);

    Var b_left = t.mean(t.square(t.add_const(t.apply_linear(ops.left, p, "left"), -1.0)));
    Var b_right = t.mean(t.square(t.apply_linear(ops.right, p, "right")));
    Var b_top = t.mean(t.square(t.apply_linear(ops.top, vy, "top")));
    Var b_bottom = t.mean(t.square(t.apply_linear(ops.bottom, vy, "bottom")));
    Var j_b = t.add(t.add(b_left, b_right), t.add(b_top, b_bottom));

    Var j = t.add(j_pde, t.scale(j_b, gamma));
    return {j, j_pde, j_b};
}

namespace {

std::vector<Var> constant_param_vars(Tape& t, const ParamVector& pv) {
    std::vector<Var> vars;
    vars.reserve(pv.block_count());
    for (std::size_t b = 0; b < pv.block_count(); ++b) vars.push_back(t.input(pv.block(b)));
    return vars;
}

void check_grid(const SurrogateModel& model, const ScalarField& k) {
    if (k.grid.nx != model.config.nx || k.grid.ny != model.config.ny)
        throw ShapeError("surrogate: field grid " + std::to_string(k.grid.nx) + "x" +
                         std::to_string(k.grid.ny) + " does not match configured " +
                         std::to_string(model.config.nx) + "x" + std::to_string(model.config.ny));
}

} // namespace

SurrogatePrediction predict(const SurrogateModel& model, const ScalarField& k) {
    check_grid(model, k);
    Tape t;
    std::vector<Var> p = constant_param_vars(t, model.params);
    Var out = surrogate_graph(t, p, t.input(k.values), model.config);
    const Eigen::Index M = model.config.field_dim();
    const ad::Mat& v = t.value(out);
    return {ScalarField(k.grid, v.col(0).segment(0, M)),
            ScalarField(k.grid, v.col(0).segment(M, M)),
            ScalarField(k.grid, v.col(0).segment(2 * M, M))};
}

ResidualLoss residual_loss(const SurrogatePrediction& prediction, const ScalarField& k,
                           double f_const, double gamma, Stencil stencil) {
    const Grid2D& g = k.grid;
    if (!(prediction.p.grid == g) || !(prediction.vx.grid == g) || !(prediction.vy.grid == g))
        throw ShapeError("residual_loss: prediction grids do not match k");
    Tape t;
    Eigen::VectorXd stacked(3 * g.cells());
    stacked << prediction.p.values, prediction.vx.values, prediction.vy.values;
    LossVars lv =
        residual_loss_graph(t, t.input(stacked), t.input(k.values), g, f_const, gamma, stencil);
    return {t.scalar(lv.j), t.scalar(lv.j_pde), t.scalar(lv.j_b)};
}

namespace {

double onecycle_lr(double max_lr, long step, long total) {
    // 30% cosine warmup from max/25, then cosine decay to max/1e4
    const double pct_start = 0.3;
    const double start = max_lr / 25.0;
    const double final = max_lr / 1e4;
    const double w = pct_start * static_cast<double>(total);
    const double s = static_cast<double>(step);
    constexpr double pi = 3.14159265358979323846;
    if (s < w) {
        const double u = s / w;
        return start + (max_lr - start) * 0.5 * (1.0 - std::cos(pi * u));
    }
    const double u = (s - w) / (static_cast<double>(total) - w);
    return final + (max_lr - final) * 0.5 * (1.0 + std::cos(pi * u));
}

} // namespace

SurrogateTrainResult train_surrogate(const FieldDataset& dataset, SurrogateConfig config, Rng& rng,
                                     int n_train) {
    if (dataset.fields.empty()) throw DomainError("train_surrogate: dataset is empty");
    config.nx = dataset.grid.nx;
    config.ny = dataset.grid.ny;
    config.validate();
    const Eigen::Index N = n_train > 0
                               ? std::min<Eigen::Index>(n_train, static_cast<Eigen::Index>(dataset.size()))
                               : static_cast<Eigen::Index>(dataset.size());
    if (n_train > 0 && static_cast<Eigen::Index>(dataset.size()) < n_train)
        throw DomainError("train_surrogate: dataset smaller than requested n_train");

    const Eigen::Index M = config.field_dim();
    Eigen::MatrixXd fields(M, N);
    for (Eigen::Index i = 0; i < N; ++i) fields.col(i) = dataset.fields[static_cast<std::size_t>(i)];

    SurrogateModel model = SurrogateModel::init(config, rng);
    ad::Adam opt(config.lr, /*ascent=*/false);
    const Grid2D grid(config.nx, config.ny);

    ad::DiffProgram prog{"surrogate_loss",
                         [&config, &grid](Tape& t, const std::vector<Var>& p,
                                          const std::vector<ad::Mat>& aux) {
                             Var k = t.input(aux[0]);
                             Var pred = surrogate_graph(t, p, k, config);
                             return residual_loss_graph(t, pred, k, grid, config.f_const,
                                                        config.gamma, config.stencil)
                                 .j;
                         }};

    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
    const long steps_per_epoch = (N + config.batch - 1) / config.batch;
    const long total_steps = steps_per_epoch * config.epochs;
    long step = 0;

    SurrogateTrainResult result;
    result.trace.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double weighted = 0;
        Eigen::Index seen = 0;
        for (Eigen::Index start = 0; start < N; start += config.batch) {
            const Eigen::Index B = std::min<Eigen::Index>(config.batch, N - start);
            Eigen::MatrixXd K(M, B);
            for (Eigen::Index b = 0; b < B; ++b)
                K.col(b) = fields.col(order[static_cast<std::size_t>(start + b)]);
            if (config.schedule == Schedule::OneCycle)
                opt.set_lr(onecycle_lr(config.lr, step, total_steps));
            ad::ValueGrad vg = ad::value_and_grad(prog, model.params, {K});
            if (!std::isfinite(vg.value))
                throw NumericalError("train_surrogate: non-finite loss at epoch " +
                                     std::to_string(epoch) + ", batch offset " +
                                     std::to_string(start));
            opt.step(model.params, vg.grad);
            ++step;
            weighted += vg.value * static_cast<double>(B);
            seen += B;
        }
        result.trace.push_back(weighted / static_cast<double>(seen));
    }
    result.model = std::move(model);
    return result;
}

Eigen::VectorXd surrogate_forward(const SurrogateModel& model, const ScalarField& k,
                                  const ObservationPlan& plan) {
    return observe(predict(model, k).p, plan);
}

namespace {

struct MisfitGraph {
    Tape tape;
    Var k_leaf;
    Var phi;
};

void build_misfit(MisfitGraph& mg, const SurrogateModel& model, const ObservationSet& obs,
                  const ScalarField& k) {
    check_grid(model, k);
    if (obs.plan.size() != static_cast<std::size_t>(obs.size()))
        throw ShapeError("surrogate misfit: observation set carries no plan");
    Tape& t = mg.tape;
    std::vector<Var> p = constant_param_vars(t, model.params);
    mg.k_leaf = t.leaf(k.values);
    Var out = surrogate_graph(t, p, mg.k_leaf, model.config);
    const Eigen::Index M = model.config.field_dim();
    Var pressure = t.slice_rows(out, 0, M);
    auto O = std::make_shared<Eigen::SparseMatrix<double>>(observation_matrix(k.grid, obs.plan));
    Var predicted = t.apply_linear(O, pressure, "observe");
    Var resid = t.sub(predicted, t.input(obs.noisy));
    Var scaled = t.mul(resid, t.input(obs.sigma.cwiseInverse().eval()));
    mg.phi = t.scale(t.sum(t.square(scaled)), 0.5);
}

} // namespace

double surrogate_misfit(const SurrogateModel& model, const ObservationSet& obs,
                        const ScalarField& k) {
    MisfitGraph mg;
    build_misfit(mg, model, obs, k);
    return mg.tape.scalar(mg.phi);
}

ScalarField surrogate_misfit_grad_k(const SurrogateModel& model, const ObservationSet& obs,
                                    const ScalarField& k) {
    MisfitGraph mg;
    build_misfit(mg, model, obs, k);
    mg.tape.backward(mg.phi);
    return ScalarField(k.grid, mg.tape.grad(mg.k_leaf).col(0));
}

// --- model file ------------------------------------------------------------------

void SurrogateModel::save(const std::string& path) const {
    std::string hidden_str;
    for (std::size_t i = 0; i < config.hidden.size(); ++i) {
        if (i) hidden_str += ",";
        hidden_str += std::to_string(config.hidden[i]);
    }
    std::string out = "SURROGATEMODEL v1\n";
    std::vector<std::pair<std::string, std::string>> kv = {
        {"nx", std::to_string(config.nx)},
        {"ny", std::to_string(config.ny)},
        {"backend", config.backend == Backend::MLP ? "mlp" : "conv"},
        {"hidden", hidden_str},
        {"conv_channels", std::to_string(config.conv_channels)},
        {"gamma", fmt_full(config.gamma)},
        {"epochs", std::to_string(config.epochs)},
        {"batch", std::to_string(config.batch)},
        {"lr", fmt_full(config.lr)},
        {"schedule", config.schedule == Schedule::Constant ? "constant" : "onecycle"},
        {"stencil", config.stencil == Stencil::Central ? "central" : "fv"},
        {"f_const", fmt_full(config.f_const)},
    };
    out += "surrogateconfig " + std::to_string(kv.size()) + "\n";
    for (const auto& [k, v] : kv) out += k + " " + v + "\n";
    out += params.serialize();
    write_text_file(path, out);
}

SurrogateModel SurrogateModel::load(const std::string& path) {
    const std::string text = read_text_file(path);
    Tokenizer tok(text);
    if (tok.expect("model magic") != "SURROGATEMODEL")
        throw ParseError(path + ": expected SURROGATEMODEL header");
    if (tok.expect("version") != "v1") throw ParseError(path + ": unsupported SURROGATEMODEL version");
    if (tok.expect("surrogateconfig tag") != "surrogateconfig")
        throw ParseError(path + ": expected surrogateconfig block");
    const long n = tok.expect_long("surrogateconfig entry count");
    SurrogateConfig c;
    for (long i = 0; i < n; ++i) {
        const std::string key = tok.expect("config key");
        if (key == "nx") c.nx = static_cast<int>(tok.expect_long("nx"));
        else if (key == "ny") c.ny = static_cast<int>(tok.expect_long("ny"));
        else if (key == "backend") c.backend = tok.expect("backend") == "mlp" ? Backend::MLP : Backend::Conv;
        else if (key == "hidden") {
            c.hidden.clear();
            const std::string spec = tok.expect("hidden widths");
            std::size_t pos = 0;
            while (pos < spec.size()) {
                std::size_t comma = spec.find(',', pos);
                if (comma == std::string::npos) comma = spec.size();
                c.hidden.push_back(std::stoi(spec.substr(pos, comma - pos)));
                pos = comma + 1;
            }
        } else if (key == "conv_channels") c.conv_channels = static_cast<int>(tok.expect_long("conv_channels"));
        else if (key == "gamma") c.gamma = tok.expect_double("gamma");
        else if (key == "epochs") c.epochs = static_cast<int>(tok.expect_long("epochs"));
        else if (key == "batch") c.batch = static_cast<int>(tok.expect_long("batch"));
        else if (key == "lr") c.lr = tok.expect_double("lr");
        else if (key == "schedule")
            c.schedule = tok.expect("schedule") == "constant" ? Schedule::Constant : Schedule::OneCycle;
        else if (key == "stencil")
            c.stencil = tok.expect("stencil") == "central" ? Stencil::Central : Stencil::FV;
        else if (key == "f_const") c.f_const = tok.expect_double("f_const");
        else throw ParseError(path + ": unknown surrogateconfig key '" + key + "'");
    }
    c.validate();
    SurrogateModel m;
    m.config = c;
    m.params = ParamVector::deserialize_from(tok);
    if (!m.params.same_shape(make_surrogate_params(c)))
        throw ParseError(path + ": parameter blocks do not match the declared architecture");
    return m;
}

} // namespace vidgp::pcs

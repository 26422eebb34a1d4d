#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "vidgp/errors.hpp"
#include "vidgp/rng.hpp"

namespace vidgp {

/// Uniform cell-centered grid on the unit square. Cell (i, j) has its center
/// at ((i + 1/2) hx, (j + 1/2) hy); fields are stored row-major with x1
/// fastest, i.e. flat index j * nx + i.
struct Grid2D {
    int nx = 0;
    int ny = 0;

    Grid2D() = default;
    Grid2D(int nx_, int ny_) : nx(nx_), ny(ny_) {
        if (nx < 2 || ny < 2)
            throw DomainError("Grid2D requires nx >= 2 and ny >= 2, got " +
                              std::to_string(nx) + "x" + std::to_string(ny));
    }

    int cells() const { return nx * ny; }
    double hx() const { return 1.0 / nx; }
    double hy() const { return 1.0 / ny; }
    int index(int i, int j) const { return j * nx + i; }
    double cx(int i) const { return (i + 0.5) * hx(); }
    double cy(int j) const { return (j + 0.5) * hy(); }

    bool operator==(const Grid2D&) const = default;
};

/// A discretized scalar quantity (log-permeability, pressure, one velocity
/// component) on a Grid2D.
struct ScalarField {
    Grid2D grid;
    Eigen::VectorXd values;

    ScalarField() = default;
    ScalarField(const Grid2D& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.cells())
            throw ShapeError("field length " + std::to_string(values.size()) +
                             " != nx*ny = " + std::to_string(grid.cells()));
    }
    static ScalarField zero(const Grid2D& g) {
        return ScalarField(g, Eigen::VectorXd::Zero(g.cells()));
    }
    static ScalarField constant(const Grid2D& g, double c) {
        return ScalarField(g, Eigen::VectorXd::Constant(g.cells(), c));
    }
    double operator()(int i, int j) const { return values[grid.index(i, j)]; }
    double& operator()(int i, int j) { return values[grid.index(i, j)]; }
};

struct Point2 {
    double x1 = 0;
    double x2 = 0;
};

/// Ordered measurement locations, all strictly inside the open unit square.
struct ObservationPlan {
    std::vector<Point2> locations;

    ObservationPlan() = default;
    explicit ObservationPlan(std::vector<Point2> locs);

    std::size_t size() const { return locations.size(); }

    /// The regular n x n plan used throughout: x = (i + 1/2)/n in both
    /// coordinates (n = 8 gives the 64-point layout at 0.0625 + 0.125 i).
    static ObservationPlan regular(int n);
};

/// Clean and noise-corrupted measurements with per-entry noise scale.
struct ObservationSet {
    ObservationPlan plan; // may be empty when the set is detached from locations
    Eigen::VectorXd clean;
    Eigen::VectorXd noisy;
    Eigen::VectorXd sigma;
    double noise_level = 0;

    Eigen::Index size() const { return clean.size(); }
};

/// Fields sharing one grid plus generator metadata (ordered key=value pairs).
struct FieldDataset {
    Grid2D grid;
    std::vector<Eigen::VectorXd> fields;
    std::vector<std::pair<std::string, std::string>> metadata;

    std::size_t size() const { return fields.size(); }
    const std::string* find_meta(const std::string& key) const {
        for (const auto& [k, v] : metadata)
            if (k == key) return &v;
        return nullptr;
    }
};

/// Sparse bilinear-interpolation operator mapping a flat field to the plan's
/// observation values. Shared by the solver adjoint and the surrogate loss.
Eigen::SparseMatrix<double> observation_matrix(const Grid2D& grid, const ObservationPlan& plan);

/// Bilinear interpolation of the field at every plan location, in plan order.
Eigen::VectorXd observe(const ScalarField& field, const ObservationPlan& plan);

/// sigma_j = max(noise_level * |clean_j|, sigma_floor); noisy = clean + sigma .* xi.
/// noise_level == 0 returns noisy == clean exactly (sigma stays at the floor so
/// downstream likelihoods remain well-defined).
ObservationSet add_noise(const Eigen::VectorXd& clean, double noise_level, Rng& rng,
                         double sigma_floor = 1e-8);

/// observe + add_noise, keeping the plan attached to the result.
ObservationSet make_observations(const ScalarField& pressure, const ObservationPlan& plan,
                                 double noise_level, Rng& rng);

// --- portable on-disk formats -------------------------------------------------

/// FIELD v1 text format: header "FIELD v1 <ny> <nx>", then ny lines of nx
/// full-precision values; line j holds cells (i = 0..nx-1, j).
void write_field(const std::string& path, const ScalarField& field);
ScalarField read_field(const std::string& path);

std::string field_to_string(const ScalarField& field);
ScalarField field_from_string(const std::string& text);

/// Dataset directory: field_%06d.txt members plus meta.txt of key=value lines.
void write_dataset(const std::string& dir, const FieldDataset& ds);
FieldDataset read_dataset(const std::string& dir);

/// OBS v1 text format: header, noise level, then one "x1 x2 clean noisy sigma"
/// row per observation.
void write_observations(const std::string& path, const ObservationSet& obs);
ObservationSet read_observations(const std::string& path);

} // namespace vidgp

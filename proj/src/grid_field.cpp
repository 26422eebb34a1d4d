#include "vidgp/grid_field.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "vidgp/textio.hpp"

namespace fs = std::filesystem;

namespace vidgp {

ObservationPlan::ObservationPlan(std::vector<Point2> locs) : locations(std::move(locs)) {
    for (std::size_t a = 0; a < locations.size(); ++a) {
        const Point2& p = locations[a];
        if (!(p.x1 > 0.0 && p.x1 < 1.0 && p.x2 > 0.0 && p.x2 < 1.0))
            throw DomainError("observation location (" + fmt_full(p.x1) + ", " + fmt_full(p.x2) +
                              ") at index " + std::to_string(a) +
                              " is not strictly inside the unit square");
        for (std::size_t b = 0; b < a; ++b)
            if (locations[b].x1 == p.x1 && locations[b].x2 == p.x2)
                throw DomainError("duplicate observation locations at indices " +
                                  std::to_string(b) + " and " + std::to_string(a));
    }
}

ObservationPlan ObservationPlan::regular(int n) {
    if (n < 1) throw DomainError("regular plan needs n >= 1");
    std::vector<Point2> locs;
    locs.reserve(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            locs.push_back({(i + 0.5) / n, (j + 0.5) / n});
    return ObservationPlan(std::move(locs));
}

Eigen::SparseMatrix<double> observation_matrix(const Grid2D& grid, const ObservationPlan& plan) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(plan.size() * 4);
    for (std::size_t r = 0; r < plan.size(); ++r) {
        const Point2& p = plan.locations[r];
        if (!(p.x1 > 0.0 && p.x1 < 1.0 && p.x2 > 0.0 && p.x2 < 1.0))
            throw DomainError("observation location outside the unit square at index " +
                              std::to_string(r));
        // indices in cell-center coordinates; clamped pair extrapolates linearly
        // near the boundary, which keeps affine fields exact
        const double gx = p.x1 * grid.nx - 0.5;
        const double gy = p.x2 * grid.ny - 0.5;
        int i0 = static_cast<int>(std::floor(gx));
        int j0 = static_cast<int>(std::floor(gy));
        i0 = std::clamp(i0, 0, grid.nx - 2);
        j0 = std::clamp(j0, 0, grid.ny - 2);
        const double tx = gx - i0;
        const double ty = gy - j0;
        const int row = static_cast<int>(r);
        trip.emplace_back(row, grid.index(i0, j0), (1 - tx) * (1 - ty));
        trip.emplace_back(row, grid.index(i0 + 1, j0), tx * (1 - ty));
        trip.emplace_back(row, grid.index(i0, j0 + 1), (1 - tx) * ty);
        trip.emplace_back(row, grid.index(i0 + 1, j0 + 1), tx * ty);
    }
    Eigen::SparseMatrix<double> O(static_cast<int>(plan.size()), grid.cells());
    O.setFromTriplets(trip.begin(), trip.end());
    return O;
}

Eigen::VectorXd observe(const ScalarField& field, const ObservationPlan& plan) {
    return observation_matrix(field.grid, plan) * field.values;
}

ObservationSet add_noise(const Eigen::VectorXd& clean, double noise_level, Rng& rng,
                         double sigma_floor) {
    if (noise_level < 0) throw DomainError("noise_level must be >= 0");
    if (!clean.allFinite()) throw DomainError("add_noise: clean vector has non-finite entries");
    ObservationSet obs;
    obs.clean = clean;
    obs.noise_level = noise_level;
    obs.sigma = clean.cwiseAbs() * noise_level;
    obs.sigma = obs.sigma.cwiseMax(sigma_floor);
    obs.noisy = clean;
    if (noise_level > 0)
        for (Eigen::Index j = 0; j < clean.size(); ++j) obs.noisy[j] += obs.sigma[j] * rng.normal();
    return obs;
}

ObservationSet make_observations(const ScalarField& pressure, const ObservationPlan& plan,
                                 double noise_level, Rng& rng) {
    ObservationSet obs = add_noise(observe(pressure, plan), noise_level, rng);
    obs.plan = plan;
    return obs;
}

// --- field file format ---------------------------------------------------------

std::string field_to_string(const ScalarField& field) {
    std::string out = "FIELD v1 " + std::to_string(field.grid.ny) + " " +
                      std::to_string(field.grid.nx) + "\n";
    for (int j = 0; j < field.grid.ny; ++j) {
        for (int i = 0; i < field.grid.nx; ++i) {
            if (i) out += ' ';
            out += fmt_full(field(i, j));
        }
        out += '\n';
    }
    return out;
}

ScalarField field_from_string(const std::string& text) {
    Tokenizer tok(text);
    const std::string magic = tok.expect("FIELD magic");
    if (magic != "FIELD") throw ParseError("expected 'FIELD' header, got '" + magic + "'");
    const std::string version = tok.expect("format version");
    if (version != "v1") throw ParseError("unsupported field format version '" + version + "'");
    const long ny = tok.expect_long("ny");
    const long nx = tok.expect_long("nx");
    if (nx < 2 || ny < 2)
        throw ParseError("bad field dimensions " + std::to_string(ny) + "x" + std::to_string(nx));
    Grid2D grid(static_cast<int>(nx), static_cast<int>(ny));
    Eigen::VectorXd values(grid.cells());
    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            std::string cell;
            if (!tok.next(cell))
                throw ParseError("field data ended early: expected " +
                                 std::to_string(grid.cells()) + " values, got " +
                                 std::to_string(grid.index(i, j)));
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw ParseError("bad field value token '" + cell + "' at line " +
                                 std::to_string(tok.line()));
            if (!std::isfinite(v))
                throw ParseError("non-finite field value '" + cell + "' at line " +
                                 std::to_string(tok.line()));
            values[grid.index(i, j)] = v;
        }
    }
    std::string extra;
    if (tok.next(extra))
        throw ParseError("trailing token '" + extra + "' after " +
                         std::to_string(grid.cells()) + " field values");
    return ScalarField(grid, std::move(values));
}

void write_field(const std::string& path, const ScalarField& field) {
    if (!field.values.allFinite())
        throw DomainError("refusing to write field with non-finite values to '" + path + "'");
    write_text_file(path, field_to_string(field));
}

ScalarField read_field(const std::string& path) {
    try {
        return field_from_string(read_text_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// --- dataset directory -----------------------------------------------------------

static std::string member_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "field_%06zu.txt", i);
    return buf;
}

void write_dataset(const std::string& dir, const FieldDataset& ds) {
    fs::create_directories(dir);
    std::string meta;
    meta += "count=" + std::to_string(ds.fields.size()) + "\n";
    meta += "nx=" + std::to_string(ds.grid.nx) + "\n";
    meta += "ny=" + std::to_string(ds.grid.ny) + "\n";
    for (const auto& [k, v] : ds.metadata) meta += k + "=" + v + "\n";
    write_text_file((fs::path(dir) / "meta.txt").string(), meta);
    for (std::size_t i = 0; i < ds.fields.size(); ++i)
        write_field((fs::path(dir) / member_name(i)).string(), ScalarField(ds.grid, ds.fields[i]));
}

FieldDataset read_dataset(const std::string& dir) {
    const std::string meta_text = read_text_file((fs::path(dir) / "meta.txt").string());
    FieldDataset ds;
    std::size_t count = 0;
    int nx = 0, ny = 0;
    std::size_t pos = 0;
    while (pos < meta_text.size()) {
        std::size_t eol = meta_text.find('\n', pos);
        if (eol == std::string::npos) eol = meta_text.size();
        const std::string line = meta_text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(dir + "/meta.txt: line '" + line + "' is not key=value");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "count")
            count = static_cast<std::size_t>(std::stoll(val));
        else if (key == "nx")
            nx = std::stoi(val);
        else if (key == "ny")
            ny = std::stoi(val);
        else
            ds.metadata.emplace_back(key, val);
    }
    ds.grid = Grid2D(nx, ny);
    ds.fields.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        ScalarField f = read_field((fs::path(dir) / member_name(i)).string());
        if (!(f.grid == ds.grid))
            throw ParseError(dir + "/" + member_name(i) + ": grid differs from meta.txt");
        ds.fields.push_back(std::move(f.values));
    }
    return ds;
}

// --- observation files -------------------------------------------------------------

void write_observations(const std::string& path, const ObservationSet& obs) {
    if (obs.plan.size() != static_cast<std::size_t>(obs.size()))
        throw ShapeError("observation set has no plan attached; cannot serialize");
    std::string out = "OBS v1 " + std::to_string(obs.size()) + "\n";
    out += "noise_level " + fmt_full(obs.noise_level) + "\n";
    for (Eigen::Index j = 0; j < obs.size(); ++j) {
        out += fmt_full(obs.plan.locations[static_cast<std::size_t>(j)].x1) + " " +
               fmt_full(obs.plan.locations[static_cast<std::size_t>(j)].x2) + " " +
               fmt_full(obs.clean[j]) + " " + fmt_full(obs.noisy[j]) + " " +
               fmt_full(obs.sigma[j]) + "\n";
    }
    write_text_file(path, out);
}

ObservationSet read_observations(const std::string& path) {
    const std::string text = read_text_file(path);
    Tokenizer tok(text);
    if (tok.expect("OBS magic") != "OBS") throw ParseError(path + ": expected 'OBS' header");
    const std::string version = tok.expect("format version");
    if (version != "v1") throw ParseError(path + ": unsupported observation format '" + version + "'");
    const long n = tok.expect_long("observation count");
    if (tok.expect("noise_level key") != "noise_level")
        throw ParseError(path + ": expected 'noise_level' line");
    ObservationSet obs;
    obs.noise_level = tok.expect_double("noise_level value");
    std::vector<Point2> locs(static_cast<std::size_t>(n));
    obs.clean.resize(n);
    obs.noisy.resize(n);
    obs.sigma.resize(n);
    for (long j = 0; j < n; ++j) {
        locs[static_cast<std::size_t>(j)].x1 = tok.expect_double("x1");
        locs[static_cast<std::size_t>(j)].x2 = tok.expect_double("x2");
        obs.clean[j] = tok.expect_double("clean value");
        obs.noisy[j] = tok.expect_double("noisy value");
        obs.sigma[j] = tok.expect_double("sigma value");
        if (!(obs.sigma[j] > 0))
            throw ParseError(path + ": sigma must be positive at row " + std::to_string(j));
    }
    obs.plan = ObservationPlan(std::move(locs));
    return obs;
}

} // namespace vidgp

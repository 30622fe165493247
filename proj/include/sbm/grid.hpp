#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbm {

/// Behaviour of the computational box faces (the outer rectangle, not the
/// diffuse interface, which is handled by the domain parameter psi).
enum class BoxBc {
    NoFlux,   // mirror ghost: zero flux through the bounding face
    Fixed,    // face node values are pinned by the stepper
    Periodic  // wrap-around
};

/// Uniform Cartesian grid, x fastest, then y, then z. Unused axes have
/// extent 1; used axes need at least 3 nodes so second-order stencils fit.
struct Grid {
    int nx = 1, ny = 1, nz = 1;
    double dx = 1.0;
    // face order: x-lo, x-hi, y-lo, y-hi, z-lo, z-hi
    std::array<BoxBc, 6> box{BoxBc::NoFlux, BoxBc::NoFlux, BoxBc::NoFlux,
                             BoxBc::NoFlux, BoxBc::NoFlux, BoxBc::NoFlux};

    int dim() const { return nz > 1 ? 3 : (ny > 1 ? 2 : 1); }
    std::size_t size() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }
    int extent(int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
    std::size_t stride(int axis) const {
        return axis == 0 ? 1
                         : (axis == 1 ? static_cast<std::size_t>(nx)
                                      : static_cast<std::size_t>(nx) * ny);
    }
    std::size_t idx(int i, int j = 0, int k = 0) const {
        return static_cast<std::size_t>(k) * ny * nx +
               static_cast<std::size_t>(j) * nx + i;
    }
    BoxBc bc_lo(int axis) const { return box[2 * axis]; }
    BoxBc bc_hi(int axis) const { return box[2 * axis + 1]; }

    bool operator==(const Grid& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz && dx == o.dx && box == o.box;
    }

    void validate() const {
        if (dx <= 0.0) throw std::invalid_argument("grid: spacing must be positive");
        if (nx < 3) throw std::invalid_argument("grid: nx must be at least 3");
        if (ny != 1 && ny < 3) throw std::invalid_argument("grid: ny must be 1 or at least 3");
        if (nz != 1 && nz < 3) throw std::invalid_argument("grid: nz must be 1 or at least 3");
        if (nz > 1 && ny == 1) throw std::invalid_argument("grid: z axis used before y axis");
        for (int a = 0; a < 3; ++a) {
            bool lo = bc_lo(a) == BoxBc::Periodic, hi = bc_hi(a) == BoxBc::Periodic;
            if (lo != hi)
                throw std::invalid_argument("grid: periodic box must pair lo and hi faces");
        }
    }
};

inline Grid make_grid_1d(int nx, double dx, BoxBc lo = BoxBc::NoFlux,
                         BoxBc hi = BoxBc::NoFlux) {
    Grid g;
    g.nx = nx;
    g.dx = dx;
    g.box[0] = lo;
    g.box[1] = hi;
    g.validate();
    return g;
}

inline Grid make_grid_2d(int nx, int ny, double dx, BoxBc all = BoxBc::NoFlux) {
    Grid g;
    g.nx = nx;
    g.ny = ny;
    g.dx = dx;
    g.box.fill(all);
    g.validate();
    return g;
}

inline Grid make_grid_3d(int nx, int ny, int nz, double dx, BoxBc all = BoxBc::NoFlux) {
    Grid g;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.dx = dx;
    g.box.fill(all);
    g.validate();
    return g;
}

/// Scalar nodal values on a grid. Plain value semantics: the grid is copied
/// into the field so fields can be compared and moved around freely.
struct ScalarField {
    Grid grid;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(const Grid& g, double init = 0.0)
        : grid(g), v(g.size(), init) {}

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    double& at(int i, int j = 0, int k = 0) { return v[grid.idx(i, j, k)]; }
    double at(int i, int j = 0, int k = 0) const { return v[grid.idx(i, j, k)]; }
    std::size_t size() const { return v.size(); }

    double max_abs() const {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    }
    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
    /// Index of the first non-finite value, or size() if all finite.
    std::size_t first_non_finite() const {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!std::isfinite(v[i])) return i;
        return v.size();
    }
};

/// One component array per used axis.
struct VectorField {
    Grid grid;
    std::array<std::vector<double>, 3> comp;

    VectorField() = default;
    explicit VectorField(const Grid& g) : grid(g) {
        for (int a = 0; a < g.dim(); ++a) comp[a].assign(g.size(), 0.0);
    }
    int dim() const { return grid.dim(); }
};

/// Complex nodal values stored as two real fields.
struct ComplexField {
    ScalarField re, im;

    ComplexField() = default;
    explicit ComplexField(const Grid& g) : re(g), im(g) {}
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (!(a == b))
        throw std::invalid_argument(std::string(what) + ": fields live on different grids");
}

/// Spatially uniform value or a per-node field; used for coefficients such as
/// D, S, boundary values and contact angles.
struct Coef {
    bool uniform = true;
    double value = 0.0;
    ScalarField field;

    Coef() = default;
    Coef(double v) : uniform(true), value(v) {}
    Coef(ScalarField f) : uniform(false), field(std::move(f)) {}

    double operator()(std::size_t i) const { return uniform ? value : field.v[i]; }
    double max_value() const {
        if (uniform) return value;
        double m = field.v.empty() ? 0.0 : field.v[0];
        for (double x : field.v) m = std::max(m, x);
        return m;
    }
    void require_grid(const Grid& g, const char* what) const {
        if (!uniform) require_same_grid(field.grid, g, what);
    }
};

}  // namespace sbm

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sbm/grid.hpp"
#include "sbm/operators.hpp"

namespace sbm {

struct TridiagonalSystem {
    std::vector<double> lower, diag, upper, rhs;  // lower[0] and upper[n-1] unused

    std::size_t n() const { return diag.size(); }
    void resize(std::size_t n) {
        lower.assign(n, 0.0);
        diag.assign(n, 0.0);
        upper.assign(n, 0.0);
        rhs.assign(n, 0.0);
    }
};

/// Thomas algorithm; destroys the system, returns the solution through x.
/// Throws on empty systems and on vanishing pivots (not diagonally dominant
/// enough to eliminate safely).
inline void thomas_solve(TridiagonalSystem& sys, std::vector<double>& x) {
    const std::size_t n = sys.n();
    if (n == 0) throw std::invalid_argument("thomas_solve: empty system");
    x.resize(n);
    for (std::size_t i = 1; i < n; ++i) {
        const double piv = sys.diag[i - 1];
        if (std::abs(piv) < 1e-300)
            throw std::runtime_error("thomas_solve: vanishing pivot, system near-singular");
        const double m = sys.lower[i] / piv;
        sys.diag[i] -= m * sys.upper[i - 1];
        sys.rhs[i] -= m * sys.rhs[i - 1];
    }
    if (std::abs(sys.diag[n - 1]) < 1e-300)
        throw std::runtime_error("thomas_solve: vanishing pivot, system near-singular");
    x[n - 1] = sys.rhs[n - 1] / sys.diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        x[i] = (sys.rhs[i] - sys.upper[i] * x[i + 1]) / sys.diag[i];
}

inline std::vector<double> thomas_solve(TridiagonalSystem sys) {
    std::vector<double> x;
    thomas_solve(sys, x);
    return x;
}

/// Tridiagonal system with complex entries. Each complex scalar a+ib stands
/// for the 2x2 real block [[a,-b],[b,a]], so eliminating with std::complex
/// arithmetic is exactly the block-tridiagonal solve of the coupled
/// real/imaginary pair written compactly.
struct ComplexTridiagonalSystem {
    std::vector<std::complex<double>> lower, diag, upper, rhs;

    std::size_t n() const { return diag.size(); }
    void resize(std::size_t n) {
        lower.assign(n, 0.0);
        diag.assign(n, 0.0);
        upper.assign(n, 0.0);
        rhs.assign(n, 0.0);
    }
};

inline void thomas_solve(ComplexTridiagonalSystem& sys, std::vector<std::complex<double>>& x) {
    const std::size_t n = sys.n();
    if (n == 0) throw std::invalid_argument("thomas_solve: empty system");
    x.resize(n);
    for (std::size_t i = 1; i < n; ++i) {
        const std::complex<double> piv = sys.diag[i - 1];
        if (std::abs(piv) < 1e-300)
            throw std::runtime_error("thomas_solve: vanishing pivot, system near-singular");
        const std::complex<double> m = sys.lower[i] / piv;
        sys.diag[i] -= m * sys.upper[i - 1];
        sys.rhs[i] -= m * sys.rhs[i - 1];
    }
    if (std::abs(sys.diag[n - 1]) < 1e-300)
        throw std::runtime_error("thomas_solve: vanishing pivot, system near-singular");
    x[n - 1] = sys.rhs[n - 1] / sys.diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        x[i] = (sys.rhs[i] - sys.upper[i] * x[i + 1]) / sys.diag[i];
}

struct ConvergenceReport {
    int iterations = 0;
    bool converged = false;
    double tolerance = 0.0;
    std::vector<double> residuals;  // one entry per completed cycle
};

/// Builds the tridiagonal system for one grid line. `line_base` is the flat
/// index of the first node; nodes along the line are line_base + q*stride.
using LineBuilder =
    std::function<void(int axis, std::size_t line_base, const ScalarField& f,
                       TridiagonalSystem& sys)>;

/// One implicit sweep along `axis`: solve every grid line's tridiagonal
/// system and write the solutions back into the field.
inline void sweep_axis(ScalarField& f, int axis, const LineBuilder& build) {
    const Grid& g = f.grid;
    const std::size_t st = g.stride(axis);
    const int n = g.extent(axis);
    TridiagonalSystem sys;
    std::vector<double> x;
    detail::for_each_line(g, axis, [&](std::size_t base) {
        sys.resize(n);
        build(axis, base, f, sys);
        thomas_solve(sys, x);
        for (int q = 0; q < n; ++q) f.v[base + st * q] = x[q];
    });
}

/// Alternating-direction iteration: per cycle one implicit sweep along each
/// used axis (x, then y, then z), then the caller's residual. Stops when the
/// residual drops to tol or max_iters cycles have run. max_iters = 0 only
/// evaluates the residual and leaves the field untouched.
inline ConvergenceReport adi_iterate(ScalarField& f, const LineBuilder& build,
                                     const std::function<double(const ScalarField&)>& residual,
                                     double tol, int max_iters) {
    ConvergenceReport rep;
    rep.tolerance = tol;
    if (max_iters == 0) {
        const double r = residual(f);
        rep.residuals.push_back(r);
        rep.converged = r <= tol;
        return rep;
    }
    for (int it = 0; it < max_iters; ++it) {
        for (int a = 0; a < f.grid.dim(); ++a) sweep_axis(f, a, build);
        rep.iterations = it + 1;
        const double r = residual(f);
        rep.residuals.push_back(r);
        if (r <= tol) {
            rep.converged = true;
            break;
        }
    }
    return rep;
}

}  // namespace sbm

#pragma once

#include <algorithm>
#include <cmath>

#include "sbm/grid.hpp"

namespace sbm {

namespace detail {

/// Arithmetic-mean face conductance, capped at twice the smaller endpoint
/// when both endpoints share a sign. See div_flux for why the cap matters on
/// steep psi profiles; the implicit assemblies reuse the same rule so that
/// every solver discretizes div(psi grad C) identically.
inline double face_conductance(double ka, double kb) {
    double kf = 0.5 * (ka + kb);
    if (ka * kb >= 0.0) {
        const double cap = 2.0 * std::min(std::abs(ka), std::abs(kb));
        kf = std::clamp(kf, -cap, cap);
    }
    return kf;
}

/// Calls fn(base) for every grid line running along `axis`, where base is the
/// flat index of the line's first node. Nodes along the line are then
/// base + q*stride(axis), q in [0, extent(axis)).
template <class F>
inline void for_each_line(const Grid& g, int axis, F&& fn) {
    const std::size_t st = g.stride(axis);
    const int n = g.extent(axis);
    const std::size_t total = g.size();
    const std::size_t line_span = st * static_cast<std::size_t>(n);
    // lines are enumerated by walking all nodes whose coordinate along `axis`
    // is zero: every index i with (i / st) % n == 0
    for (std::size_t block = 0; block < total; block += line_span)
        for (std::size_t off = 0; off < st; ++off) fn(block + off);
}

}  // namespace detail

/// Central differences inside, second-order one-sided stencils on no-flux and
/// fixed box faces, wrapped stencil on periodic faces.
inline VectorField gradient(const ScalarField& f) {
    const Grid& g = f.grid;
    VectorField out(g);
    const double inv2h = 1.0 / (2.0 * g.dx);
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        const bool periodic = g.bc_lo(a) == BoxBc::Periodic;
        std::vector<double>& d = out.comp[a];
        detail::for_each_line(g, a, [&](std::size_t base) {
            const double* p = f.v.data() + base;
            double* o = d.data() + base;
            if (periodic) {
                o[0] = (p[st] - p[st * (n - 1)]) * inv2h;
                o[st * (n - 1)] = (p[0] - p[st * (n - 2)]) * inv2h;
            } else {
                o[0] = (-3.0 * p[0] + 4.0 * p[st] - p[2 * st]) * inv2h;
                o[st * (n - 1)] = (3.0 * p[st * (n - 1)] - 4.0 * p[st * (n - 2)] +
                                   p[st * (n - 3)]) *
                                  inv2h;
            }
            for (int q = 1; q < n - 1; ++q)
                o[st * q] = (p[st * (q + 1)] - p[st * (q - 1)]) * inv2h;
        });
    }
    return out;
}

inline ScalarField magnitude(const VectorField& vf) {
    ScalarField out(vf.grid);
    const int d = vf.dim();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (int a = 0; a < d; ++a) s += vf.comp[a][i] * vf.comp[a][i];
        out.v[i] = std::sqrt(s);
    }
    return out;
}

/// 2d+1-point Laplacian. No-flux and fixed faces use a zero-flux ghost so the
/// stencil agrees with div_flux at the box boundary; periodic wraps.
inline ScalarField laplacian(const ScalarField& f) {
    const Grid& g = f.grid;
    ScalarField out(g, 0.0);
    const double invh2 = 1.0 / (g.dx * g.dx);
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        const bool periodic = g.bc_lo(a) == BoxBc::Periodic;
        detail::for_each_line(g, a, [&](std::size_t base) {
            const double* p = f.v.data() + base;
            double* o = out.v.data() + base;
            if (periodic) {
                o[0] += (p[st] - 2.0 * p[0] + p[st * (n - 1)]) * invh2;
                o[st * (n - 1)] +=
                    (p[0] - 2.0 * p[st * (n - 1)] + p[st * (n - 2)]) * invh2;
            } else {
                o[0] += (p[st] - p[0]) * invh2;
                o[st * (n - 1)] += (p[st * (n - 2)] - p[st * (n - 1)]) * invh2;
            }
            for (int q = 1; q < n - 1; ++q)
                o[st * q] += (p[st * (q + 1)] - 2.0 * p[st * q] + p[st * (q - 1)]) * invh2;
        });
    }
    return out;
}

/// Divergence of a nodal vector field, same stencil family as gradient.
inline ScalarField divergence(const VectorField& vf) {
    const Grid& g = vf.grid;
    ScalarField out(g, 0.0);
    const double inv2h = 1.0 / (2.0 * g.dx);
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        const bool periodic = g.bc_lo(a) == BoxBc::Periodic;
        const std::vector<double>& c = vf.comp[a];
        detail::for_each_line(g, a, [&](std::size_t base) {
            const double* p = c.data() + base;
            double* o = out.v.data() + base;
            if (periodic) {
                o[0] += (p[st] - p[st * (n - 1)]) * inv2h;
                o[st * (n - 1)] += (p[0] - p[st * (n - 2)]) * inv2h;
            } else {
                o[0] += (-3.0 * p[0] + 4.0 * p[st] - p[2 * st]) * inv2h;
                o[st * (n - 1)] += (3.0 * p[st * (n - 1)] - 4.0 * p[st * (n - 2)] +
                                    p[st * (n - 3)]) *
                                   inv2h;
            }
            for (int q = 1; q < n - 1; ++q)
                o[st * q] += (p[st * (q + 1)] - p[st * (q - 1)]) * inv2h;
        });
    }
    return out;
}

/// Conservative form of the divergence of psi*D*grad(C). Face conductance is
/// the arithmetic mean of the nodal psi*D, capped at twice the smaller
/// endpoint: across the exponential tail of psi the raw mean overweights the
/// large side, which distorts the tail flux and, once psi changes by more
/// than about 3x per cell, destabilizes the explicit update at any time step
/// honoring the bulk bound. The cap keeps the per-node rate below 4*D/h^2 per
/// axis for any psi profile. No-flux and fixed box faces carry zero flux;
/// periodic faces wrap. Faces touching a node with psi <= cutoff also carry
/// zero flux: such nodes sit outside the evolving region, and letting the
/// face conductance reach them turns the frozen exterior into a spurious
/// sink whose drain scales with the cutoff, not with the interface thickness.
namespace detail {

/// Core of div_flux with the nodal conductance k = psi*D already masked and
/// multiplied out; accumulates into out (cleared here). Steppers that march
/// many steps over a static psi cache k once and call this directly.
inline void div_flux_into(const ScalarField& psi, const ScalarField& k,
                          const ScalarField& C, double cutoff, ScalarField& out) {
    const Grid& g = C.grid;
    out.v.assign(g.size(), 0.0);
    const double invh2 = 1.0 / (g.dx * g.dx);
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        const bool periodic = g.bc_lo(a) == BoxBc::Periodic;
        detail::for_each_line(g, a, [&](std::size_t base) {
            const double* p = C.v.data() + base;
            const double* ps = psi.v.data() + base;
            const double* kc = k.v.data() + base;
            double* o = out.v.data() + base;
            auto face = [&](std::size_t qa, std::size_t qb) {
                if (ps[qa] <= cutoff || ps[qb] <= cutoff) return 0.0;
                return detail::face_conductance(kc[qa], kc[qb]) * (p[qb] - p[qa]);
            };
            double flux_lo;  // flux through the face below node q
            if (periodic) {
                flux_lo = face(st * (n - 1), 0);
            } else {
                flux_lo = 0.0;
            }
            for (int q = 0; q < n - 1; ++q) {
                const double flux_hi = face(st * q, st * (q + 1));
                o[st * q] += (flux_hi - flux_lo) * invh2;
                flux_lo = flux_hi;
            }
            double flux_top = 0.0;
            if (periodic) flux_top = face(st * (n - 1), 0);
            o[st * (n - 1)] += (flux_top - flux_lo) * invh2;
        });
    }
}

}  // namespace detail

inline ScalarField div_flux(const ScalarField& psi, const Coef& D, const ScalarField& C,
                            double cutoff = 0.0) {
    const Grid& g = C.grid;
    require_same_grid(psi.grid, g, "div_flux");
    D.require_grid(g, "div_flux");

    ScalarField k(g);
    for (std::size_t i = 0; i < k.size(); ++i)
        k.v[i] = psi.v[i] > cutoff ? psi.v[i] * D(i) : 0.0;

    ScalarField out(g);
    detail::div_flux_into(psi, k, C, cutoff, out);
    return out;
}

/// Volume integral with compensated summation; w defaults to 1.
inline double integrate(const ScalarField& f) {
    double sum = 0.0, carry = 0.0;
    for (double x : f.v) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    return sum * std::pow(f.grid.dx, f.grid.dim());
}

inline double integrate(const ScalarField& f, const ScalarField& w) {
    require_same_grid(f.grid, w.grid, "integrate");
    double sum = 0.0, carry = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        double y = f.v[i] * w.v[i] - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    return sum * std::pow(f.grid.dx, f.grid.dim());
}

inline double dot(const VectorField& a, const VectorField& b, std::size_t i) {
    double s = 0.0;
    for (int c = 0; c < a.dim(); ++c) s += a.comp[c][i] * b.comp[c][i];
    return s;
}

}  // namespace sbm

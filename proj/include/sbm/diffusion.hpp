#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "sbm/domain.hpp"
#include "sbm/grid.hpp"
#include "sbm/operators.hpp"

namespace sbm {

struct DiffusionParams {
    Coef D{1.0};
    Coef S{0.0};
    double dt = 0.0;
};

/// Interface boundary data. bn is the prescribed diffusive flux into the
/// solid (D times the concentration gradient along the outward normal), so
/// bn < 0 drains the solid through that part of the interface. bd is the
/// prescribed concentration value. The masks select where each condition
/// applies in mixed problems and must be disjoint 0/1 fields.
struct BoundarySpec {
    Coef bn{0.0};
    Coef bd{0.0};
    Coef neumann_mask{1.0};
    Coef dirichlet_mask{0.0};
};

/// 0/1 indicator of the half space above (high_side) or below a coordinate
/// threshold; the usual way to split an interface into BC regions.
inline ScalarField half_space_mask(const Grid& g, int axis, double pos, bool high_side) {
    ScalarField m(g);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double q = (axis == 0 ? i : (axis == 1 ? j : k)) * g.dx;
                m.at(i, j, k) = (q >= pos) == high_side ? 1.0 : 0.0;
            }
    return m;
}

namespace detail {

inline void check_stable_dt(double dt, double d_max, const Grid& g, const char* what) {
    if (d_max <= 0.0) throw std::invalid_argument(std::string(what) + ": max diffusivity must be positive");
    // the capped face conductance in div_flux admits per-node rates up to
    // twice the uniform-coefficient value, hence the extra factor 2
    const double bound = g.dx * g.dx / (4.0 * g.dim() * d_max);
    if (dt <= 0.0) throw std::invalid_argument(std::string(what) + ": dt must be positive");
    if (dt > bound * (1.0 + 1e-12))
        throw std::runtime_error(std::string(what) + ": dt " + std::to_string(dt) +
                                 " exceeds explicit stability bound " + std::to_string(bound));
}

inline void check_finite(const ScalarField& f, const char* what) {
    const std::size_t bad = f.first_non_finite();
    if (bad == f.size()) return;
    const Grid& g = f.grid;
    const int i = static_cast<int>(bad % g.nx);
    const int j = static_cast<int>((bad / g.nx) % g.ny);
    const int k = static_cast<int>(bad / (static_cast<std::size_t>(g.nx) * g.ny));
    throw std::runtime_error(std::string(what) + ": non-finite value at node (" +
                             std::to_string(i) + "," + std::to_string(j) + "," +
                             std::to_string(k) + ")");
}

inline void pin_fixed_faces(ScalarField& out, const ScalarField& before) {
    const Grid& g = out.grid;
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        if (g.bc_lo(a) == BoxBc::Fixed)
            for_each_line(g, a, [&](std::size_t base) { out.v[base] = before.v[base]; });
        if (g.bc_hi(a) == BoxBc::Fixed)
            for_each_line(g, a, [&](std::size_t base) {
                out.v[base + st * (n - 1)] = before.v[base + st * (n - 1)];
            });
    }
}

inline void check_disjoint_masks(const Coef& mn, const Coef& md, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double a = mn(i), b = md(i);
        if ((a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0))
            throw std::invalid_argument("step_mixed: masks must be 0/1 fields");
        if (a * b != 0.0)
            throw std::invalid_argument("step_mixed: Neumann and Dirichlet masks overlap");
    }
}

}  // namespace detail

/// Largest explicit step the graded diffusion term allows, times safety. The
/// bound dx^2/(4 dim D) is half the uniform-coefficient one; see div_flux.
inline double stable_dt(const DiffusionParams& p, const Grid& g, double safety = 0.4) {
    const double d_max = p.D.max_value();
    if (d_max <= 0.0) throw std::invalid_argument("stable_dt: max diffusivity must be positive");
    if (safety <= 0.0 || safety > 1.0) throw std::invalid_argument("stable_dt: safety must be in (0,1]");
    return safety * g.dx * g.dx / (4.0 * g.dim() * d_max);
}

/// One explicit step of the Neumann-type equation
///   psi dC/dt = div(psi D grad C) + |grad psi| bn + psi S,
/// divided through by psi; nodes with psi at or below the Neumann cutoff are
/// left untouched.
inline ScalarField step_neumann(const ScalarField& C, const DomainParameter& dp,
                                const DiffusionParams& p, const Coef& bn) {
    const Grid& g = C.grid;
    require_same_grid(dp.grid(), g, "step_neumann");
    p.D.require_grid(g, "step_neumann");
    p.S.require_grid(g, "step_neumann");
    bn.require_grid(g, "step_neumann");
    detail::check_stable_dt(p.dt, p.D.max_value(), g, "step_neumann");

    const double cut = dp.neumann_cutoff;
    const ScalarField flux = div_flux(dp.psi, p.D, C, cut);
    ScalarField out = C;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double psi = dp.psi.v[i];
        if (psi <= cut) continue;
        const double rhs = flux.v[i] + dp.grad_mag.v[i] * bn(i) + psi * p.S(i);
        out.v[i] += p.dt * rhs / psi;
    }
    detail::pin_fixed_faces(out, C);
    detail::check_finite(out, "step_neumann");
    return out;
}

/// One explicit step of the Dirichlet-type equation
///   psi^2 dC/dt = psi div(psi D grad C) - D[grad psi . grad(psi C) - bd |grad psi|^2] + psi^2 S,
/// divided through by psi^2 with the Dirichlet cutoff. The two interface
/// pieces are discretized together as grad psi . grad(psi (C - bd)) so that a
/// uniform state C = bd is an exact fixed point no matter how the cached
/// grad psi was obtained; splitting them only cancels when both gradients come
/// from the same difference stencil.
inline ScalarField step_dirichlet(const ScalarField& C, const DomainParameter& dp,
                                  const DiffusionParams& p, const Coef& bd) {
    const Grid& g = C.grid;
    require_same_grid(dp.grid(), g, "step_dirichlet");
    p.D.require_grid(g, "step_dirichlet");
    p.S.require_grid(g, "step_dirichlet");
    bd.require_grid(g, "step_dirichlet");
    detail::check_stable_dt(p.dt, p.D.max_value(), g, "step_dirichlet");

    const double cut = dp.dirichlet_cutoff;
    const ScalarField flux = div_flux(dp.psi, p.D, C, cut);
    ScalarField excess(g);
    for (std::size_t i = 0; i < excess.size(); ++i)
        excess.v[i] = dp.psi.v[i] * (C.v[i] - bd(i));
    const VectorField gpe = gradient(excess);

    ScalarField out = C;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double psi = dp.psi.v[i];
        if (psi <= cut) continue;
        const double rhs = psi * flux.v[i] - p.D(i) * dot(dp.grad_psi, gpe, i) +
                           psi * psi * p.S(i);
        out.v[i] += p.dt * rhs / (psi * psi);
    }
    detail::pin_fixed_faces(out, C);
    detail::check_finite(out, "step_dirichlet");
    return out;
}

/// One explicit step with both condition types applied on disjoint mask
/// regions of the interface:
///   psi^2 dC/dt = psi div(psi D grad C) + psi |grad psi| bn |_N
///                 - D[grad psi . grad(psi C) - bd |grad psi|^2] |_D + psi^2 S.
/// The Dirichlet piece uses the fused grad psi . grad(psi (C - bd)) form; see
/// step_dirichlet.
inline ScalarField step_mixed(const ScalarField& C, const DomainParameter& dp,
                              const DiffusionParams& p, const BoundarySpec& bc) {
    const Grid& g = C.grid;
    require_same_grid(dp.grid(), g, "step_mixed");
    p.D.require_grid(g, "step_mixed");
    p.S.require_grid(g, "step_mixed");
    bc.bn.require_grid(g, "step_mixed");
    bc.bd.require_grid(g, "step_mixed");
    bc.neumann_mask.require_grid(g, "step_mixed");
    bc.dirichlet_mask.require_grid(g, "step_mixed");
    detail::check_stable_dt(p.dt, p.D.max_value(), g, "step_mixed");
    detail::check_disjoint_masks(bc.neumann_mask, bc.dirichlet_mask, g.size());

    const double cut = dp.dirichlet_cutoff;
    const ScalarField flux = div_flux(dp.psi, p.D, C, cut);
    ScalarField excess(g);
    for (std::size_t i = 0; i < excess.size(); ++i)
        excess.v[i] = dp.psi.v[i] * (C.v[i] - bc.bd(i));
    const VectorField gpe = gradient(excess);

    ScalarField out = C;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double psi = dp.psi.v[i];
        if (psi <= cut) continue;
        double rhs = psi * flux.v[i] + psi * psi * p.S(i);
        rhs += bc.neumann_mask(i) * psi * dp.grad_mag.v[i] * bc.bn(i);
        rhs -= bc.dirichlet_mask(i) * p.D(i) * dot(dp.grad_psi, gpe, i);
        out.v[i] += p.dt * rhs / (psi * psi);
    }
    detail::pin_fixed_faces(out, C);
    detail::check_finite(out, "step_mixed");
    return out;
}

/// Vacancy/substitutional pair on a static lattice. The vacancy equation is
/// Dirichlet-type with boundary value xv_eq; the companion species receives
/// the matching source through the constraint term K so that lattice sites
/// displaced by injected vacancies carry composition with them.
struct CoupledSpeciesParams {
    double dvv = 1.0, dvb = 0.0, dbv = 0.0, dbb = 1.0;
    double xv_eq = 0.0;
};

namespace detail {
inline double coupled_spectral_radius(const CoupledSpeciesParams& p) {
    const double tr = p.dvv + p.dbb;
    const double det = p.dvv * p.dbb - p.dvb * p.dbv;
    const double disc = std::sqrt(std::max(tr * tr - 4.0 * det, 0.0));
    return std::max(std::abs(tr + disc), std::abs(tr - disc)) / 2.0;
}
}  // namespace detail

inline double stable_dt(const CoupledSpeciesParams& p, const Grid& g, double safety = 0.4) {
    const double rho = detail::coupled_spectral_radius(p);
    if (rho <= 0.0) throw std::invalid_argument("stable_dt: coupled diffusivity matrix is singular");
    if (safety <= 0.0 || safety > 1.0) throw std::invalid_argument("stable_dt: safety must be in (0,1]");
    return safety * g.dx * g.dx / (4.0 * g.dim() * rho);
}

inline std::pair<ScalarField, ScalarField> step_coupled_vacancy(
    const ScalarField& xv, const ScalarField& xb, const DomainParameter& dp,
    const CoupledSpeciesParams& p, double dt) {
    const Grid& g = xv.grid;
    require_same_grid(xb.grid, g, "step_coupled_vacancy");
    require_same_grid(dp.grid(), g, "step_coupled_vacancy");
    if (p.xv_eq < 0.0 || p.xv_eq >= 1.0)
        throw std::invalid_argument("step_coupled_vacancy: xv_eq must lie in [0,1)");
    detail::check_stable_dt(dt, detail::coupled_spectral_radius(p), g, "step_coupled_vacancy");

    const double cut = dp.dirichlet_cutoff;
    const ScalarField fvv = div_flux(dp.psi, Coef(p.dvv), xv, cut);
    const ScalarField fvb = div_flux(dp.psi, Coef(p.dvb), xb, cut);
    const ScalarField fbv = div_flux(dp.psi, Coef(p.dbv), xv, cut);
    const ScalarField fbb = div_flux(dp.psi, Coef(p.dbb), xb, cut);

    ScalarField excess(g);
    for (std::size_t i = 0; i < excess.size(); ++i)
        excess.v[i] = dp.psi.v[i] * (xv.v[i] - p.xv_eq);
    const VectorField gpv = gradient(excess);

    ScalarField xv_out = xv, xb_out = xb;
    for (std::size_t i = 0; i < xv_out.size(); ++i) {
        const double psi = dp.psi.v[i];
        if (psi <= cut) continue;
        const double K = p.dvv * dot(dp.grad_psi, gpv, i);
        const double rhs_v = psi * (fvv.v[i] + fvb.v[i]) - K;
        const double rhs_b = psi * (fbv.v[i] + fbb.v[i]) + xb.v[i] / (1.0 - p.xv_eq) * K;
        xv_out.v[i] += dt * rhs_v / (psi * psi);
        xb_out.v[i] += dt * rhs_b / (psi * psi);
    }
    detail::pin_fixed_faces(xv_out, xv);
    detail::pin_fixed_faces(xb_out, xb);
    detail::check_finite(xv_out, "step_coupled_vacancy");
    detail::check_finite(xb_out, "step_coupled_vacancy");
    return {std::move(xv_out), std::move(xb_out)};
}

}  // namespace sbm

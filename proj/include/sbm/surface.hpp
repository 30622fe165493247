#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbm/diffusion.hpp"
#include "sbm/domain.hpp"
#include "sbm/grid.hpp"
#include "sbm/operators.hpp"
#include "sbm/solvers.hpp"

namespace sbm {

/// Coefficients of the coupled surface-bulk transport model
///   (psi + L|grad psi|) dC/dt = Db div(psi grad C)
///                               + |grad psi| (l Ds Lap_s C - kappa C),
/// where Lap_s is the Laplacian along the diffuse interface. L is the excess
/// surface capacity, l the physical thickness the surface layer represents.
struct SurfaceBulkParams {
    double Db = 1.0;     // bulk diffusivity
    double Ds = 0.0;     // surface diffusivity
    double kappa = 0.0;  // first-order surface reaction rate
    double L = 0.0;      // surface capacity coefficient
    double l = 0.0;      // surface layer thickness
};

namespace detail {

inline void check_surface_params(const SurfaceBulkParams& p, const char* what) {
    if (!(p.Db > 0.0))
        throw std::invalid_argument(std::string(what) + ": Db must be positive");
    if (p.Ds < 0.0 || p.kappa < 0.0 || p.L < 0.0)
        throw std::invalid_argument(std::string(what) +
                                    ": Ds, kappa and L must be nonnegative");
    if (p.Ds > 0.0 && !(p.l > 0.0))
        throw std::invalid_argument(std::string(what) +
                                    ": l must be positive when Ds > 0");
}

/// Surface flux j_s = -l Ds [(grad C) . s] s with s the unit tangent along
/// the interface in the plane spanned by grad C and the normal. Evaluated as
/// -l Ds times the tangential projection grad C - n (n . grad C), which is
/// what the frame construction reduces to in 2D and 3D alike and which stays
/// smooth when grad C is parallel to n. Zero where |grad psi| < grad_tol:
/// there is no surface there to carry flux.
inline VectorField surface_flux(const ScalarField& C, const DomainParameter& dp,
                                const SurfaceBulkParams& p) {
    const Grid& g = C.grid;
    const int d = g.dim();
    VectorField j(g);
    if (p.Ds == 0.0) return j;
    const VectorField gc = gradient(C);
    for (std::size_t i = 0; i < C.size(); ++i) {
        const double gm = dp.grad_mag.v[i];
        if (gm < dp.grad_tol) continue;
        double proj = 0.0;
        for (int a = 0; a < d; ++a) proj += dp.grad_psi.comp[a][i] * gc.comp[a][i];
        proj /= gm * gm;
        for (int a = 0; a < d; ++a)
            j.comp[a][i] =
                -p.l * p.Ds * (gc.comp[a][i] - proj * dp.grad_psi.comp[a][i]);
    }
    return j;
}

}  // namespace detail

/// l Ds times the surface Laplacian of C along the diffuse interface,
/// realized as minus the divergence of the tangential surface flux.
/// Identically zero wherever |grad psi| < grad_tol.
inline ScalarField surface_laplacian(const ScalarField& C, const DomainParameter& dp,
                                     const SurfaceBulkParams& p) {
    require_same_grid(dp.grid(), C.grid, "surface_laplacian");
    detail::check_surface_params(p, "surface_laplacian");
    ScalarField out = divergence(detail::surface_flux(C, dp, p));
    for (std::size_t i = 0; i < out.size(); ++i)
        out.v[i] = dp.grad_mag.v[i] < dp.grad_tol ? 0.0 : -out.v[i];
    return out;
}

enum class SurfaceMode {
    Coupled,      // full surface-bulk equation
    SurfaceOnly,  // L dC/dt = -div j_s, transport along the interface alone
};

/// Largest stable explicit step for step_surface_bulk, times safety. The bulk
/// rate is bounded by 4*dim*Db/h^2 (capped face conductances), the surface
/// diffusion and reaction rates carry the local weight |grad psi| / (psi +
/// L |grad psi|), whose maximum over active nodes multiplies their stiffness.
inline double stable_dt(const SurfaceBulkParams& p, const DomainParameter& dp,
                        double safety = 0.4) {
    detail::check_surface_params(p, "stable_dt");
    if (safety <= 0.0 || safety > 1.0)
        throw std::invalid_argument("stable_dt: safety must be in (0,1]");
    const Grid& g = dp.grid();
    double smax = 0.0;
    for (std::size_t i = 0; i < dp.psi.size(); ++i) {
        const double w = dp.psi.v[i] + p.L * dp.grad_mag.v[i];
        if (w <= dp.neumann_cutoff) continue;
        smax = std::max(smax, dp.grad_mag.v[i] / w);
    }
    const double h2 = g.dx * g.dx;
    const double rate = 4.0 * g.dim() * p.Db / h2 +
                        smax * (p.l * p.Ds * g.dim() / h2 + p.kappa);
    return safety / rate;
}

/// One explicit Euler step of the coupled surface-bulk equation (see
/// SurfaceBulkParams). Nodes with psi + L|grad psi| below the Neumann cutoff
/// are frozen. In SurfaceOnly mode the update is C -= dt/L div j_s applied on
/// the natural support of the divergence stencil, so the discrete sum of C is
/// conserved exactly by telescoping; masking the output would break that at
/// the fringe of the interface band.
inline ScalarField step_surface_bulk(const ScalarField& C, const DomainParameter& dp,
                                     const SurfaceBulkParams& p, double dt,
                                     SurfaceMode mode = SurfaceMode::Coupled) {
    const Grid& g = C.grid;
    require_same_grid(dp.grid(), g, "step_surface_bulk");
    detail::check_surface_params(p, "step_surface_bulk");
    if (!(dt > 0.0)) throw std::invalid_argument("step_surface_bulk: dt must be positive");

    ScalarField out = C;
    if (mode == SurfaceMode::SurfaceOnly) {
        if (!(p.L > 0.0))
            throw std::invalid_argument("step_surface_bulk: surface-only mode needs L > 0");
        const ScalarField div_j = divergence(detail::surface_flux(C, dp, p));
        for (std::size_t i = 0; i < out.size(); ++i)
            out.v[i] -= dt / p.L * div_j.v[i];
    } else {
        if (dt > stable_dt(p, dp, 1.0) * (1.0 + 1e-12))
            throw std::runtime_error(
                "step_surface_bulk: dt exceeds the explicit stability bound");
        const double cut = dp.neumann_cutoff;
        const ScalarField flux = div_flux(dp.psi, Coef(p.Db), C, cut);
        const ScalarField sl = surface_laplacian(C, dp, p);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double gm = dp.grad_mag.v[i];
            const double w = dp.psi.v[i] + p.L * gm;
            if (w <= cut) continue;
            const double rhs = flux.v[i] + gm * (sl.v[i] - p.kappa * C.v[i]);
            out.v[i] += dt * rhs / w;
        }
    }
    detail::pin_fixed_faces(out, C);
    detail::check_finite(out, "step_surface_bulk");
    return out;
}

/// Steady sinusoidal-drive amplitude problem
///   div(psi grad Ct) - |grad psi| kappa Ct = i omega psi Ct
/// for the complex amplitude Ct, driven by Ct = 1 on the low box face of
/// `axis` and Ct = 0 on the high face; the remaining faces close with zero
/// gradient. omega = 0 recovers plain steady reaction-diffusion.
struct ACProblem {
    double omega = 0.0;    // drive frequency
    double kappa = 0.0;    // surface reaction rate
    int axis = 1;          // driven axis
    double tol = 1e-8;     // relative residual target, L-inf over psi >= 0.5
    int max_cycles = 400;  // parameter-ladder cycles before giving up
};

/// Solves the ACProblem by alternating-direction pseudo-time iteration with a
/// geometric ladder of step sizes. Each sweep is the Douglas-Gunn splitting,
/// one implicit tridiagonal stage per axis; the i*omega*psi and reaction
/// terms are split evenly across the stage diagonals and kept implicit
/// (relaxing them explicitly diverges once omega exceeds the smallest
/// diffusion eigenvalue). The complex line solves realize the 2x2 real block
/// structure of the coupled real/imaginary pair. Residuals are recorded per
/// accepted ladder cycle and decrease monotonically; a cycle that fails to
/// improve is rolled back and the ladder shortened. Throws std::runtime_error
/// with the residual history when max_cycles ladders do not reach tol.
inline ComplexField solve_ac_steady(const ACProblem& pr, const DomainParameter& dp,
                                    ConvergenceReport* report = nullptr) {
    const Grid& g = dp.grid();
    const int d = g.dim();
    if (pr.omega < 0.0)
        throw std::invalid_argument("solve_ac_steady: omega must be nonnegative");
    if (pr.kappa < 0.0)
        throw std::invalid_argument("solve_ac_steady: kappa must be nonnegative");
    if (pr.axis < 0 || pr.axis >= d)
        throw std::invalid_argument("solve_ac_steady: driven axis outside grid dimension");
    if (!(pr.tol > 0.0) || pr.max_cycles < 1)
        throw std::invalid_argument("solve_ac_steady: tol and max_cycles must be positive");
    for (int a = 0; a < d; ++a)
        if (g.bc_lo(a) == BoxBc::Periodic)
            throw std::invalid_argument("solve_ac_steady: periodic boxes are not supported");

    using cplx = std::complex<double>;
    const std::size_t N = g.size();
    const double h2 = g.dx * g.dx;

    // face conductances of div(psi grad .), pre-divided by h^2; k[a][i]
    // couples node i to its +a neighbor
    std::array<std::vector<double>, 3> k;
    for (int a = 0; a < d; ++a) {
        k[a].assign(N, 0.0);
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        detail::for_each_line(g, a, [&](std::size_t base) {
            for (int q = 0; q + 1 < n; ++q) {
                const std::size_t i = base + st * q;
                k[a][i] = detail::face_conductance(dp.psi.v[i], dp.psi.v[i + st]) / h2;
            }
        });
    }

    // zeroth-order coefficient of A = -div(psi grad .) + z
    std::vector<cplx> z(N);
    for (std::size_t i = 0; i < N; ++i)
        z[i] = cplx(dp.grad_mag.v[i] * pr.kappa, pr.omega * dp.psi.v[i]);

    const std::size_t ast = g.stride(pr.axis);
    const int an = g.extent(pr.axis);
    std::vector<char> pinned(N, 0);
    std::vector<double> pinval(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const int c = static_cast<int>((i / ast) % static_cast<std::size_t>(an));
        if (c == 0) {
            pinned[i] = 1;
            pinval[i] = 1.0;
        } else if (c == an - 1) {
            pinned[i] = 1;
        }
    }

    auto apply_axis = [&](int a, const std::vector<cplx>& c, std::vector<cplx>& out) {
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        const std::vector<double>& ka = k[a];
        detail::for_each_line(g, a, [&](std::size_t base) {
            for (int q = 0; q < n; ++q) {
                const std::size_t i = base + st * q;
                cplx acc = 0.0;
                if (q > 0) acc += ka[i - st] * (c[i] - c[i - st]);
                if (q + 1 < n) acc += ka[i] * (c[i] - c[i + st]);
                out[i] += acc;
            }
        });
    };
    auto apply_A = [&](const std::vector<cplx>& c, std::vector<cplx>& out) {
        for (std::size_t i = 0; i < N; ++i) out[i] = z[i] * c[i];
        for (int a = 0; a < d; ++a) apply_axis(a, c, out);
    };

    std::vector<cplx> C(N), prev(N), rhs(N), ax(N), scratch(N), x;
    for (std::size_t i = 0; i < N; ++i) {
        const int c = static_cast<int>((i / ast) % static_cast<std::size_t>(an));
        C[i] = pinned[i] ? cplx(pinval[i])
                         : cplx(1.0 - static_cast<double>(c) / (an - 1));
    }

    // residual over every unpinned row: the sub-0.5 side of the interface
    // band carries order-one conductances into the bulk, so leaving it out of
    // the norm can declare convergence while the bulk values are still wrong
    auto residual = [&](const std::vector<cplx>& c) {
        apply_A(c, scratch);
        double r = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            if (!pinned[i]) r = std::max(r, std::abs(scratch[i]));
        return r;
    };

    // the stiffest row scale; residuals are reported relative to it times the
    // unit drive amplitude, so "converged" does not depend on how good the
    // initial guess happens to be
    double dmax = 0.0;
    std::vector<double> rowscale(N, 0.0);
    for (int a = 0; a < d; ++a) {
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        detail::for_each_line(g, a, [&](std::size_t base) {
            for (int q = 0; q < n; ++q) {
                const std::size_t i = base + st * q;
                if (q > 0) rowscale[i] += k[a][i - st];
                if (q + 1 < n) rowscale[i] += k[a][i];
            }
        });
    }
    for (std::size_t i = 0; i < N; ++i) {
        rowscale[i] += std::abs(z[i]);
        dmax = std::max(dmax, rowscale[i]);
    }

    ConvergenceReport rep;
    rep.tolerance = pr.tol;
    auto pack = [&](const std::vector<cplx>& c) {
        ComplexField F(g);
        for (std::size_t i = 0; i < N; ++i) {
            F.re.v[i] = c[i].real();
            F.im.v[i] = c[i].imag();
        }
        return F;
    };
    if (dmax < 1e-300) {  // degenerate domain, nothing couples
        rep.converged = true;
        if (report) *report = rep;
        return pack(C);
    }
    {
        const double rel0 = residual(C) / dmax;
        if (rel0 <= pr.tol) {
            rep.converged = true;
            rep.residuals.push_back(rel0);
            if (report) *report = rep;
            return pack(C);
        }
    }

    // pseudo-time ladder from the stiffest rate down past both the
    // domain-scale rate and the weakest row that still has to meet the
    // tolerance (interface tails relax at rates proportional to their tiny
    // conductances, so the ladder has to reach them)
    const double pi = std::acos(-1.0);
    const double tau_min = 1.0 / dmax;
    const double axis_len = (an - 1) * g.dx;
    double rmin = dmax;
    for (std::size_t i = 0; i < N; ++i)
        if (!pinned[i] && rowscale[i] > pr.tol * dmax)
            rmin = std::min(rmin, rowscale[i]);
    double tau_max = std::max(16.0 * std::pow(2.0 * axis_len / pi, 2), 16.0 / rmin);

    ComplexTridiagonalSystem sys;
    auto dg_sweep = [&](double tau) {
        const double ht = 0.5 * tau;
        prev = C;
        apply_A(prev, scratch);
        for (std::size_t i = 0; i < N; ++i) rhs[i] = prev[i] - tau * scratch[i];
        for (int a = 0; a < d; ++a) {
            std::fill(ax.begin(), ax.end(), cplx(0.0));
            apply_axis(a, prev, ax);
            for (std::size_t i = 0; i < N; ++i)
                rhs[i] += ht * (ax[i] + z[i] / static_cast<double>(d) * prev[i]);
            const std::size_t st = g.stride(a);
            const int n = g.extent(a);
            const std::vector<double>& ka = k[a];
            detail::for_each_line(g, a, [&](std::size_t base) {
                sys.resize(n);
                for (int q = 0; q < n; ++q) {
                    const std::size_t i = base + st * q;
                    if (pinned[i]) {
                        sys.diag[q] = 1.0;
                        sys.rhs[q] = pinval[i];
                        continue;
                    }
                    const double kl = q > 0 ? ka[i - st] : 0.0;
                    const double kr = q + 1 < n ? ka[i] : 0.0;
                    sys.lower[q] = -ht * kl;
                    sys.upper[q] = -ht * kr;
                    sys.diag[q] = 1.0 + ht * (kl + kr) +
                                  ht * z[i] / static_cast<double>(d);
                    sys.rhs[q] = rhs[i];
                }
                thomas_solve(sys, x);
                for (int q = 0; q < n; ++q) C[base + st * q] = x[q];
            });
            if (a + 1 < d)
                for (std::size_t i = 0; i < N; ++i) rhs[i] = C[i];
        }
    };

    std::vector<cplx> best = C;
    double best_res = std::numeric_limits<double>::max();
    for (int cycle = 0; cycle < pr.max_cycles; ++cycle) {
        for (double tau = tau_min; tau <= tau_max * (1.0 + 1e-12); tau *= 4.0)
            dg_sweep(std::min(tau, tau_max));
        rep.iterations = cycle + 1;
        const double rel = residual(C) / dmax;
        if (rel < best_res) {
            best_res = rel;
            best = C;
            rep.residuals.push_back(rel);
            if (rel <= pr.tol) {
                rep.converged = true;
                break;
            }
        } else {
            // no progress at this ladder; retry from the best iterate with a
            // shorter one
            C = best;
            tau_max = std::max(tau_max * 0.25, 16.0 * tau_min);
        }
    }
    if (report) *report = rep;
    if (!rep.converged) {
        std::string hist;
        char buf[32];
        const std::size_t nh = rep.residuals.size();
        for (std::size_t i = nh > 4 ? nh - 4 : 0; i < nh; ++i) {
            std::snprintf(buf, sizeof buf, " %.3e", rep.residuals[i]);
            hist += buf;
        }
        throw std::runtime_error("solve_ac_steady: no convergence after " +
                                 std::to_string(rep.iterations) +
                                 " cycles; residual tail" + hist);
    }
    return pack(best);
}

namespace detail {

inline double cylinder_cell(const char* what, double R, double length, int nr, int nz,
                            int& iR) {
    if (!(R > 0.0) || !(length > 0.0))
        throw std::invalid_argument(std::string(what) + ": R and length must be positive");
    if (nr < 4 || nz < 4)
        throw std::invalid_argument(std::string(what) + ": grid too small");
    const double h = length / (nz - 1);
    iR = static_cast<int>(std::lround(R / h));
    if (std::abs(iR * h - R) > 1e-9 * R)
        throw std::invalid_argument(std::string(what) +
                                    ": R must be a whole number of cells");
    if (iR < 2 || iR > nr - 2)
        throw std::invalid_argument(std::string(what) +
                                    ": R must leave at least two rows on each side");
    return h;
}

}  // namespace detail

/// Sharp-interface reference for the cylinder problem: a solid cylinder of
/// radius R and the given length, C = 1 held on the z = 0 cross-section,
/// no-flux at z = length and on the axis, and the flux balance
///   Db dC/dn = l Ds d2C/dz2 - kappa C   (n outward)
/// on the lateral surface r = R. Axisymmetric finite differences on square
/// cells (nr x nz nodes, cell = length/(nz-1), R on a node row), marched in
/// time from C = 1 until max|dC/dt| < 1e-10 max|C|. The surface row treats
/// its reaction and surface-diffusion terms implicitly with one tridiagonal
/// solve along z per step; they carry an h^-3 stiffness that would otherwise
/// throttle the explicit step. Returns the field on an (r, z) grid with
/// rows beyond R zeroed.
inline ScalarField solve_cylinder_sharp(const SurfaceBulkParams& p, double R,
                                        double length, int nr, int nz,
                                        long max_steps = 5000000) {
    detail::check_surface_params(p, "solve_cylinder_sharp");
    int iR = 0;
    const double h = detail::cylinder_cell("solve_cylinder_sharp", R, length, nr, nz, iR);
    const double h2 = h * h;

    std::vector<double> C(static_cast<std::size_t>(nr) * nz, 0.0);
    auto at = [&](int i, int j) -> double& { return C[i + static_cast<std::size_t>(nr) * j]; };
    for (int j = 0; j < nz; ++j)
        for (int i = 0; i <= iR; ++i) at(i, j) = 1.0;

    // explicit rate bound: interior rows see (r+ + r-)/r + 2 = 4 in units of
    // Db/h^2, the axis sees 4 + 2, the surface row its inner face plus the
    // axial pair (its stiff terms are implicit)
    const double rtilde = R - 0.25 * h;  // surface half-cell centroid radius
    const double beta = 2.0 * (R - 0.5 * h) * p.Db / (rtilde * h2);  // inner face
    const double rate = std::max(6.0 * p.Db / h2, beta + 2.0 * p.Db / h2);
    const double dt = 0.9 / rate;
    const double gamma = 2.0 * R / (rtilde * h);  // lateral surface weight

    std::vector<double> E(nz), Cn(C);
    TridiagonalSystem sys;
    std::vector<double> xsol;
    const double eg = dt * gamma * p.l * p.Ds / h2;

    long step = 0;
    for (; step < max_steps; ++step) {
        double maxd = 0.0;
        Cn = C;
        // bulk and axis rows, explicit
        for (int j = 1; j < nz; ++j) {
            const int jm = j - 1, jp = j == nz - 1 ? nz - 2 : j + 1;
            for (int i = 0; i < iR; ++i) {
                const double zlap = at(i, jp) - 2.0 * at(i, j) + at(i, jm);
                double rad;
                if (i == 0)
                    rad = 4.0 * (at(1, j) - at(0, j));
                else
                    rad = ((i + 0.5) * (at(i + 1, j) - at(i, j)) -
                           (i - 0.5) * (at(i, j) - at(i - 1, j))) /
                          i;
                const double d = dt * p.Db * (rad + zlap) / h2;
                Cn[i + static_cast<std::size_t>(nr) * j] += d;
                maxd = std::max(maxd, std::abs(d));
            }
        }
        // surface row: explicit bulk terms, implicit reaction and surface
        // diffusion along z
        for (int j = 1; j < nz; ++j) {
            const int jm = j - 1, jp = j == nz - 1 ? nz - 2 : j + 1;
            const double zlap = at(iR, jp) - 2.0 * at(iR, j) + at(iR, jm);
            E[j] = p.Db * zlap / h2 + beta * (at(iR - 1, j) - at(iR, j));
        }
        sys.resize(nz);
        sys.diag[0] = 1.0;
        sys.rhs[0] = 1.0;
        for (int j = 1; j < nz; ++j) {
            sys.lower[j] = -eg;
            sys.upper[j] = -eg;
            sys.diag[j] = 1.0 + dt * gamma * p.kappa + 2.0 * eg;
            sys.rhs[j] = at(iR, j) + dt * E[j];
        }
        sys.upper[nz - 1] = 0.0;
        sys.lower[nz - 1] = -2.0 * eg;  // mirror closure at z = length
        thomas_solve(sys, xsol);
        for (int j = 1; j < nz; ++j) {
            const double d = xsol[j] - at(iR, j);
            Cn[iR + static_cast<std::size_t>(nr) * j] = xsol[j];
            maxd = std::max(maxd, std::abs(d));
        }
        C.swap(Cn);
        double cmax = 0.0;
        for (double v : C) cmax = std::max(cmax, std::abs(v));
        if (maxd <= 1e-10 * dt * std::max(cmax, 1e-300)) break;
    }
    if (step == max_steps)
        throw std::runtime_error("solve_cylinder_sharp: no steady state within step budget");

    ScalarField out(make_grid_2d(nr, nz, h));
    out.v = C;
    return out;
}

/// Smoothed-boundary solution of the same cylinder problem in axisymmetric
/// coordinates. The cylinder is represented by the radial profile
///   psi(r) = (1 - tanh(2 atanh(0.8) (r - R)/xi)) / 2,
/// xi being the 0.1..0.9 width of the interface band, and the steady limit of
///   (psi + ...) dC/dt = Db (1/r) d/dr(r psi dC/dr) + Db d/dz(psi dC/dz)
///                       + |grad psi| (l Ds d2C/dz2 - kappa C)
/// is solved directly by Peaceman-Rachford alternating-direction iteration
/// with a geometric parameter ladder (the interface tangent is the z axis, so
/// the surface Laplacian is the plain second z derivative). C = 1 is held on
/// the whole z = 0 plane; everything else closes with no flux. The radial and
/// axial operators each carry half of the reaction term so both stay positive
/// semidefinite. Returns the field on the same (r, z) grid layout as
/// solve_cylinder_sharp.
inline ScalarField solve_cylinder_sbm(const SurfaceBulkParams& p, double R,
                                      double length, int nr, int nz, double xi,
                                      double tol = 1e-9, int max_cycles = 200,
                                      ConvergenceReport* report = nullptr) {
    detail::check_surface_params(p, "solve_cylinder_sbm");
    int iR = 0;
    const double h = detail::cylinder_cell("solve_cylinder_sbm", R, length, nr, nz, iR);
    if (!(xi > 0.0) || xi < 4.0 * h)
        throw std::invalid_argument(
            "solve_cylinder_sbm: interface needs at least 4 cells across xi");
    const double h2 = h * h;
    const double sc = 2.0 * std::atanh(0.8) / xi;

    std::vector<double> psi(nr), gm(nr);
    for (int i = 0; i < nr; ++i) {
        const double u = sc * (i * h - R);
        psi[i] = 0.5 * (1.0 - std::tanh(u));
        const double ch = std::cosh(u);
        gm[i] = 0.5 * sc / (ch * ch);
    }

    // radial face conductances r_{i+1/2} Db fc(psi_i, psi_{i+1}) / h^2 and the
    // per-row axial coefficient (Db psi + |grad psi| l Ds) / h^2, constant
    // along z
    std::vector<double> kr(nr, 0.0), qz(nr), hdiag(nr), react(nr);
    for (int i = 0; i + 1 < nr; ++i)
        kr[i] = (i + 0.5) * p.Db * detail::face_conductance(psi[i], psi[i + 1]) / h2;
    for (int i = 0; i < nr; ++i) {
        qz[i] = (p.Db * psi[i] + gm[i] * p.l * p.Ds) / h2;
        react[i] = 0.5 * gm[i] * p.kappa;
    }
    hdiag[0] = 4.0 * p.Db * detail::face_conductance(psi[0], psi[1]) / h2;
    for (int i = 1; i < nr; ++i)
        hdiag[i] = (kr[i - 1] + (i + 1 < nr ? kr[i] : 0.0)) / i;

    const std::size_t N = static_cast<std::size_t>(nr) * nz;
    std::vector<double> C(N, 0.0), Cs(N), rhs(N);
    for (int i = 0; i < nr; ++i) C[i] = 1.0;  // pinned inlet plane

    // H = radial operator + react, V = axial operator + react
    auto apply_H = [&](const std::vector<double>& c, std::vector<double>& out) {
        for (int j = 0; j < nz; ++j) {
            const std::size_t b = static_cast<std::size_t>(nr) * j;
            out[b] = (hdiag[0] + react[0]) * c[b] - hdiag[0] * c[b + 1];
            for (int i = 1; i < nr; ++i) {
                double acc = (hdiag[i] + react[i]) * c[b + i];
                acc -= kr[i - 1] / i * c[b + i - 1];
                if (i + 1 < nr) acc -= kr[i] / i * c[b + i + 1];
                out[b + i] = acc;
            }
        }
    };
    auto apply_V = [&](const std::vector<double>& c, std::vector<double>& out) {
        for (int i = 0; i < nr; ++i) {
            for (int j = 0; j < nz; ++j) {
                const std::size_t n0 = i + static_cast<std::size_t>(nr) * j;
                const int jm = j > 0 ? j - 1 : 1, jp = j < nz - 1 ? j + 1 : nz - 2;
                const double zlap = c[i + static_cast<std::size_t>(nr) * jp] -
                                    2.0 * c[n0] +
                                    c[i + static_cast<std::size_t>(nr) * jm];
                out[n0] = -qz[i] * zlap + react[i] * c[n0];
            }
        }
    };

    // residual over every row off the pinned plane; restricting it to the
    // solid would let the strongly coupled sub-0.5 half of the band converge
    // to the wrong values unnoticed
    auto residual = [&](const std::vector<double>& c) {
        apply_H(c, Cs);
        apply_V(c, rhs);
        double r = 0.0;
        for (std::size_t n0 = nr; n0 < N; ++n0)
            r = std::max(r, std::abs(Cs[n0] + rhs[n0]));
        return r;
    };

    ConvergenceReport rep;
    rep.tolerance = tol;
    const double r0 = residual(C);
    if (r0 < 1e-300) {
        if (report) *report = rep;
        ScalarField out(make_grid_2d(nr, nz, h));
        out.v = C;
        return out;
    }

    double sig_hi = 0.0;
    for (int i = 0; i < nr; ++i)
        sig_hi = std::max(sig_hi, hdiag[i] + 2.0 * qz[i] + 2.0 * react[i]);
    const double pi = std::acos(-1.0);
    double sig_lo = 0.25 * p.Db * std::pow(pi / (2.0 * length), 2);

    TridiagonalSystem sys;
    std::vector<double> x;
    auto half_sweeps = [&](double sig) {
        // (sig + H) C* = (sig - V) C, solved line by line along r
        apply_V(C, rhs);
        for (int j = 0; j < nz; ++j) {
            const std::size_t b = static_cast<std::size_t>(nr) * j;
            sys.resize(nr);
            if (j == 0) {
                for (int i = 0; i < nr; ++i) {
                    sys.diag[i] = 1.0;
                    sys.rhs[i] = 1.0;
                }
            } else {
                sys.diag[0] = sig + hdiag[0] + react[0];
                sys.upper[0] = -hdiag[0];
                sys.rhs[0] = sig * C[b] - rhs[b];
                for (int i = 1; i < nr; ++i) {
                    sys.diag[i] = sig + hdiag[i] + react[i];
                    sys.lower[i] = -kr[i - 1] / i;
                    if (i + 1 < nr) sys.upper[i] = -kr[i] / i;
                    sys.rhs[i] = sig * C[b + i] - rhs[b + i];
                }
            }
            thomas_solve(sys, x);
            for (int i = 0; i < nr; ++i) Cs[b + i] = x[i];
        }
        // (sig + V) C = (sig - H) C*, solved line by line along z
        apply_H(Cs, rhs);
        for (int i = 0; i < nr; ++i) {
            sys.resize(nz);
            sys.diag[0] = 1.0;
            sys.rhs[0] = 1.0;
            for (int j = 1; j < nz; ++j) {
                const std::size_t n0 = i + static_cast<std::size_t>(nr) * j;
                sys.diag[j] = sig + 2.0 * qz[i] + react[i];
                sys.lower[j] = -qz[i];
                sys.upper[j] = -qz[i];
                sys.rhs[j] = sig * Cs[n0] - rhs[n0];
            }
            sys.upper[nz - 1] = 0.0;
            sys.lower[nz - 1] = -2.0 * qz[i];  // mirror closure
            thomas_solve(sys, x);
            for (int j = 0; j < nz; ++j) C[i + static_cast<std::size_t>(nr) * j] = x[j];
        }
    };

    std::vector<double> best = C;
    double best_res = std::numeric_limits<double>::max();
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        for (double sig = sig_lo; sig <= sig_hi * (1.0 + 1e-12); sig *= 4.0)
            half_sweeps(sig);
        rep.iterations = cycle + 1;
        const double rel = residual(C) / r0;
        if (rel < best_res) {
            best_res = rel;
            best = C;
            rep.residuals.push_back(rel);
            if (rel <= tol) {
                rep.converged = true;
                break;
            }
        } else {
            C = best;
            sig_lo = std::min(sig_lo * 4.0, 0.25 * sig_hi);
        }
    }
    if (report) *report = rep;
    if (!rep.converged) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", best_res);
        throw std::runtime_error("solve_cylinder_sbm: no convergence after " +
                                 std::to_string(rep.iterations) + " cycles, residual " +
                                 buf);
    }

    ScalarField out(make_grid_2d(nr, nz, h));
    out.v = best;
    return out;
}

}  // namespace sbm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sbm/diffusion.hpp"
#include "sbm/domain.hpp"
#include "sbm/grid.hpp"
#include "sbm/operators.hpp"

namespace sbm {

/// Parameters of the smoothed-boundary Allen-Cahn / Cahn-Hilliard dynamics.
/// theta is the contact angle in degrees (uniform or per node); jn is the
/// order-parameter flux through the domain wall, used by the conserved
/// dynamics only.
struct PhaseFieldParams {
    double M = 1.0;
    double eps = 1.0;
    Coef theta{90.0};
    Coef jn{0.0};
};

enum class PhaseDynamics { AllenCahn, CahnHilliard };

/// Double-well density f = phi^2 (1-phi)^2 and its derivative.
inline std::pair<double, double> double_well(double phi) {
    const double q = phi * (1.0 - phi);
    return {q * q, 2.0 * q * (1.0 - 2.0 * phi)};
}

/// sqrt(2 f(phi)) in closed form: sqrt(2) |phi (1 - phi)|. The abs replaces a
/// sqrt of the squared product, which keeps the potential loops vectorizable.
inline double wall_energy(double phi) {
    const double q = phi * (1.0 - phi);
    return std::sqrt(2.0) * std::abs(q);
}

namespace detail {

/// Per-axis face conductances of div_flux frozen for a static psi: entry
/// [a][idx] holds the conductance of the face between node idx and its
/// neighbor one stride up axis a (the wrap face for periodic axes sits at the
/// line's last node). apply_face_div then reproduces div_flux_into bit for
/// bit while skipping the per-face masking and capping work.
struct FaceCache {
    std::array<ScalarField, 3> f;
};

inline FaceCache build_face_cache(const ScalarField& psi, const ScalarField& k,
                                  double cutoff) {
    const Grid& g = psi.grid;
    FaceCache fc;
    for (int a = 0; a < g.dim(); ++a) {
        fc.f[a] = ScalarField(g);
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        const bool periodic = g.bc_lo(a) == BoxBc::Periodic;
        detail::for_each_line(g, a, [&](std::size_t base) {
            const double* ps = psi.v.data() + base;
            const double* kc = k.v.data() + base;
            double* o = fc.f[a].v.data() + base;
            auto face = [&](std::size_t qa, std::size_t qb) {
                if (ps[qa] <= cutoff || ps[qb] <= cutoff) return 0.0;
                return detail::face_conductance(kc[qa], kc[qb]);
            };
            for (int q = 0; q < n - 1; ++q) o[st * q] = face(st * q, st * (q + 1));
            o[st * (n - 1)] = periodic ? face(st * (n - 1), 0) : 0.0;
        });
    }
    return fc;
}

inline void apply_face_div(const FaceCache& fc, const ScalarField& C, ScalarField& out,
                           ScalarField& scratch) {
    const Grid& g = C.grid;
    const std::size_t sz = g.size();
    out.v.assign(sz, 0.0);
    if (scratch.v.size() != sz) scratch = ScalarField(g);
    const double invh2 = 1.0 / (g.dx * g.dx);
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t st = g.stride(a);
        const int n = g.extent(a);
        if (g.bc_lo(a) != BoxBc::Periodic) {
            // Line tops carry kf = 0, so a flat pass over the whole array is
            // safe: the out-of-line neighbor read lands in the next line but
            // is multiplied away, and the zero top flux doubles as the zero
            // lower flux of the following line. Node-for-node the arithmetic
            // matches the per-line walk; these flat loops just vectorize.
            const double* p = C.v.data();
            const double* kf = fc.f[a].v.data();
            double* F = scratch.v.data();
            double* o = out.v.data();
            for (std::size_t i = 0; i < sz - st; ++i) F[i] = kf[i] * (p[i + st] - p[i]);
            for (std::size_t i = sz - st; i < sz; ++i) F[i] = 0.0;
            for (std::size_t i = 0; i < st; ++i) o[i] += F[i] * invh2;
            for (std::size_t i = st; i < sz; ++i) o[i] += (F[i] - F[i - st]) * invh2;
        } else {
            detail::for_each_line(g, a, [&](std::size_t base) {
                const double* p = C.v.data() + base;
                const double* kf = fc.f[a].v.data() + base;
                double* o = out.v.data() + base;
                double flux_lo = kf[st * (n - 1)] * (p[0] - p[st * (n - 1)]);
                for (int q = 0; q < n - 1; ++q) {
                    const double flux_hi = kf[st * q] * (p[st * (q + 1)] - p[st * q]);
                    o[st * q] += (flux_hi - flux_lo) * invh2;
                    flux_lo = flux_hi;
                }
                const double flux_top = kf[st * (n - 1)] * (p[0] - p[st * (n - 1)]);
                o[st * (n - 1)] += (flux_top - flux_lo) * invh2;
            });
        }
    }
}

inline void check_phase_params(const PhaseFieldParams& p, const Grid& g) {
    if (!(p.M > 0.0)) throw std::invalid_argument("phasefield: M must be positive");
    if (!(p.eps > 0.0)) throw std::invalid_argument("phasefield: eps must be positive");
    p.theta.require_grid(g, "phasefield theta");
    p.jn.require_grid(g, "phasefield jn");
    auto bad = [](double t) { return !(t > 0.0 && t < 180.0); };
    if (p.theta.uniform) {
        if (bad(p.theta.value))
            throw std::invalid_argument(
                "phasefield: contact angle must lie strictly between 0 and 180 degrees");
    } else {
        for (double t : p.theta.field.v)
            if (bad(t))
                throw std::invalid_argument(
                    "phasefield: contact angle must lie strictly between 0 and 180 "
                    "degrees");
    }
}

}  // namespace detail

/// Largest stable explicit time step, from the linearization about the well
/// bottoms: rate = M (f''max + eps^2 lam) for Allen-Cahn and
/// M lam (f''max + eps^2 lam) for Cahn-Hilliard, lam = 4 dim / dx^2,
/// f''max = 2. Measured blowup thresholds (64x64, eps = M = 1, flat psi and a
/// steep tanh wall alike) bracket the caps at safety 1: Allen-Cahn holds at
/// 0.20 and diverges at 0.25 against a cap of 0.20; Cahn-Hilliard holds at
/// 0.026 and diverges at 0.031 against a cap of 0.025. The capped face
/// conductances over steep psi tails do not tighten the bound.
inline double stable_dt(const PhaseFieldParams& p, const Grid& g, PhaseDynamics dyn,
                        double safety = 0.8) {
    if (!(safety > 0.0 && safety <= 1.0))
        throw std::invalid_argument("stable_dt: safety must be in (0, 1]");
    detail::check_phase_params(p, g);
    const double lam = 4.0 * g.dim() / (g.dx * g.dx);
    const double fpp = 2.0;
    const double rate = dyn == PhaseDynamics::AllenCahn
                            ? p.M * (fpp + p.eps * p.eps * lam)
                            : p.M * lam * (fpp + p.eps * p.eps * lam);
    return safety * 2.0 / rate;
}

/// mu = f'(phi) - (eps^2/psi~) div(psi grad phi)
///      - (eps |grad psi| / psi~) sqrt(2 f) cos(theta),
/// with psi~ = max(psi, dirichlet cutoff). theta is the angle at the
/// three-phase line between the phi = 0.5 contour and the psi = 0.5 wall,
/// measured inside the phi = 1 phase: acute theta wets (phi = 1 spreads along
/// the wall), obtuse theta dewets. The minus sign follows from the wall energy
/// gamma(phi) whose derivative is -eps cos(theta) sqrt(2 f), which reproduces
/// Young's equation; the term vanishes identically where psi is uniform.
inline ScalarField chemical_potential(const ScalarField& phi, const DomainParameter& dp,
                                      const PhaseFieldParams& p) {
    const Grid& g = phi.grid;
    require_same_grid(dp.grid(), g, "chemical_potential");
    detail::check_phase_params(p, g);

    const double cut = dp.dirichlet_cutoff;
    const ScalarField lap = div_flux(dp.psi, 1.0, phi, cut);
    const double eps2 = p.eps * p.eps;
    const double deg = std::acos(-1.0) / 180.0;

    ScalarField mu(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double df = double_well(phi.v[i]).second;
        const double inv = 1.0 / std::max(dp.psi.v[i], cut);
        const double cth = -std::cos(p.theta(i) * deg);
        const double wall = p.eps * dp.grad_mag.v[i] * cth * inv;
        mu.v[i] = df - eps2 * (inv * lap.v[i]) + wall * wall_energy(phi.v[i]);
    }
    return mu;
}

/// Marches one phase field with fixed domain, parameters and dynamics.
/// Caches everything that does not change between steps (masked
/// conductances, 1/psi~, the wall-term coefficient), so long explicit runs
/// avoid per-step setup; single steps through the free functions below land
/// on the identical arithmetic. The domain parameter is referenced, not
/// copied, and must outlive the stepper.
class PhaseFieldStepper {
public:
    PhaseFieldStepper(const DomainParameter& dp, PhaseFieldParams p, PhaseDynamics dyn)
        : dp_(&dp), p_(std::move(p)), dyn_(dyn) {
        const Grid& g = dp.grid();
        detail::check_phase_params(p_, g);
        dt_cap_ = stable_dt(p_, g, dyn_, 1.0);
        ScalarField kpsi(g), kmob(g);
        inv_ = ScalarField(g);
        const double cut = dp.dirichlet_cutoff;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double ps = dp.psi.v[i];
            kpsi.v[i] = ps > cut ? ps * 1.0 : 0.0;
            kmob.v[i] = ps > cut ? ps * p_.M : 0.0;
            inv_.v[i] = 1.0 / std::max(ps, cut);
        }
        fpsi_ = detail::build_face_cache(dp.psi, kpsi, cut);
        if (dyn_ == PhaseDynamics::CahnHilliard)
            fmob_ = detail::build_face_cache(dp.psi, kmob, cut);
        lap_ = ScalarField(g);
        mu_ = ScalarField(g);
        div_ = ScalarField(g);
        for (int a = 0; a < g.dim(); ++a)
            any_fixed_ = any_fixed_ || g.bc_lo(a) == BoxBc::Fixed ||
                         g.bc_hi(a) == BoxBc::Fixed;
        set_theta(p_.theta);
        set_jn(p_.jn);
    }

    /// Replace the contact angle field (the self-propelling droplet rebinds
    /// it as the droplet moves) and rebuild the cached wall coefficient.
    void set_theta(const Coef& theta) {
        const Grid& g = dp_->grid();
        theta.require_grid(g, "phasefield theta");
        p_.theta = theta;
        detail::check_phase_params(p_, g);
        const double cut = dp_->dirichlet_cutoff;
        const double deg = std::acos(-1.0) / 180.0;
        wall_ = ScalarField(g);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double inv = 1.0 / std::max(dp_->psi.v[i], cut);
            const double cth = -std::cos(p_.theta(i) * deg);
            wall_.v[i] = p_.eps * dp_->grad_mag.v[i] * cth * inv;
        }
    }

    void set_jn(const Coef& jn) {
        const Grid& g = dp_->grid();
        jn.require_grid(g, "phasefield jn");
        p_.jn = jn;
        has_jn_ = !(jn.uniform && jn.value == 0.0);
        if (has_jn_) {
            jn_gm_ = ScalarField(g);
            for (std::size_t i = 0; i < g.size(); ++i)
                jn_gm_.v[i] = dp_->grad_mag.v[i] * p_.jn(i);
        }
    }

    const PhaseFieldParams& params() const { return p_; }
    PhaseDynamics dynamics() const { return dyn_; }

    void step(ScalarField& phi, double dt) {
        const Grid& g = dp_->grid();
        require_same_grid(phi.grid, g, "phasefield step");
        if (!(dt > 0.0) || dt > dt_cap_ * (1.0 + 1e-12))
            throw std::invalid_argument(
                "phasefield step: dt must be positive and within the stable explicit "
                "bound");
        const double eps2 = p_.eps * p_.eps;
        if (any_fixed_) prev_ = phi;

        detail::apply_face_div(fpsi_, phi, lap_, scr_);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double df = double_well(phi.v[i]).second;
            mu_.v[i] = df - eps2 * (inv_.v[i] * lap_.v[i]) +
                       wall_.v[i] * wall_energy(phi.v[i]);
        }

        if (dyn_ == PhaseDynamics::AllenCahn) {
            for (std::size_t i = 0; i < g.size(); ++i)
                phi.v[i] -= dt * p_.M * mu_.v[i];
        } else {
            detail::apply_face_div(fmob_, mu_, div_, scr_);
            if (has_jn_) {
                for (std::size_t i = 0; i < g.size(); ++i)
                    phi.v[i] += dt * (inv_.v[i] * (div_.v[i] + jn_gm_.v[i]));
            } else {
                for (std::size_t i = 0; i < g.size(); ++i)
                    phi.v[i] += dt * (inv_.v[i] * div_.v[i]);
            }
        }
        if (any_fixed_) detail::pin_fixed_faces(phi, prev_);
        detail::check_finite(phi, "phasefield step");
    }

private:
    const DomainParameter* dp_;
    PhaseFieldParams p_;
    PhaseDynamics dyn_;
    double dt_cap_ = 0.0;
    bool has_jn_ = false;
    bool any_fixed_ = false;
    detail::FaceCache fpsi_, fmob_;
    ScalarField inv_, wall_, jn_gm_;
    ScalarField lap_, mu_, div_, prev_, scr_;
};

/// One explicit Allen-Cahn step: phi <- phi - dt M mu.
inline ScalarField allen_cahn_step(const ScalarField& phi, const DomainParameter& dp,
                                   const PhaseFieldParams& p, double dt) {
    PhaseFieldStepper st(dp, p, PhaseDynamics::AllenCahn);
    ScalarField out = phi;
    st.step(out, dt);
    return out;
}

/// One explicit Cahn-Hilliard step:
/// phi <- phi + (dt/psi~) (M div(psi grad mu) + |grad psi| J_n).
inline ScalarField cahn_hilliard_step(const ScalarField& phi, const DomainParameter& dp,
                                      const PhaseFieldParams& p, double dt) {
    PhaseFieldStepper st(dp, p, PhaseDynamics::CahnHilliard);
    ScalarField out = phi;
    st.step(out, dt);
    return out;
}

/// Discrete smoothed-boundary free energy: integral of
/// psi [ f(phi) + (eps^2/2) |grad phi|^2 ].
inline double free_energy(const ScalarField& phi, const DomainParameter& dp,
                          const PhaseFieldParams& p) {
    const Grid& g = phi.grid;
    require_same_grid(dp.grid(), g, "free_energy");
    const VectorField gr = gradient(phi);
    ScalarField e(g);
    const double half_eps2 = 0.5 * p.eps * p.eps;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double g2 = 0.0;
        for (int a = 0; a < g.dim(); ++a) g2 += gr.comp[a][i] * gr.comp[a][i];
        e.v[i] = double_well(phi.v[i]).first + half_eps2 * g2;
    }
    return integrate(e, dp.psi);
}

}  // namespace sbm

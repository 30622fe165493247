#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbm/domain.hpp"
#include "sbm/grid.hpp"

namespace sbm {

/// Ordered chain of contour vertices in physical coordinates. Closed chains
/// do not repeat the first vertex; consumers wrap around via `closed`.
struct Polyline {
    std::vector<double> x, y;
    bool closed = false;

    std::size_t size() const { return x.size(); }
};

/// Contact point between the phi=0.5 and psi=0.5 contours, with the angle
/// between their local tangents measured through the phi=1 side.
struct ContactPoint {
    double x = 0.0, y = 0.0;
    double angle_deg = 0.0;
};

/// Least-squares circle through a point set, plus the radial spread of the
/// points about the fitted center.
struct CircleFit {
    double cx = 0.0, cy = 0.0, radius = 0.0;
    double rmin = 0.0, rmax = 0.0;

    double spread() const { return (rmax - rmin) / radius; }
};

struct Centroid {
    double x = 0.0, y = 0.0, z = 0.0;
};

/// Bilinear interpolation of a 2D field at a physical point, clamped to the
/// grid's bounding box.
inline double sample_bilinear(const ScalarField& f, double x, double y) {
    const Grid& g = f.grid;
    if (g.dim() != 2)
        throw std::invalid_argument("sample_bilinear: field must be 2D");
    const double h = g.dx;
    double u = std::clamp(x / h, 0.0, static_cast<double>(g.nx - 1));
    double v = std::clamp(y / h, 0.0, static_cast<double>(g.ny - 1));
    int i = std::min(static_cast<int>(u), g.nx - 2);
    int j = std::min(static_cast<int>(v), g.ny - 2);
    const double a = u - i, b = v - j;
    return (1.0 - a) * (1.0 - b) * f.at(i, j) + a * (1.0 - b) * f.at(i + 1, j) +
           (1.0 - a) * b * f.at(i, j + 1) + a * b * f.at(i + 1, j + 1);
}

namespace detail {

struct ContourPoint {
    double x = 0.0, y = 0.0;
};

/// Marching-squares segment table. Cells are indexed by which corners lie
/// above the iso level (bit 0: (i,j), 1: (i+1,j), 2: (i+1,j+1), 3: (i,j+1));
/// each entry lists up to two segments as pairs of cell edges
/// (0 bottom, 1 right, 2 top, 3 left). Saddle cases 5 and 10 are resolved
/// with the cell-center average.
inline int cell_segments(int code, bool center_above, std::array<int, 4>& e) {
    switch (code) {
        case 0: case 15: return 0;
        case 1:  e = {3, 0, 0, 0}; return 1;
        case 2:  e = {0, 1, 0, 0}; return 1;
        case 3:  e = {3, 1, 0, 0}; return 1;
        case 4:  e = {1, 2, 0, 0}; return 1;
        case 6:  e = {0, 2, 0, 0}; return 1;
        case 7:  e = {3, 2, 0, 0}; return 1;
        case 8:  e = {2, 3, 0, 0}; return 1;
        case 9:  e = {0, 2, 0, 0}; return 1;
        case 11: e = {1, 2, 0, 0}; return 1;
        case 12: e = {3, 1, 0, 0}; return 1;
        case 13: e = {0, 1, 0, 0}; return 1;
        case 14: e = {3, 0, 0, 0}; return 1;
        case 5:
            if (center_above) e = {3, 2, 0, 1};
            else e = {3, 0, 1, 2};
            return 2;
        case 10:
            if (center_above) e = {3, 0, 1, 2};
            else e = {3, 2, 0, 1};
            return 2;
        default: return 0;
    }
}

}  // namespace detail

/// Extracts all iso-contours of a 2D field by marching squares with linear
/// interpolation along cell edges. Chains are deterministic: open chains
/// first (by lowest edge index), then closed loops.
inline std::vector<Polyline> extract_contours(const ScalarField& f, double iso) {
    const Grid& g = f.grid;
    if (g.dim() != 2)
        throw std::invalid_argument("extract_contours: field must be 2D");
    const int nx = g.nx, ny = g.ny;
    const double h = g.dx;

    // Global edge numbering: horizontal edges (node (i,j))-(i+1,j) first,
    // then vertical edges (i,j)-(i,j+1).
    const std::size_t numH = static_cast<std::size_t>(nx - 1) * ny;
    const std::size_t numE = numH + static_cast<std::size_t>(nx) * (ny - 1);
    auto id_h = [&](int i, int j) { return static_cast<std::size_t>(j) * (nx - 1) + i; };
    auto id_v = [&](int i, int j) { return numH + static_cast<std::size_t>(j) * nx + i; };

    std::vector<detail::ContourPoint> pt(numE);
    std::vector<std::array<std::size_t, 2>> nbr(numE);
    std::vector<unsigned char> deg(numE, 0);

    auto cross_h = [&](int i, int j) {
        const double fa = f.at(i, j), fb = f.at(i + 1, j);
        const double t = (iso - fa) / (fb - fa);
        return detail::ContourPoint{(i + t) * h, j * h};
    };
    auto cross_v = [&](int i, int j) {
        const double fa = f.at(i, j), fb = f.at(i, j + 1);
        const double t = (iso - fa) / (fb - fa);
        return detail::ContourPoint{i * h, (j + t) * h};
    };
    auto link = [&](std::size_t a, std::size_t b) {
        if (deg[a] < 2) nbr[a][deg[a]] = b;
        ++deg[a];
        if (deg[b] < 2) nbr[b][deg[b]] = a;
        ++deg[b];
    };

    for (int j = 0; j < ny - 1; ++j)
        for (int i = 0; i < nx - 1; ++i) {
            const double c0 = f.at(i, j), c1 = f.at(i + 1, j);
            const double c2 = f.at(i + 1, j + 1), c3 = f.at(i, j + 1);
            const int code = (c0 > iso ? 1 : 0) | (c1 > iso ? 2 : 0) |
                             (c2 > iso ? 4 : 0) | (c3 > iso ? 8 : 0);
            if (code == 0 || code == 15) continue;
            std::array<int, 4> e{};
            const bool ctr = 0.25 * (c0 + c1 + c2 + c3) > iso;
            const int ns = detail::cell_segments(code, ctr, e);
            const std::size_t eid[4] = {id_h(i, j), id_v(i + 1, j), id_h(i, j + 1),
                                        id_v(i, j)};
            for (int s = 0; s < ns; ++s) {
                const int ea = e[2 * s], eb = e[2 * s + 1];
                for (int which : {ea, eb}) {
                    switch (which) {
                        case 0: pt[eid[0]] = cross_h(i, j); break;
                        case 1: pt[eid[1]] = cross_v(i + 1, j); break;
                        case 2: pt[eid[2]] = cross_h(i, j + 1); break;
                        case 3: pt[eid[3]] = cross_v(i, j); break;
                    }
                }
                link(eid[ea], eid[eb]);
            }
        }

    std::vector<Polyline> out;
    std::vector<unsigned char> seen(numE, 0);
    auto walk = [&](std::size_t start, bool closed) {
        Polyline p;
        p.closed = closed;
        std::size_t cur = start, prev = numE;
        while (true) {
            seen[cur] = 1;
            const detail::ContourPoint& c = pt[cur];
            const std::size_t n = p.size();
            if (n == 0 || std::abs(p.x[n - 1] - c.x) > 1e-12 * h ||
                std::abs(p.y[n - 1] - c.y) > 1e-12 * h) {
                p.x.push_back(c.x);
                p.y.push_back(c.y);
            }
            std::size_t next = numE;
            for (int s = 0; s < deg[cur] && s < 2; ++s)
                if (nbr[cur][s] != prev && !seen[nbr[cur][s]]) next = nbr[cur][s];
            if (next == numE) break;
            prev = cur;
            cur = next;
        }
        if (p.size() >= 2) out.push_back(std::move(p));
    };

    for (std::size_t e = 0; e < numE; ++e)
        if (deg[e] == 1 && !seen[e]) walk(e, false);
    for (std::size_t e = 0; e < numE; ++e)
        if (deg[e] >= 2 && !seen[e]) walk(e, true);
    return out;
}

namespace detail {

/// Node of a polyline with wraparound for closed chains; idx may be any
/// integer for closed chains, and must be in range for open ones.
inline ContourPoint poly_node(const Polyline& p, long idx) {
    const long n = static_cast<long>(p.size());
    if (p.closed) {
        idx %= n;
        if (idx < 0) idx += n;
    }
    return {p.x[static_cast<std::size_t>(idx)], p.y[static_cast<std::size_t>(idx)]};
}

/// Number of polyline nodes reachable from the segment (seg, seg+1) walking
/// in direction dir (+1 starts at node seg+1, -1 at node seg).
inline long poly_reach(const Polyline& p, long seg, int dir) {
    const long n = static_cast<long>(p.size());
    if (p.closed) return n;
    return dir > 0 ? n - (seg + 1) : seg + 1;
}

struct TangentWindow {
    double dirx = 0.0, diry = 0.0;  // unit tangent at the contact point
};

/// Tangent of the contour at (px, py) from the contact point plus the next
/// `win` polyline nodes in direction dir. The window is rotated into its
/// principal frame and a quadratic is fitted through it; the tangent is the
/// fit's slope at the contact. A one-sided straight-line fit would tilt by
/// half the window's arc angle on curved contours; the quadratic removes
/// that bias. Larger windows average out the sub-cell jitter of marching
/// squares at the cost of a cubic-in-(window/radius) curvature bias.
inline TangentWindow fit_tangent(const Polyline& p, long seg, int dir, double px,
                                 double py, int win) {
    const int n = win + 1;
    std::vector<double> X(n), Y(n);
    X[0] = px;
    Y[0] = py;
    for (int k = 1; k <= win; ++k) {
        const ContourPoint c = poly_node(p, dir > 0 ? seg + k : seg - (k - 1));
        X[k] = c.x;
        Y[k] = c.y;
    }
    double mx = 0.0, my = 0.0;
    for (int k = 0; k < n; ++k) {
        mx += X[k];
        my += Y[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int k = 0; k < n; ++k) {
        const double dx = X[k] - mx, dy = Y[k] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    const double ang = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    const double ex = std::cos(ang), ey = std::sin(ang);

    // Coordinates along (s) and across (d) the principal direction, relative
    // to the contact point; s is normalized by the window extent to keep the
    // quadratic normal matrix well conditioned.
    std::vector<double> s(n), d(n);
    double smax = 0.0;
    for (int k = 0; k < n; ++k) {
        const double rx = X[k] - px, ry = Y[k] - py;
        s[k] = rx * ex + ry * ey;
        d[k] = -rx * ey + ry * ex;
        smax = std::max(smax, std::abs(s[k]));
    }
    double slope = 0.0;
    if (smax > 0.0) {
        double m[3][4] = {};
        for (int k = 0; k < n; ++k) {
            const double t = s[k] / smax;
            const double row[3] = {1.0, t, t * t};
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) m[i][j] += row[i] * row[j];
                m[i][3] += row[i] * d[k];
            }
        }
        bool ok = true;
        for (int c = 0; c < 3 && ok; ++c) {
            int piv = c;
            for (int r = c + 1; r < 3; ++r)
                if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
            for (int j = 0; j < 4; ++j) std::swap(m[c][j], m[piv][j]);
            if (std::abs(m[c][c]) < 1e-10) {
                ok = false;  // degenerate window; keep the principal direction
                break;
            }
            for (int r = 0; r < 3; ++r) {
                if (r == c) continue;
                const double f = m[r][c] / m[c][c];
                for (int j = c; j < 4; ++j) m[r][j] -= f * m[c][j];
            }
        }
        if (ok) slope = (m[1][3] / m[1][1]) / smax;
    }

    TangentWindow w;
    w.dirx = ex - slope * ey;
    w.diry = ey + slope * ex;
    const double nrm = std::hypot(w.dirx, w.diry);
    w.dirx /= nrm;
    w.diry /= nrm;
    const double ox = X[win] - px, oy = Y[win] - py;
    if (w.dirx * ox + w.diry * oy < 0.0) {
        w.dirx = -w.dirx;
        w.diry = -w.diry;
    }
    return w;
}

struct Intersection {
    double x = 0.0, y = 0.0;
    const Polyline* wall = nullptr;
    const Polyline* iface = nullptr;
    long wall_seg = 0, iface_seg = 0;
};

inline void segment_hits(const Polyline& w, const Polyline& a,
                         std::vector<Intersection>& out) {
    const long nw = static_cast<long>(w.size()) - (w.closed ? 0 : 1);
    const long na = static_cast<long>(a.size()) - (a.closed ? 0 : 1);
    for (long s = 0; s < nw; ++s) {
        const ContourPoint p0 = poly_node(w, s), p1 = poly_node(w, s + 1);
        const double rx = p1.x - p0.x, ry = p1.y - p0.y;
        for (long t = 0; t < na; ++t) {
            const ContourPoint q0 = poly_node(a, t), q1 = poly_node(a, t + 1);
            const double sx = q1.x - q0.x, sy = q1.y - q0.y;
            const double den = rx * sy - ry * sx;
            if (std::abs(den) < 1e-30) continue;
            const double qx = q0.x - p0.x, qy = q0.y - p0.y;
            const double u = (qx * sy - qy * sx) / den;
            const double v = (qx * ry - qy * rx) / den;
            if (u < -1e-9 || u > 1.0 + 1e-9 || v < -1e-9 || v > 1.0 + 1e-9)
                continue;
            Intersection hit;
            hit.x = p0.x + u * rx;
            hit.y = p0.y + u * ry;
            hit.wall = &w;
            hit.iface = &a;
            hit.wall_seg = s;
            hit.iface_seg = t;
            out.push_back(hit);
        }
    }
}

}  // namespace detail

/// Finds every intersection of the phi=0.5 contour with the psi=0.5 contour
/// and measures the angle between their local tangents, fitted over a
/// (win+1)-node window on each contour. The interface window extends toward
/// increasing psi (away from the wall) and the wall window toward the phi=1
/// side, so the returned angle is the contact angle measured through phase 1.
/// Results are sorted by x.
inline std::vector<ContactPoint> measure_contact_angles(const ScalarField& phi,
                                                        const DomainParameter& dp,
                                                        int win = 4) {
    require_same_grid(phi.grid, dp.grid(), "measure_contact_angles");
    if (phi.grid.dim() != 2)
        throw std::invalid_argument("measure_contact_angles: fields must be 2D");
    if (win < 2) throw std::invalid_argument("measure_contact_angles: window < 2");
    const double h = phi.grid.dx;

    const std::vector<Polyline> walls = extract_contours(dp.psi, 0.5);
    const std::vector<Polyline> ifaces = extract_contours(phi, 0.5);
    if (walls.empty() || ifaces.empty())
        throw std::runtime_error(
            "measure_contact_angles: psi=0.5 and phi=0.5 contours do not intersect");

    std::vector<detail::Intersection> hits;
    for (const Polyline& w : walls)
        for (const Polyline& a : ifaces) detail::segment_hits(w, a, hits);
    // Merge duplicates closer than half a cell (shared contour nodes produce
    // coincident hits on adjacent segments).
    std::vector<detail::Intersection> uniq;
    for (const detail::Intersection& c : hits) {
        bool dup = false;
        for (const detail::Intersection& u : uniq)
            dup = dup || (std::abs(c.x - u.x) < 0.5 * h && std::abs(c.y - u.y) < 0.5 * h);
        if (!dup) uniq.push_back(c);
    }
    if (uniq.empty())
        throw std::runtime_error(
            "measure_contact_angles: psi=0.5 and phi=0.5 contours do not intersect");

    auto pick_dir = [&](const Polyline& p, long seg, const ScalarField& by) {
        // Walk toward the side whose first reachable node samples a larger
        // value of `by`; a window needs win nodes on the chosen side.
        double fwd = -1e300, bwd = -1e300;
        if (detail::poly_reach(p, seg, +1) >= 1) {
            const detail::ContourPoint c = detail::poly_node(p, seg + 1);
            fwd = sample_bilinear(by, c.x, c.y);
        }
        if (detail::poly_reach(p, seg, -1) >= 1) {
            const detail::ContourPoint c = detail::poly_node(p, seg);
            bwd = sample_bilinear(by, c.x, c.y);
        }
        const int dir = fwd >= bwd ? +1 : -1;
        if (detail::poly_reach(p, seg, dir) < win)
            throw std::runtime_error(
                "measure_contact_angles: contact region shorter than the tangent fit "
                "window");
        return dir;
    };

    std::vector<ContactPoint> out;
    for (const detail::Intersection& c : uniq) {
        const int dw = pick_dir(*c.wall, c.wall_seg, phi);
        const int di = pick_dir(*c.iface, c.iface_seg, dp.psi);
        const detail::TangentWindow tw =
            detail::fit_tangent(*c.wall, c.wall_seg, dw, c.x, c.y, win);
        const detail::TangentWindow ti =
            detail::fit_tangent(*c.iface, c.iface_seg, di, c.x, c.y, win);
        const double dot =
            std::clamp(tw.dirx * ti.dirx + tw.diry * ti.diry, -1.0, 1.0);
        ContactPoint cp;
        cp.x = c.x;
        cp.y = c.y;
        cp.angle_deg = std::acos(dot) * 180.0 / std::acos(-1.0);
        out.push_back(cp);
    }
    std::sort(out.begin(), out.end(), [](const ContactPoint& a, const ContactPoint& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    return out;
}

/// Contact angle at the first (smallest-x) intersection of the phi=0.5 and
/// psi=0.5 contours.
inline double measure_contact_angle(const ScalarField& phi, const DomainParameter& dp,
                                    int win = 4) {
    return measure_contact_angles(phi, dp, win).front().angle_deg;
}

/// Algebraic least-squares circle fit (minimizes the residual of
/// x^2 + y^2 = A x + B y + C over the points).
inline CircleFit fit_circle(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("fit_circle: coordinate arrays differ in length");
    const std::size_t n = x.size();
    if (n < 3) throw std::invalid_argument("fit_circle: need at least 3 points");

    double m[3][4] = {};
    for (std::size_t k = 0; k < n; ++k) {
        const double r2 = x[k] * x[k] + y[k] * y[k];
        const double row[3] = {x[k], y[k], 1.0};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) m[i][j] += row[i] * row[j];
            m[i][3] += row[i] * r2;
        }
    }
    const double scale = std::max({m[0][0], m[1][1], m[2][2], 1e-300});
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int r = c + 1; r < 3; ++r)
            if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
        for (int j = 0; j < 4; ++j) std::swap(m[c][j], m[piv][j]);
        if (std::abs(m[c][c]) < 1e-9 * scale)
            throw std::invalid_argument("fit_circle: points are collinear");
        for (int r = 0; r < 3; ++r) {
            if (r == c) continue;
            const double f = m[r][c] / m[c][c];
            for (int j = c; j < 4; ++j) m[r][j] -= f * m[c][j];
        }
    }
    const double A = m[0][3] / m[0][0], B = m[1][3] / m[1][1], C = m[2][3] / m[2][2];

    CircleFit fit;
    fit.cx = 0.5 * A;
    fit.cy = 0.5 * B;
    const double r2 = C + fit.cx * fit.cx + fit.cy * fit.cy;
    if (r2 <= 0.0) throw std::invalid_argument("fit_circle: degenerate radius");
    fit.radius = std::sqrt(r2);
    fit.rmin = 1e300;
    fit.rmax = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = std::hypot(x[k] - fit.cx, y[k] - fit.cy);
        fit.rmin = std::min(fit.rmin, r);
        fit.rmax = std::max(fit.rmax, r);
    }
    return fit;
}

/// Centroid of the non-negative part of a field over the region psi >=
/// threshold. Used to track blob positions; values outside the domain carry
/// no physical meaning and are excluded.
inline Centroid centroid(const ScalarField& f, const DomainParameter& dp,
                         double threshold = 0.5) {
    require_same_grid(f.grid, dp.grid(), "centroid");
    const Grid& g = f.grid;
    const double h = g.dx;
    double w = 0.0, sx = 0.0, sy = 0.0, sz = 0.0;
    std::size_t q = 0;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i, ++q) {
                if (dp.psi.v[q] < threshold) continue;
                const double m = std::max(f.v[q], 0.0);
                w += m;
                sx += m * i;
                sy += m * j;
                sz += m * k;
            }
    if (w <= 0.0)
        throw std::runtime_error("centroid: field has no mass in the domain");
    return {sx / w * h, sy / w * h, sz / w * h};
}

}  // namespace sbm

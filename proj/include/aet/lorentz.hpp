// Lorentzian direction fields (e, alpha, beta), space-/time-/null-like
// boundary classification, hyperbolicity margins, the stability energy, and
// discrete domains of influence.
//
// Conventions: g = alpha (e@e - beta^2 (I - e@e)) acts on gradients and has
// signature (1,1); h = g^{-1}.  A boundary point is space-like when its
// outward normal nu is time-like for h, i.e. (nu.e)^2 > 1/(1+beta^2).  Null
// rays make an angle arctan(beta) with the e-line, which is what the cone
// erosion below tracks.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "aet/elliptic.hpp"
#include "aet/geometry.hpp"
#include "aet/grid.hpp"

namespace aet {

struct Mat2 {
    double a11 = 0, a12 = 0, a22 = 0;  // symmetric

    Vec2 mul(Vec2 v) const { return {a11 * v.x + a12 * v.y, a12 * v.x + a22 * v.y}; }
    double quad(Vec2 v) const { return v.dot(mul(v)); }
};

// full 2x2 product, for the g*h = I check
struct Mat2Full {
    double m[2][2];
};

inline Mat2Full mat_product(const Mat2& a, const Mat2& b) {
    Mat2Full r;
    r.m[0][0] = a.a11 * b.a11 + a.a12 * b.a12;
    r.m[0][1] = a.a11 * b.a12 + a.a12 * b.a22;
    r.m[1][0] = a.a12 * b.a11 + a.a22 * b.a12;
    r.m[1][1] = a.a12 * b.a12 + a.a22 * b.a22;
    return r;
}

inline Mat2 g_tensor(Vec2 e, double alpha, double beta) {
    double b2 = beta * beta;
    return {alpha * (e.x * e.x - b2 * (1.0 - e.x * e.x)),
            alpha * (1.0 + b2) * e.x * e.y,
            alpha * (e.y * e.y - b2 * (1.0 - e.y * e.y))};
}

inline Mat2 h_tensor(Vec2 e, double alpha, double beta) {
    double ib2 = 1.0 / (beta * beta);
    return {(e.x * e.x - ib2 * (1.0 - e.x * e.x)) / alpha,
            (1.0 + ib2) * e.x * e.y / alpha,
            (e.y * e.y - ib2 * (1.0 - e.y * e.y)) / alpha};
}

// Direction field of the Lorentzian metric, plus the drift vector
// k = -grad ln H used by the marching equation.
struct LorentzDirectionField {
    VectorField e;
    ScalarField alpha, beta;
    VectorField k;
    Mask valid;
};

// Single-solution metric: e = grad u / |grad u|, beta = alpha = 1.
inline LorentzDirectionField metric_single(const Domain& d, const ScalarField& u,
                                           const ScalarField& H, double g_min = 1e-3) {
    LorentzDirectionField m{VectorField(d.grid), ScalarField(d.grid, 1.0),
                            ScalarField(d.grid, 1.0), VectorField(d.grid),
                            Mask(d.grid.size(), 0)};
    VectorField gu = gradient(d, u);
    ScalarField lnH(d.grid, 0.0);
    for (int k = 0; k < d.grid.size(); ++k)
        lnH.v[k] = (d.interior[k] && H.v[k] > 0) ? std::log(H.v[k]) : 0.0;
    VectorField glnH = gradient(d, lnH);
    for (int j = 0; j < d.grid.ny; ++j)
        for (int i = 0; i < d.grid.nx; ++i) {
            int k = d.grid.idx(i, j);
            if (!d.interior[k]) continue;
            Vec2 g = gu.at(i, j);
            double n = g.norm();
            if (n < g_min || H.v[k] <= 0) continue;  // left invalid
            m.e.set(i, j, g * (1.0 / n));
            m.k.set(i, j, {-glnH.vx[k], -glnH.vy[k]});
            m.valid[k] = 1;
        }
    return m;
}

// Two-solution metric of the linearized problem.  Hyperbolic regime requires
// grad(u).grad(ut) > 0; elliptic-regime cells are left invalid.
inline LorentzDirectionField metric_pair(const Domain& d, const ScalarField& u,
                                         const ScalarField& ut, const ScalarField& H,
                                         double g_min = 1e-3) {
    LorentzDirectionField m{VectorField(d.grid), ScalarField(d.grid, 1.0),
                            ScalarField(d.grid, 1.0), VectorField(d.grid),
                            Mask(d.grid.size(), 0)};
    VectorField gu = gradient(d, u);
    VectorField gt = gradient(d, ut);
    ScalarField lnH(d.grid, 0.0);
    for (int k = 0; k < d.grid.size(); ++k)
        lnH.v[k] = (d.interior[k] && H.v[k] > 0) ? std::log(H.v[k]) : 0.0;
    VectorField glnH = gradient(d, lnH);
    for (int j = 0; j < d.grid.ny; ++j)
        for (int i = 0; i < d.grid.nx; ++i) {
            int k = d.grid.idx(i, j);
            if (!d.interior[k]) continue;
            Vec2 a = gu.at(i, j), b = gt.at(i, j);
            double na = a.norm(), nb = b.norm();
            if (na < g_min || nb < g_min || H.v[k] <= 0) continue;
            Vec2 sum = a + b;
            double s2 = sum.dot(sum);
            double q2 = na * na + nb * nb;
            if (s2 - q2 <= 0) continue;  // grad u . grad ut <= 0: not hyperbolic
            m.e.set(i, j, sum * (1.0 / std::sqrt(s2)));
            m.beta.v[k] = std::sqrt(q2 / (s2 - q2));
            m.alpha.v[k] = H.v[k] / (na * na * nb * nb) * (s2 - q2);
            m.k.set(i, j, {-glnH.vx[k], -glnH.vy[k]});
            m.valid[k] = 1;
        }
    return m;
}

enum class BoundaryTag { spacelike, timelike, nulllike };

struct BoundaryClassification {
    std::vector<BoundaryTag> tag;
    std::vector<double> margin;  // (nu.e)^2 - 1/(1+beta^2)
};

inline BoundaryClassification classify_boundary(const Domain& d,
                                                const LorentzDirectionField& m,
                                                double tol_null = 1e-3) {
    BoundaryClassification out;
    out.tag.reserve(d.boundary.size());
    out.margin.reserve(d.boundary.size());
    for (const auto& bs : d.boundary) {
        int k = d.grid.idx(bs.ci, bs.cj);
        require(m.valid[k] != 0,
                "classify_boundary: metric invalid at a boundary-adjacent cell");
        Vec2 e{m.e.vx[k], m.e.vy[k]};
        Vec2 nu = bs.normal;
        if (d.grid.chart == Chart::polar) {
            // normals are Cartesian; express in the local orthonormal frame
            double ph = d.grid.phi(bs.cj);
            Vec2 rhat{std::cos(ph), std::sin(ph)};
            nu = {nu.dot(rhat), nu.dot(rhat.perp())};
        }
        double b = m.beta.v[k];
        double ce = nu.dot(e);
        double margin = ce * ce - 1.0 / (1.0 + b * b);
        BoundaryTag t = std::abs(margin) <= tol_null
                            ? BoundaryTag::nulllike
                            : (margin > 0 ? BoundaryTag::spacelike : BoundaryTag::timelike);
        out.tag.push_back(t);
        out.margin.push_back(margin);
    }
    return out;
}

// min over the region of (nu2.e)^2 - 1/(1+beta^2)
inline double hyperbolicity_margin(const LorentzDirectionField& m, const VectorField& nu2,
                                   const Mask& region) {
    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    for (int k = 0; k < m.e.grid.size(); ++k) {
        if (region.empty() || !region[k]) continue;
        if (!m.valid[k]) continue;
        any = true;
        double ce = nu2.vx[k] * m.e.vx[k] + nu2.vy[k] * m.e.vy[k];
        double b = m.beta.v[k];
        best = std::min(best, ce * ce - 1.0 / (1.0 + b * b));
    }
    require(any, "hyperbolicity_margin: empty region");
    return best;
}

// E(dv) = <dv,nu2>^2 - 1/2 <dv,dv><nu2,nu2> with dv = g grad(v) and <.,.>
// the h-bilinear form.  Since h g = I this reduces to
// E = (grad v . nu2)^2 - 1/2 (grad v . g grad v)(nu2 . h nu2).
inline double energy_point(Vec2 e, double alpha, double beta, Vec2 nu2, Vec2 grad_v) {
    Mat2 g = g_tensor(e, alpha, beta);
    Mat2 h = h_tensor(e, alpha, beta);
    double a = grad_v.dot(nu2);
    return a * a - 0.5 * g.quad(grad_v) * h.quad(nu2);
}

inline ScalarField energy(const LorentzDirectionField& m, const VectorField& nu2,
                          const VectorField& dv_input) {
    ScalarField E(m.e.grid, 0.0);
    for (int j = 0; j < m.e.grid.ny; ++j)
        for (int i = 0; i < m.e.grid.nx; ++i) {
            int k = m.e.grid.idx(i, j);
            if (!m.valid[k]) continue;
            E.v[k] = energy_point(m.e.at(i, j), m.alpha.v[k], m.beta.v[k],
                                  nu2.at(i, j), dv_input.at(i, j));
        }
    return E;
}

enum class MarchDirection { axis_x1, radial_inward };

namespace detail {

// lateral ray slope of the null cone for a metric cell, measured against the
// marching axis; returns a large value when the cone folds past the axis
inline double null_slope(Vec2 e_frame, double beta) {
    double psi = std::atan2(std::abs(e_frame.y), std::abs(e_frame.x));
    double spread = std::atan(beta);
    double worst = psi + spread;
    if (worst >= M_PI / 2 - 1e-9) return 1e9;
    return std::tan(worst);
}

// Distance in cells to the nearest excluded lateral index (lat[] is 0/1).
// On non-periodic charts the array edges count as excluded, so a full face
// still erodes from the domain's lateral boundary.
inline std::vector<double> lateral_distance(const std::vector<std::uint8_t>& lat,
                                            bool periodic) {
    int n = static_cast<int>(lat.size());
    const double inf = 1e18;
    std::vector<double> dist(n, inf);
    bool all = true;
    for (int j = 0; j < n; ++j)
        if (!lat[j]) {
            dist[j] = 0;
            all = false;
        }
    if (!periodic) {
        for (int j = 0; j < n; ++j)
            dist[j] = std::min(dist[j], std::min(static_cast<double>(j + 1),
                                                 static_cast<double>(n - j)));
    } else if (all) {
        return dist;  // full circle: nothing to erode from
    }
    int passes = periodic ? 2 : 1;
    for (int p = 0; p < passes; ++p) {
        for (int j = 0; j < n; ++j) {
            int prev = j == 0 ? (periodic ? n - 1 : -1) : j - 1;
            if (prev >= 0) dist[j] = std::min(dist[j], dist[prev] + 1);
        }
        for (int j = n - 1; j >= 0; --j) {
            int nxt = j == n - 1 ? (periodic ? 0 : -1) : j + 1;
            if (nxt >= 0) dist[j] = std::min(dist[j], dist[nxt] + 1);
        }
    }
    return dist;
}

}  // namespace detail

// Discrete domain of influence of a space-like boundary subset: a marching
// sweep in which the lateral valid set erodes at the local null-ray slope.
// For constant e, beta this reproduces the analytic cone within one cell.
inline Mask domain_of_influence(const Domain& d, const std::vector<int>& sigma1,
                                const LorentzDirectionField& m, MarchDirection dir) {
    require(!sigma1.empty(), "domain_of_influence: empty boundary subset");
    int want_face = dir == MarchDirection::radial_inward ? 1 : 0;
    for (int s : sigma1)
        require(d.boundary[s].face == want_face,
                "domain_of_influence: boundary subset must sit on the marching face");
    BoundaryClassification cls = classify_boundary(d, m);
    for (int s : sigma1)
        require(cls.margin[s] > 0, "domain_of_influence: boundary subset not space-like");

    const Grid2D& g = d.grid;
    bool periodic = g.chart == Chart::polar;
    std::vector<std::uint8_t> lat(g.ny, 0);
    for (int s : sigma1) lat[d.boundary[s].cj] = 1;
    std::vector<double> dist = detail::lateral_distance(lat, periodic);

    Mask O(g.size(), 0);
    double budget = 0.0;  // eroded lateral width, in cells of the current level
    int i0 = dir == MarchDirection::radial_inward ? g.nx - 1 : 0;
    int step = dir == MarchDirection::radial_inward ? -1 : 1;
    for (int n = 0; n < g.nx; ++n) {
        int i = i0 + step * n;
        // level spacing hx, lateral spacing hy (or r hphi on the polar chart)
        double hlat = g.chart == Chart::polar ? g.r(i) * g.hy : g.hy;
        // slope measured over the set that survived the previous level
        double smax = 0.0;
        bool any = false;
        for (int j = 0; j < g.ny; ++j) {
            int k = g.idx(i, j);
            if (!d.interior[k] || !m.valid[k]) continue;
            if (dist[j] < budget + 0.5 - 1e-12) continue;
            any = true;
            smax = std::max(smax, detail::null_slope(m.e.at(i, j), m.beta.v[k]));
        }
        if (!any) break;
        budget += smax * (n == 0 ? 0.5 : 1.0) * g.hx / hlat;
        for (int j = 0; j < g.ny; ++j) {
            int k = g.idx(i, j);
            if (!d.interior[k] || !m.valid[k]) continue;
            if (dist[j] >= budget + 0.5 - 1e-12) O[k] = 1;
        }
    }
    return O;
}

}  // namespace aet

// Discretized 2D domains: shapes, interior masks, boundary sampling.
//
// Boundaries are sampled along the analytic shape curve at arclength spacing
// close to the cell size (cut-cell sampling, not staircase cells), so sample
// normals are exact.  The annulus lives on a polar chart and has exactly two
// boundary components: id 0 is the outer circle, id 1 the inner one.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "aet/errors.hpp"
#include "aet/grid.hpp"

namespace aet {

struct BoundarySample {
    Vec2 pos;          // point on the analytic boundary curve
    Vec2 normal;       // outward Euclidean unit normal
    double weight;     // arclength measure of the sample's segment
    double s;          // arclength coordinate within its component
    int component_id;  // 0-based; annulus: 0 = outer, 1 = inner
    int ci, cj;        // adjacent interior cell
    int face;          // outward face: 0:-x 1:+x 2:-y 3:+y, -1 for cut samples
};

// A cell face cut by the boundary of a masked (non grid-aligned) shape.
struct CutFace {
    int ci, cj;   // interior cell
    int dir;      // 0:-x 1:+x 2:-y 3:+y direction of the exterior neighbor
    double frac;  // distance fraction from the cell center to the boundary, in (0,1]
    Vec2 bpos;    // boundary intersection point
};

enum class ShapeKind { rectangle, disc, ovoid, annulus, slab };

// Shape descriptor.  `n` counts grid points per side (cells per side = n-1);
// the annulus uses (nr, nphi) cell counts on the polar chart instead.
struct ShapeSpec {
    ShapeKind kind = ShapeKind::rectangle;
    double p1 = 1, p2 = 1;  // rectangle: Lx,Ly; disc: R; ovoid: a,b;
                            // annulus: r_inner,r_outer; slab: L, half-width a
    int n = 33;
    int ny = 0;  // lateral cell count override; 0 keeps square cells
    int nr = 32, nphi = 64;
};

struct Domain {
    Grid2D grid;
    Mask interior;
    std::vector<BoundarySample> boundary;
    std::vector<CutFace> cuts;
    ShapeKind kind = ShapeKind::rectangle;
    double p1 = 0, p2 = 0;
    int n_components = 1;

    bool is_interior(int i, int j) const {
        if (grid.chart == Chart::polar) j = grid.wrap_j(j);
        if (i < 0 || i >= grid.nx || j < 0 || j >= grid.ny) return false;
        return interior[grid.idx(i, j)] != 0;
    }

    std::vector<int> component_samples(int component_id) const {
        std::vector<int> out;
        for (int s = 0; s < static_cast<int>(boundary.size()); ++s)
            if (boundary[s].component_id == component_id) out.push_back(s);
        return out;
    }
};

namespace detail {

inline void add_rect_boundary(Domain& d, double Lx, double Ly) {
    const Grid2D& g = d.grid;
    double s = 0.0;
    auto push = [&](Vec2 p, Vec2 nrm, double w, int ci, int cj, int face) {
        d.boundary.push_back({p, nrm, w, s + 0.5 * w, 0, ci, cj, face});
        s += w;
    };
    for (int i = 0; i < g.nx; ++i)  // bottom, going +x
        push({g.ox + (i + 0.5) * g.hx, g.oy}, {0, -1}, g.hx, i, 0, 2);
    for (int j = 0; j < g.ny; ++j)  // right, going +y
        push({g.ox + Lx, g.oy + (j + 0.5) * g.hy}, {1, 0}, g.hy, g.nx - 1, j, 1);
    for (int i = g.nx - 1; i >= 0; --i)  // top, going -x
        push({g.ox + (i + 0.5) * g.hx, g.oy + Ly}, {0, 1}, g.hx, i, g.ny - 1, 3);
    for (int j = g.ny - 1; j >= 0; --j)  // left, going -y
        push({g.ox, g.oy + (j + 0.5) * g.hy}, {-1, 0}, g.hy, 0, j, 0);
}

// Ellipse level set F = (x/a)^2 + (y/b)^2 - 1 (disc when a == b).
inline double ellipse_value(Vec2 p, double a, double b) {
    return (p.x / a) * (p.x / a) + (p.y / b) * (p.y / b) - 1.0;
}

inline Vec2 ellipse_normal(Vec2 p, double a, double b) {
    return Vec2{p.x / (a * a), p.y / (b * b)}.normalized();
}

inline void build_masked_shape(Domain& d, double a, double b) {
    const Grid2D& g = d.grid;
    d.interior.assign(g.size(), 0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            if (ellipse_value(g.pos(i, j), a, b) < 0.0) d.interior[g.idx(i, j)] = 1;

    // cut faces: bisect the level set along center-to-neighbor segments
    const int di[4] = {-1, 1, 0, 0};
    const int dj[4] = {0, 0, -1, 1};
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (!d.interior[g.idx(i, j)]) continue;
            Vec2 pc = g.pos(i, j);
            for (int dir = 0; dir < 4; ++dir) {
                int ii = i + di[dir], jj = j + dj[dir];
                bool outside = ii < 0 || ii >= g.nx || jj < 0 || jj >= g.ny ||
                               !d.interior[g.idx(ii, jj)];
                if (!outside) continue;
                Vec2 pn{pc.x + di[dir] * g.hx, pc.y + dj[dir] * g.hy};
                double lo = 0.0, hi = 1.0;
                for (int it = 0; it < 60; ++it) {
                    double mid = 0.5 * (lo + hi);
                    Vec2 pm{pc.x + mid * (pn.x - pc.x), pc.y + mid * (pn.y - pc.y)};
                    (ellipse_value(pm, a, b) < 0.0 ? lo : hi) = mid;
                }
                double frac = std::max(0.5 * (lo + hi), 1e-6);
                Vec2 bp{pc.x + frac * (pn.x - pc.x), pc.y + frac * (pn.y - pc.y)};
                d.cuts.push_back({i, j, dir, frac, bp});
            }
        }

    // boundary samples walked along the curve at arclength spacing ~ h
    double h = std::min(g.hx, g.hy);
    std::vector<double> ts;
    double t = 0.0;
    while (t < 2.0 * M_PI) {
        ts.push_back(t);
        double speed = std::hypot(a * std::sin(t), b * std::cos(t));
        t += h / speed;
    }
    // rescale parameter steps so the loop closes exactly
    double scale = 2.0 * M_PI / t;
    for (auto& tk : ts) tk *= scale;

    int m = static_cast<int>(ts.size());
    std::vector<Vec2> pts(m);
    for (int k = 0; k < m; ++k) pts[k] = {a * std::cos(ts[k]), b * std::sin(ts[k])};
    double s = 0.0;
    for (int k = 0; k < m; ++k) {
        Vec2 prev = pts[(k + m - 1) % m], next = pts[(k + 1) % m];
        double w = 0.5 * ((pts[k] - prev).norm() + (next - pts[k]).norm());
        // nearest interior cell to anchor trace evaluations
        int ci = std::clamp(static_cast<int>((pts[k].x - g.ox) / g.hx), 0, g.nx - 1);
        int cj = std::clamp(static_cast<int>((pts[k].y - g.oy) / g.hy), 0, g.ny - 1);
        if (!d.interior[g.idx(ci, cj)]) {
            double best = 1e300;
            int bi = ci, bj = cj;
            for (int dj2 = -2; dj2 <= 2; ++dj2)
                for (int di2 = -2; di2 <= 2; ++di2) {
                    int ii = ci + di2, jj = cj + dj2;
                    if (ii < 0 || ii >= g.nx || jj < 0 || jj >= g.ny) continue;
                    if (!d.interior[g.idx(ii, jj)]) continue;
                    double dd = (g.pos(ii, jj) - pts[k]).norm();
                    if (dd < best) {
                        best = dd;
                        bi = ii;
                        bj = jj;
                    }
                }
            ci = bi;
            cj = bj;
        }
        d.boundary.push_back({pts[k], ellipse_normal(pts[k], a, b), w,
                              s + 0.5 * w, 0, ci, cj, -1});
        s += w;
    }
}

inline void add_annulus_boundary(Domain& d) {
    const Grid2D& g = d.grid;
    // component 0: outer circle
    double s = 0.0;
    for (int j = 0; j < g.ny; ++j) {
        double ph = g.phi(j);
        Vec2 nrm{std::cos(ph), std::sin(ph)};
        double w = g.r_outer * g.hy;
        d.boundary.push_back({g.r_outer * nrm, nrm, w, s + 0.5 * w, 0, g.nx - 1, j, 1});
        s += w;
    }
    // component 1: inner circle
    s = 0.0;
    for (int j = 0; j < g.ny; ++j) {
        double ph = g.phi(j);
        Vec2 rad{std::cos(ph), std::sin(ph)};
        double w = g.r_inner * g.hy;
        d.boundary.push_back({g.r_inner * rad, {-rad.x, -rad.y}, w, s + 0.5 * w, 1, 0, j, 0});
        s += w;
    }
}

}  // namespace detail

inline Domain build_domain(const ShapeSpec& spec) {
    Domain d;
    d.kind = spec.kind;
    d.p1 = spec.p1;
    d.p2 = spec.p2;
    switch (spec.kind) {
        case ShapeKind::rectangle:
        case ShapeKind::slab: {
            double Lx = spec.p1, Ly = spec.p2, ox = 0, oy = 0;
            if (spec.kind == ShapeKind::slab) {
                // X = (0, L) x (-a, a) marching slab
                Ly = 2.0 * spec.p2;
                oy = -spec.p2;
            }
            require(Lx > 0 && Ly > 0, "build_domain: sides must be positive");
            require(spec.n >= 9, "build_domain: need at least 9 points per side");
            int nx = spec.n - 1;
            int ny = spec.ny > 0 ? spec.ny
                                 : std::max(8, static_cast<int>(std::lround(nx * Ly / Lx)));
            d.grid = Grid2D::cartesian_box(nx, ny, Lx, Ly, ox, oy);
            d.interior.assign(d.grid.size(), 1);
            detail::add_rect_boundary(d, Lx, Ly);
            d.n_components = 1;
            break;
        }
        case ShapeKind::disc:
        case ShapeKind::ovoid: {
            double a = spec.p1;
            double b = spec.kind == ShapeKind::disc ? spec.p1 : spec.p2;
            require(a > 0 && b > 0, "build_domain: semi-axes must be positive");
            require(spec.n >= 9, "build_domain: need at least 9 points per side");
            int nx = spec.n - 1;
            int ny = std::max(8, static_cast<int>(std::lround(nx * b / a)));
            d.grid = Grid2D::cartesian_box(nx, ny, 2 * a, 2 * b, -a, -b);
            detail::build_masked_shape(d, a, b);
            d.n_components = 1;
            break;
        }
        case ShapeKind::annulus: {
            require(spec.p1 > 0 && spec.p1 < spec.p2,
                    "build_domain: annulus needs 0 < r_inner < r_outer");
            d.grid = Grid2D::polar_annulus(spec.nr, spec.nphi, spec.p1, spec.p2);
            d.interior.assign(d.grid.size(), 1);
            detail::add_annulus_boundary(d);
            d.n_components = 2;
            break;
        }
    }
    return d;
}

// Sum of g * weight over the boundary, in fixed (component, arclength) order.
inline double boundary_integral(const Domain& d, const std::vector<double>& g) {
    require(g.size() == d.boundary.size(),
            "boundary_integral: sample count mismatch");
    double acc = 0.0;
    for (size_t k = 0; k < g.size(); ++k) acc += g[k] * d.boundary[k].weight;
    return acc;
}

inline double boundary_integral(const Domain& d,
                                const std::function<double(const BoundarySample&)>& g) {
    double acc = 0.0;
    for (const auto& bs : d.boundary) acc += g(bs) * bs.weight;
    return acc;
}

}  // namespace aet

// Ultrasound-modulated boundary measurements and recovery of the internal
// functional H by Fourier inversion.
//
// The boundary functional J_eps is an exactly odd function of eps (flipping
// eps swaps the two solves), so J_eps/eps = J1 + O(eps^2) and one Richardson
// level removes the eps^2 term.  The orientation is fixed so that
// J1(k,phi) = int_X H cos(k.x + phi) dx, i.e. Hhat(k) = J1(k,0) + i J1(k,pi/2).
#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "aet/elliptic.hpp"
#include "aet/geometry.hpp"
#include "aet/parallel.hpp"

namespace aet {

struct ModulationSample {
    Vec2 k;
    double phase = 0;  // 0 or pi/2
    double eps = 0;
    double J_eps = 0;
};

inline ScalarField modulated_sigma(const ScalarField& sigma, Vec2 k, double phase,
                                   double eps, double sigma_half_floor = 0.05) {
    require(std::abs(eps) <= 0.05, "modulated_sigma: |eps| must be <= 0.05");
    ScalarField out = sigma;
    const Grid2D& g = sigma.grid;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            Vec2 p = g.pos(i, j);
            int idx = g.idx(i, j);
            out.v[idx] = sigma.v[idx] * (1.0 + eps * std::cos(k.dot(p) + phase));
        }
    if (eps != 0.0)
        for (double v : out.v)
            require(v >= sigma_half_floor * 0.999,
                    "modulated_sigma: modulated field dips below sigma_min/2");
    return out;
}

// J_eps = 1/2 \oint f (sigma_eps du_eps/dnu - sigma_{-eps} du_{-eps}/dnu) dsigma,
// evaluated with the scheme's own discrete face fluxes so the discrete Green
// identity holds to solver tolerance.
inline ModulationSample boundary_functional(const Domain& d, const ScalarField& sigma,
                                            const BoundaryFn& f, Vec2 k, double phase,
                                            double eps, const EllipticOptions& base_opts = {},
                                            const ScalarField* guess = nullptr) {
    require(eps != 0.0, "boundary_functional: eps must be nonzero");
    ScalarField sp = modulated_sigma(sigma, k, phase, +eps);
    ScalarField sm = modulated_sigma(sigma, k, phase, -eps);
    EllipticOptions opts = base_opts;
    opts.guess = guess;
    ScalarField up = solve_elliptic(d, sp, f, opts);
    ScalarField um = solve_elliptic(d, sm, f, opts);
    auto trp = neumann_trace(d, sp, up, f);
    auto trm = neumann_trace(d, sm, um, f);
    double J = 0.0;
    for (size_t c = 0; c < trp.size(); ++c)
        for (size_t s = 0; s < trp[c].sample.size(); ++s) {
            double w = d.boundary[trp[c].sample[s]].weight;
            J += 0.5 * trp[c].f[s] * (trp[c].flux[s] - trm[c].flux[s]) * w;
        }
    return {k, phase, eps, J};
}

// Richardson extrapolation over (eps, eps/2); the odd structure of J_eps
// leaves an O(eps^4) residual.
inline double first_order_coefficient(const ModulationSample& full,
                                      const ModulationSample& half) {
    require((full.k - half.k).norm() < 1e-14 && full.phase == half.phase,
            "first_order_coefficient: samples must share (k, phase)");
    require(std::abs(half.eps - 0.5 * full.eps) < 1e-14 * std::abs(full.eps),
            "first_order_coefficient: need eps and eps/2");
    return (4.0 * half.J_eps / half.eps - full.J_eps / full.eps) / 3.0;
}

// J1 values over the DFT lattice k = 2 pi (m1/L1, m2/L2), |mi| <= m_max,
// both quadrature phases.
struct J1Table {
    int m_max = 0;
    double L1 = 0, L2 = 0;  // bounding box sides
    double ox = 0, oy = 0;
    std::vector<double> jc, js;  // J1(k,0) and J1(k,pi/2), full lattice
    std::vector<std::uint8_t> have;

    int side() const { return 2 * m_max + 1; }
    int idx(int m1, int m2) const { return (m2 + m_max) * side() + (m1 + m_max); }
    Vec2 wavevector(int m1, int m2) const {
        return {2.0 * M_PI * m1 / L1, 2.0 * M_PI * m2 / L2};
    }
    void set(int m1, int m2, double c, double s) {
        jc[idx(m1, m2)] = c;
        js[idx(m1, m2)] = s;
        have[idx(m1, m2)] = 1;
    }
    bool complete() const {
        for (auto h : have)
            if (!h) return false;
        return true;
    }

    static J1Table empty(const Grid2D& g, int m_max) {
        J1Table t;
        t.m_max = m_max;
        t.L1 = g.nx * g.hx;
        t.L2 = g.ny * g.hy;
        t.ox = g.ox;
        t.oy = g.oy;
        int n = t.side() * t.side();
        t.jc.assign(n, 0.0);
        t.js.assign(n, 0.0);
        t.have.assign(n, 0);
        return t;
    }
};

// Direct volume quadrature of J1 from a known internal functional; the
// forward route of the round-trip identity.
inline J1Table j1_from_quadrature(const Domain& d, const ScalarField& H, int m_max) {
    require(d.grid.chart == Chart::cartesian,
            "j1_from_quadrature: Cartesian charts only");
    J1Table t = J1Table::empty(d.grid, m_max);
    const Grid2D& g = d.grid;
    double cell = g.hx * g.hy;
    for (int m2 = -m_max; m2 <= m_max; ++m2)
        for (int m1 = -m_max; m1 <= m_max; ++m1) {
            Vec2 k = t.wavevector(m1, m2);
            double c = 0, s = 0;
            for (int j = 0; j < g.ny; ++j)
                for (int i = 0; i < g.nx; ++i) {
                    if (!d.interior[g.idx(i, j)]) continue;
                    Vec2 p = g.pos(i, j);
                    double arg = k.dot(p);
                    double Hv = H.v[g.idx(i, j)] * cell;
                    c += Hv * std::cos(arg);
                    s -= Hv * std::sin(arg);  // cos(arg + pi/2) = -sin(arg)
                }
            t.set(m1, m2, c, s);
        }
    return t;
}

// Full acquisition pipeline: for every lattice wavevector and phase, measure
// J_eps at eps and eps/2 and Richardson-extrapolate J1.  Only the half
// lattice is solved; the other half follows from H being real.
inline J1Table synthesize_j1_table(const Domain& d, const ScalarField& sigma,
                                   const BoundaryFn& f, int m_max, double eps,
                                   const EllipticOptions& opts = {}, int threads = 0) {
    require(d.grid.chart == Chart::cartesian,
            "synthesize_j1_table: Cartesian charts only");
    J1Table t = J1Table::empty(d.grid, m_max);
    ScalarField u0 = solve_elliptic(d, sigma, f, opts);

    struct Item {
        int m1, m2;
        double phase;
    };
    std::vector<Item> items;
    for (int m2 = -m_max; m2 <= m_max; ++m2)
        for (int m1 = -m_max; m1 <= m_max; ++m1) {
            if (m2 < 0 || (m2 == 0 && m1 < 0)) continue;  // half lattice
            items.push_back({m1, m2, 0.0});
            items.push_back({m1, m2, M_PI / 2});
        }

    std::vector<double> val(items.size());
    parallel_for(
        static_cast<int>(items.size()),
        [&](int n) {
            const Item& it = items[n];
            Vec2 k = t.wavevector(it.m1, it.m2);
            ModulationSample full =
                boundary_functional(d, sigma, f, k, it.phase, eps, opts, &u0);
            ModulationSample half =
                boundary_functional(d, sigma, f, k, it.phase, eps / 2, opts, &u0);
            val[n] = first_order_coefficient(full, half);
        },
        threads);

    for (size_t n = 0; n < items.size(); n += 2) {
        int m1 = items[n].m1, m2 = items[n].m2;
        double c = val[n], s = val[n + 1];
        t.set(m1, m2, c, s);
        t.set(-m1, -m2, c, -s);  // conjugate symmetry of a real H
    }
    return t;
}

struct RecoverStats {
    int clipped = 0;        // negatives within tolerance set to zero
    double min_value = 0;   // smallest recovered value before clipping
    double max_imag = 0;    // largest |Im| relative to the field scale
};

// Assemble Hhat(k) = J1(k,0) + i J1(k,pi/2) and invert the truncated Fourier
// series on the bounding box; the result is restricted to the interior mask.
inline ScalarField recover_H(const Domain& d, const J1Table& t,
                             RecoverStats* stats = nullptr) {
    require(t.complete(), "recover_H: incomplete lattice coverage");
    require(d.grid.chart == Chart::cartesian, "recover_H: Cartesian charts only");
    const Grid2D& g = d.grid;
    int side = t.side();
    using cd = std::complex<double>;

    // factored inverse: row sums over m2, then the m1 sweep
    std::vector<cd> row(side * g.ny, cd(0, 0));
    for (int j = 0; j < g.ny; ++j) {
        double y = g.cy(j);
        for (int m2 = -t.m_max; m2 <= t.m_max; ++m2) {
            double k2 = 2.0 * M_PI * m2 / t.L2;
            cd e2 = std::polar(1.0, k2 * y);
            for (int m1 = -t.m_max; m1 <= t.m_max; ++m1) {
                cd Hhat(t.jc[t.idx(m1, m2)], t.js[t.idx(m1, m2)]);
                row[j * side + (m1 + t.m_max)] += Hhat * e2;
            }
        }
    }
    ScalarField H(g, 0.0);
    double scale = 1.0 / (t.L1 * t.L2);
    double max_imag = 0, max_abs = 0, min_val = 0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double x = g.cx(i);
            cd acc(0, 0);
            for (int m1 = -t.m_max; m1 <= t.m_max; ++m1) {
                double k1 = 2.0 * M_PI * m1 / t.L1;
                acc += row[j * side + (m1 + t.m_max)] * std::polar(1.0, k1 * x);
            }
            double re = acc.real() * scale;
            max_imag = std::max(max_imag, std::abs(acc.imag()) * scale);
            max_abs = std::max(max_abs, std::abs(re));
            H.v[g.idx(i, j)] = re;
        }
    require_num(max_imag <= 1e-10 * std::max(max_abs, 1e-300),
                "recover_H: recovered field is not real");

    int clipped = 0;
    for (int k = 0; k < g.size(); ++k) {
        if (!d.interior[k]) {
            H.v[k] = 0.0;
            continue;
        }
        min_val = std::min(min_val, H.v[k]);
        if (H.v[k] < 0.0 && H.v[k] > -1e-6 * std::max(max_abs, 1.0)) {
            H.v[k] = 0.0;
            ++clipped;
        }
    }
    if (stats) *stats = {clipped, min_val, max_imag / std::max(max_abs, 1e-300)};
    return H;
}

}  // namespace aet

// Explicit marching for the nonlinear hyperbolic Cauchy problem
//   g^{ij}(grad u) d2_ij u + k . grad u = 0,   g = 2 uhat@uhat - I,
//   k = -grad ln H,
// from a space-like boundary, with sigma = H/|grad u|^2 on the marched cells,
// plus the linearized twin solve used by the stability studies.
//
// Scheme: three-level leapfrog on an internal sub-lattice dt = hx/m (m even,
// chosen from the CFL bound), with a per-step Picard refresh of the
// gradient-dependent coefficients; the time-central cross derivative rides
// the same iteration.  Cells are trimmed when |grad u| falls under the
// gradient floor, when g^tt drops under margin_min (or the local cone slope
// outruns the sub-lattice), and laterally at the accumulated null-ray rate,
// so the valid set tracks the domain of influence.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "aet/elliptic.hpp"
#include "aet/geometry.hpp"
#include "aet/lorentz.hpp"

namespace aet {

enum class TrimReason { gradient_floor, hyperbolicity_loss, cone_trim };

struct MarchConfig {
    MarchDirection direction = MarchDirection::axis_x1;
    double cfl = 0.5;
    double g_min = 1e-3;       // relative to median |j| on the data face
    double margin_min = 0.05;  // floor on g^tt (and on the theta margin, linearized)
    int picard_iters = 2;
    int substeps_min = 2;      // even sub-steps per cell layer
};

struct CellTrim {
    int i, j;
    TrimReason reason;
};

struct MarchStats {
    double dt = 0;
    int substeps_per_cell = 0;
    int levels_done = 0;
    double depth = 0;  // marching distance achieved
    int n_gradient_floor = 0, n_hyperbolicity = 0, n_cone = 0;
};

struct ReconstructionResult {
    ScalarField u, sigma;
    VectorField grad_u;  // marching-frame components (d_t u, lateral)
    Mask valid;
    std::vector<CellTrim> failure_log;
    MarchStats stats;
};

struct TrimEvent {
    double t;
    int j;
    TrimReason reason;
};

namespace detail {

// ------------------------------------------------------------------ strip --
// One marching strip: lateral array evolved over an internal t-lattice.

struct StripLevel {
    std::vector<double> u, dudt;
    std::vector<std::uint8_t> valid;
};

struct StripProblem {
    int nlat = 0;
    double hlat = 0;       // index spacing (hy, or hphi on the polar chart)
    bool periodic = false;
    bool polar = false;
    double r0 = 0;         // polar: r at t = 0, r(t) = r0 - t
    double t0 = 0, dt = 0;
    int nsteps = 0;
    std::function<double(double, int)> kt, kl;  // - grad ln H, frame components
    std::vector<double> u0, dudt0;
    std::vector<std::uint8_t> valid0;
    std::vector<int> record;  // sub-levels to record
    double g_min_abs = 1e-3, margin_min = 0.05;
    std::vector<double> g_min_lat;  // optional per-lateral floor (overrides g_min_abs)
    double exp_rate = 0.0;  // lateral e^{rate y} profile for fitted stencils
    int picard = 2;
};

struct StripResult {
    std::vector<StripLevel> at_levels;
    StripLevel end;
    std::vector<TrimEvent> trims;
    int steps_done = 0;
    double max_slope_seen = 0;
};

// Lateral stencil weights fitted to the basis {1, e^{ry}, e^{-ry}}: exact on
// exponentially growing profiles, which keeps one-sided edge stencils from
// seeding error growth under CGO data.  rate = 0 keeps polynomial stencils.
struct ExpStencil {
    bool active = false;
    // node order: central {j-1, j, j+1}; up {j, j+1, j+2}; dn {j, j-1, j-2}
    double d1c[3] = {}, d2c[3] = {};
    double d1up[3] = {}, d2up[3] = {};
    double d1dn[3] = {}, d2dn[3] = {};
    double d1up2[2] = {}, d1dn2[2] = {};
};

inline ExpStencil make_exp_stencil(double rate, double h) {
    ExpStencil s;
    if (rate == 0.0) return s;
    s.active = true;
    auto fit = [&](const double off[3], double d1[3], double d2[3]) {
        Eigen::Matrix3d M;
        for (int n = 0; n < 3; ++n) {
            double y = off[n] * h;
            M(n, 0) = 1.0;
            M(n, 1) = std::exp(rate * y);
            M(n, 2) = std::exp(-rate * y);
        }
        Eigen::Matrix3d Mi = M.inverse();
        for (int n = 0; n < 3; ++n) {
            d1[n] = rate * (Mi(1, n) - Mi(2, n));
            d2[n] = rate * rate * (Mi(1, n) + Mi(2, n));
        }
    };
    const double oc[3] = {-1, 0, 1}, ou[3] = {0, 1, 2}, od[3] = {0, -1, -2};
    fit(oc, s.d1c, s.d2c);
    fit(ou, s.d1up, s.d2up);
    fit(od, s.d1dn, s.d2dn);
    double qu = std::exp(rate * h), qd = std::exp(-rate * h);
    s.d1up2[0] = -rate / (qu - 1.0);
    s.d1up2[1] = rate / (qu - 1.0);
    s.d1dn2[0] = -rate / (qd - 1.0);
    s.d1dn2[1] = rate / (qd - 1.0);
    return s;
}

struct LateralOps {
    int n;
    double h;
    bool periodic;
    const std::vector<std::uint8_t>* valid;
    const ExpStencil* es = nullptr;

    int wrap(int j) const {
        if (!periodic) return j;
        int m = j % n;
        return m < 0 ? m + n : m;
    }
    bool ok(int j) const {
        if (periodic) return (*valid)[wrap(j)] != 0;
        return j >= 0 && j < n && (*valid)[j] != 0;
    }
    double at(const std::vector<double>& a, int j) const { return a[wrap(j)]; }
    bool fitted() const { return es != nullptr && es->active; }

    // first derivative, central where possible, one-sided otherwise
    std::optional<double> d1(const std::vector<double>& a, int j) const {
        bool up = ok(j + 1), dn = ok(j - 1);
        if (up && dn) {
            if (fitted())
                return es->d1c[0] * at(a, j - 1) + es->d1c[1] * at(a, j) +
                       es->d1c[2] * at(a, j + 1);
            return (at(a, j + 1) - at(a, j - 1)) / (2 * h);
        }
        if (up) {
            if (ok(j + 2)) {
                if (fitted())
                    return es->d1up[0] * at(a, j) + es->d1up[1] * at(a, j + 1) +
                           es->d1up[2] * at(a, j + 2);
                return (-3 * at(a, j) + 4 * at(a, j + 1) - at(a, j + 2)) / (2 * h);
            }
            if (fitted()) return es->d1up2[0] * at(a, j) + es->d1up2[1] * at(a, j + 1);
            return (at(a, j + 1) - at(a, j)) / h;
        }
        if (dn) {
            if (ok(j - 2)) {
                if (fitted())
                    return es->d1dn[0] * at(a, j) + es->d1dn[1] * at(a, j - 1) +
                           es->d1dn[2] * at(a, j - 2);
                return (3 * at(a, j) - 4 * at(a, j - 1) + at(a, j - 2)) / (2 * h);
            }
            if (fitted()) return es->d1dn2[0] * at(a, j) + es->d1dn2[1] * at(a, j - 1);
            return (at(a, j) - at(a, j - 1)) / h;
        }
        return std::nullopt;
    }

    // second derivative; shifted 3-point stencils at edges (first order there)
    std::optional<double> d2(const std::vector<double>& a, int j) const {
        bool up = ok(j + 1), dn = ok(j - 1);
        if (up && dn) {
            if (fitted())
                return es->d2c[0] * at(a, j - 1) + es->d2c[1] * at(a, j) +
                       es->d2c[2] * at(a, j + 1);
            return (at(a, j + 1) - 2 * at(a, j) + at(a, j - 1)) / (h * h);
        }
        if (up && ok(j + 2)) {
            if (fitted())
                return es->d2up[0] * at(a, j) + es->d2up[1] * at(a, j + 1) +
                       es->d2up[2] * at(a, j + 2);
            return (at(a, j) - 2 * at(a, j + 1) + at(a, j + 2)) / (h * h);
        }
        if (dn && ok(j - 2)) {
            if (fitted())
                return es->d2dn[0] * at(a, j) + es->d2dn[1] * at(a, j - 1) +
                       es->d2dn[2] * at(a, j - 2);
            return (at(a, j) - 2 * at(a, j - 1) + at(a, j - 2)) / (h * h);
        }
        return std::nullopt;
    }
};

// characteristic lateral slopes of A s^2 - 2 B s + C = 0; for the normalized
// metric B^2 - AC = 1 exactly
inline double max_char_slope(double A, double B, double C) {
    double disc = B * B - A * C;
    if (disc <= 0 || std::abs(A) < 1e-300) return 1e9;
    double rt = std::sqrt(disc);
    return std::max(std::abs((B + rt) / A), std::abs((B - rt) / A));
}

inline StripResult march_strip(const StripProblem& p) {
    StripResult res;
    const ExpStencil es = make_exp_stencil(p.polar ? 0.0 : p.exp_rate, p.hlat);
    const int n = p.nlat;
    std::vector<double> u_prev = p.u0, u_cur(n, 0.0), u_next(n, 0.0), dudt(n, 0.0);
    std::vector<std::uint8_t> valid = p.valid0;
    std::vector<std::uint8_t> next_valid(n, 0);
    std::vector<TrimReason> trim_reason(n, TrimReason::cone_trim);
    std::vector<std::uint8_t> trim_flag(n, 0);
    double erode_budget = 0.0;

    auto phys_hlat = [&](double t) {
        return p.polar ? (p.r0 - t) * p.hlat : p.hlat;
    };
    auto record_if_needed = [&](int level, const std::vector<double>& u,
                                const std::vector<double>& du,
                                const std::vector<std::uint8_t>& vv) {
        for (int rl : p.record)
            if (rl == level) res.at_levels.push_back({u, du, vv});
    };

    // --- start layer: u(dt) = u0 + dt u_t + dt^2/2 u_tt (PDE at t0) ---------
    {
        LateralOps lat{n, p.hlat, p.periodic, &valid, &es};
        double r = p.polar ? p.r0 : 0.0;
        std::fill(trim_flag.begin(), trim_flag.end(), 0);
        for (int j = 0; j < n; ++j) {
            if (!valid[j]) continue;
            auto du_l_i = lat.d1(p.u0, j);
            auto d2_l_i = lat.d2(p.u0, j);
            auto dty_i = lat.d1(p.dudt0, j);
            if (!du_l_i || !d2_l_i || !dty_i) {
                trim_flag[j] = 1;
                trim_reason[j] = TrimReason::cone_trim;
                continue;
            }
            double fl = p.polar ? 1.0 / r : 1.0;  // frame factor for d_phi
            double dul = *du_l_i * fl;
            double dut = p.dudt0[j];
            double nrm = std::hypot(dut, dul);
            if (nrm < (p.g_min_lat.empty() ? p.g_min_abs : p.g_min_lat[j])) {
                trim_flag[j] = 1;
                trim_reason[j] = TrimReason::gradient_floor;
                continue;
            }
            double ut = dut / nrm, ul = dul / nrm;
            double A = 2 * ut * ut - 1, B = 2 * ut * ul, C = 2 * ul * ul - 1;
            if (A < p.margin_min) {
                trim_flag[j] = 1;
                trim_reason[j] = TrimReason::hyperbolicity_loss;
                continue;
            }
            double d2l = *d2_l_i * fl * fl;
            double dty = *dty_i * fl;
            double lower = 0.0;
            if (p.polar) lower = (2 * B / r) * dul - (C / r) * dut;
            double utt = -(2 * B * dty + C * d2l + p.kt(p.t0, j) * dut +
                           p.kl(p.t0, j) * dul + lower) /
                         A;
            u_cur[j] = p.u0[j] + p.dt * dut + 0.5 * p.dt * p.dt * utt;
            if (!std::isfinite(u_cur[j])) {
                trim_flag[j] = 1;
                trim_reason[j] = TrimReason::hyperbolicity_loss;
            }
        }
        for (int j = 0; j < n; ++j)
            if (trim_flag[j]) {
                valid[j] = 0;
                res.trims.push_back({p.t0, j, trim_reason[j]});
            }
    }
    record_if_needed(0, u_prev, p.dudt0, valid);

    // --- leapfrog levels ----------------------------------------------------
    for (int q = 1; q < p.nsteps; ++q) {
        double t_c = p.t0 + q * p.dt;  // level carrying the PDE evaluation
        double r = p.polar ? p.r0 - (t_c - p.t0) : 0.0;
        if (p.polar && r <= 0.5 * p.hlat) break;
        double hl_phys = phys_hlat(t_c - p.t0);
        LateralOps lat{n, p.hlat, p.periodic, &valid, &es};

        // predictor
        for (int j = 0; j < n; ++j)
            u_next[j] = valid[j] ? 2 * u_cur[j] - u_prev[j] : 0.0;

        std::fill(trim_flag.begin(), trim_flag.end(), 0);
        double level_slope = 1.0;
        for (int it = 0; it < p.picard; ++it) {
            for (int j = 0; j < n; ++j)
                dudt[j] = valid[j] ? (u_next[j] - u_prev[j]) / (2 * p.dt) : 0.0;
            double slope = 1.0;
            for (int j = 0; j < n; ++j) {
                if (!valid[j] || trim_flag[j]) continue;
                auto du_l_i = lat.d1(u_cur, j);
                auto d2_l_i = lat.d2(u_cur, j);
                auto dty_i = lat.d1(dudt, j);
                if (!du_l_i || !d2_l_i || !dty_i) {
                    trim_flag[j] = 1;
                    trim_reason[j] = TrimReason::cone_trim;
                    continue;
                }
                double fl = p.polar ? 1.0 / r : 1.0;
                double dul = *du_l_i * fl;
                double dut = dudt[j];
                double nrm = std::hypot(dut, dul);
                if (nrm < (p.g_min_lat.empty() ? p.g_min_abs : p.g_min_lat[j])) {
                    trim_flag[j] = 1;
                    trim_reason[j] = TrimReason::gradient_floor;
                    continue;
                }
                double ut = dut / nrm, ul = dul / nrm;
                double A = 2 * ut * ut - 1, B = 2 * ut * ul, C = 2 * ul * ul - 1;
                if (A < p.margin_min) {
                    trim_flag[j] = 1;
                    trim_reason[j] = TrimReason::hyperbolicity_loss;
                    continue;
                }
                double sl = max_char_slope(A, B, C);
                if (sl * p.dt > hl_phys) {  // sub-lattice cone can no longer cover
                    trim_flag[j] = 1;
                    trim_reason[j] = TrimReason::hyperbolicity_loss;
                    continue;
                }
                slope = std::max(slope, sl);
                double d2l = *d2_l_i * fl * fl;
                double dty = *dty_i * fl;
                double lower = 0.0;
                if (p.polar) lower = (2 * B / r) * dul - (C / r) * dut;
                double utt = -(2 * B * dty + C * d2l + p.kt(t_c, j) * dut +
                               p.kl(t_c, j) * dul + lower) /
                             A;
                double cand = 2 * u_cur[j] - u_prev[j] + p.dt * p.dt * utt;
                if (!std::isfinite(cand)) {
                    trim_flag[j] = 1;
                    trim_reason[j] = TrimReason::hyperbolicity_loss;
                    continue;
                }
                u_next[j] = cand;
            }
            level_slope = slope;
        }
        res.max_slope_seen = std::max(res.max_slope_seen, level_slope);

        next_valid = valid;
        for (int j = 0; j < n; ++j)
            if (valid[j] && trim_flag[j]) {
                next_valid[j] = 0;
                res.trims.push_back({t_c, j, trim_reason[j]});
            }

        // lateral erosion at the accumulated null-ray rate
        erode_budget += level_slope * p.dt / hl_phys;
        while (erode_budget >= 1.0) {
            erode_budget -= 1.0;
            std::vector<std::uint8_t> shrunk = next_valid;
            for (int j = 0; j < n; ++j) {
                if (!next_valid[j]) continue;
                bool up_gone = p.periodic ? !next_valid[(j + 1) % n]
                                          : (j + 1 >= n || !next_valid[j + 1]);
                bool dn_gone = p.periodic ? !next_valid[(j + n - 1) % n]
                                          : (j - 1 < 0 || !next_valid[j - 1]);
                if (up_gone || dn_gone) {
                    shrunk[j] = 0;
                    res.trims.push_back({t_c, j, TrimReason::cone_trim});
                }
            }
            next_valid.swap(shrunk);
        }

        // record the PDE level (its centered du/dt is now available)
        for (int j = 0; j < n; ++j)
            dudt[j] = next_valid[j] ? (u_next[j] - u_prev[j]) / (2 * p.dt) : 0.0;
        record_if_needed(q, u_cur, dudt, next_valid);

        u_prev.swap(u_cur);
        u_cur.swap(u_next);
        valid = next_valid;
        res.steps_done = q;
        bool alive = false;
        for (auto v : valid) alive |= (v != 0);
        if (!alive) break;
    }

    // end state: one-sided du/dt at the last computed level
    res.end.u = u_cur;
    res.end.valid = valid;
    res.end.dudt.assign(n, 0.0);
    for (int j = 0; j < n; ++j)
        if (valid[j]) res.end.dudt[j] = (u_cur[j] - u_prev[j]) / p.dt;
    return res;
}

// linear interpolation of a grid column field at marching coordinate t
struct ColumnInterp {
    const ScalarField* f;
    bool reversed;  // true: t runs against the i axis (radial inward)

    double operator()(double t, int j) const {
        const Grid2D& g = f->grid;
        double s = t / g.hx - 0.5;
        if (reversed) s = (g.nx - 1) - s;
        int i0 = std::clamp(static_cast<int>(std::floor(s)), 0, g.nx - 2);
        double w = s - i0;
        w = std::clamp(w, -0.5, 1.5);
        return (1 - w) * f->v[g.idx(i0, j)] + w * f->v[g.idx(i0 + 1, j)];
    }
};

inline double median_abs(std::vector<double> v) {
    for (auto& x : v) x = std::abs(x);
    std::sort(v.begin(), v.end());
    return v.empty() ? 0.0 : v[v.size() / 2];
}

}  // namespace detail

// Reconstruct sigma = H / |grad u|^2 on cells where the gradient clears the
// floor; below-floor cells are invalidated, never divided through.
struct SigmaRecovery {
    ScalarField sigma;
    Mask valid;
};

inline SigmaRecovery recover_sigma(const Domain& d, const ScalarField& H,
                                   const ScalarField& u, double g_min = 1e-3) {
    VectorField gu = gradient(d, u);
    SigmaRecovery out{ScalarField(d.grid, 0.0), Mask(d.grid.size(), 0)};
    for (int k = 0; k < d.grid.size(); ++k) {
        if (!d.interior[k]) continue;
        double n2 = gu.vx[k] * gu.vx[k] + gu.vy[k] * gu.vy[k];
        if (std::sqrt(n2) < g_min) continue;
        out.sigma.v[k] = H.v[k] / n2;
        out.valid[k] = 1;
    }
    return out;
}

// March the nonlinear equation from the left face (axis_x1) of a Cartesian
// slab/rectangle domain.  The Cauchy trace must live on that face.
inline ReconstructionResult march_nonlinear(const Domain& d, const ScalarField& H,
                                            const CauchyTrace& cauchy,
                                            const MarchConfig& cfg = {}) {
    require(d.grid.chart == Chart::cartesian, "march_nonlinear: Cartesian domains");
    require(cfg.direction == MarchDirection::axis_x1,
            "march_nonlinear: use march_polar for radial marches");
    const Grid2D& g = d.grid;

    // per-lateral-cell Cauchy data from the face samples
    std::vector<double> f(g.ny, 0.0), jn(g.ny, 0.0);
    std::vector<std::uint8_t> have(g.ny, 0);
    for (size_t s = 0; s < cauchy.sample.size(); ++s) {
        const BoundarySample& bs = d.boundary[cauchy.sample[s]];
        if (bs.face != 0) continue;
        f[bs.cj] = cauchy.f[s];
        jn[bs.cj] = cauchy.j[s];
        have[bs.cj] = 1;
    }
    int nface = 0;
    for (auto h : have) nface += h;
    require(nface > 0, "march_nonlinear: empty first layer");

    double fscale = 0.0;
    for (double v : f) fscale = std::max(fscale, std::abs(v));
    double gmin_abs = cfg.g_min * detail::median_abs(jn);
    require(detail::median_abs(jn) > 1e-10 * (1.0 + fscale),
            "march_nonlinear: Cauchy data has zero normal derivative");

    // space-like precondition with e from the data, beta = 1
    detail::LateralOps lat{g.ny, g.hy, false, &have};
    double max_slope0 = 1.0;
    for (int j = 0; j < g.ny; ++j) {
        if (!have[j]) continue;
        require(std::abs(jn[j]) >= gmin_abs,
                "march_nonlinear: |j| under the gradient floor on Sigma1");
        auto fp = lat.d1(f, j);
        double dut = -jn[j];  // inward derivative
        double dul = fp ? *fp : 0.0;
        double margin = dut * dut / (dut * dut + dul * dul) - 0.5;
        require(margin > 0, "march_nonlinear: Sigma1 is not space-like at lateral cell " +
                                std::to_string(j));
        double nrm = std::hypot(dut, dul);
        double ut = dut / nrm, ul = dul / nrm;
        max_slope0 = std::max(max_slope0,
                              detail::max_char_slope(2 * ut * ut - 1, 2 * ut * ul,
                                                     2 * ul * ul - 1));
    }
    for (int k = 0; k < g.size(); ++k)
        require(!d.interior[k] || H.v[k] > 0, "march_nonlinear: H must be positive");

    // sub-lattice: even number of steps per cell layer obeying the CFL bound
    double dt_max = cfg.cfl * g.hy / max_slope0;
    int m = std::max(cfg.substeps_min, static_cast<int>(std::ceil(g.hx / dt_max)));
    if (m % 2) ++m;
    double dt = g.hx / m;

    // drift accessors from the cell-centered -grad ln H
    ScalarField lnH(g, 0.0);
    for (int k = 0; k < g.size(); ++k)
        lnH.v[k] = d.interior[k] && H.v[k] > 0 ? std::log(H.v[k]) : 0.0;
    VectorField glnH = gradient(d, lnH);
    ScalarField ktf(g, 0.0), klf(g, 0.0);
    for (int k = 0; k < g.size(); ++k) {
        ktf.v[k] = -glnH.vx[k];
        klf.v[k] = -glnH.vy[k];
    }

    detail::StripProblem p;
    p.nlat = g.ny;
    p.hlat = g.hy;
    p.periodic = false;
    p.polar = false;
    p.t0 = 0.0;
    p.dt = dt;
    p.nsteps = g.nx * m + 1;
    p.kt = detail::ColumnInterp{&ktf, false};
    p.kl = detail::ColumnInterp{&klf, false};
    p.u0 = f;
    p.dudt0.resize(g.ny);
    for (int j = 0; j < g.ny; ++j) p.dudt0[j] = -jn[j];
    p.valid0 = have;
    for (int i = 0; i < g.nx; ++i) p.record.push_back(m / 2 + i * m);
    p.g_min_abs = gmin_abs;
    p.margin_min = cfg.margin_min;
    p.picard = cfg.picard_iters;

    detail::StripResult sr = detail::march_strip(p);

    ReconstructionResult out{ScalarField(g, 0.0), ScalarField(g, 0.0), VectorField(g),
                             Mask(g.size(), 0), {}, {}};
    out.stats.dt = dt;
    out.stats.substeps_per_cell = m;
    out.stats.levels_done = static_cast<int>(sr.at_levels.size());
    out.stats.depth = sr.steps_done * dt;

    for (size_t li = 0; li < sr.at_levels.size(); ++li) {
        const auto& lv = sr.at_levels[li];
        int i = static_cast<int>(li);
        std::vector<std::uint8_t> vv = lv.valid;
        detail::LateralOps lops{g.ny, g.hy, false, &vv};
        for (int j = 0; j < g.ny; ++j) {
            if (!lv.valid[j]) continue;
            int k = g.idx(i, j);
            out.u.v[k] = lv.u[j];
            auto dl = lops.d1(lv.u, j);
            double dut = lv.dudt[j], dul = dl ? *dl : 0.0;
            out.grad_u.vx[k] = dut;
            out.grad_u.vy[k] = dul;
            double n2 = dut * dut + dul * dul;
            if (std::sqrt(n2) < gmin_abs) {
                out.failure_log.push_back({i, j, TrimReason::gradient_floor});
                continue;
            }
            out.sigma.v[k] = H.v[k] / n2;
            out.valid[k] = 1;
        }
    }
    for (const auto& te : sr.trims) {
        int i = std::clamp(static_cast<int>(te.t / g.hx), 0, g.nx - 1);
        out.failure_log.push_back({i, te.j, te.reason});
        if (te.reason == TrimReason::gradient_floor) ++out.stats.n_gradient_floor;
        if (te.reason == TrimReason::hyperbolicity_loss) ++out.stats.n_hyperbolicity;
        if (te.reason == TrimReason::cone_trim) ++out.stats.n_cone;
    }
    return out;
}

// Radial inward march over the polar annulus chart from the outer circle.
inline ReconstructionResult march_polar(const Domain& d, const ScalarField& H,
                                        const CauchyTrace& cauchy,
                                        const MarchConfig& cfg = {}) {
    require(d.grid.chart == Chart::polar, "march_polar: annulus domains only");
    require(cauchy.component_id == 0, "march_polar: Cauchy data must sit on Sigma0");
    const Grid2D& g = d.grid;

    std::vector<double> f(g.ny, 0.0), jn(g.ny, 0.0);
    std::vector<std::uint8_t> have(g.ny, 0);
    for (size_t s = 0; s < cauchy.sample.size(); ++s) {
        const BoundarySample& bs = d.boundary[cauchy.sample[s]];
        f[bs.cj] = cauchy.f[s];
        jn[bs.cj] = cauchy.j[s];
        have[bs.cj] = 1;
    }
    require(mask_count(have) == g.ny, "march_polar: need the full outer circle");

    double fscale = 0.0;
    for (double v : f) fscale = std::max(fscale, std::abs(v));
    double gmin_abs = cfg.g_min * detail::median_abs(jn);
    require(detail::median_abs(jn) > 1e-10 * (1.0 + fscale),
            "march_polar: Cauchy data has zero normal derivative");

    detail::LateralOps lat{g.ny, g.hy, true, &have};
    double max_slope0 = 1.0;
    for (int j = 0; j < g.ny; ++j) {
        require(std::abs(jn[j]) >= gmin_abs,
                "march_polar: |j| under the gradient floor on Sigma0");
        auto fp = lat.d1(f, j);
        double dut = -jn[j];  // t = r_outer - r, inward
        double dul = (fp ? *fp : 0.0) / g.r_outer;
        double margin = dut * dut / (dut * dut + dul * dul) - 0.5;
        require(margin > 0, "march_polar: Sigma0 is not space-like at angular cell " +
                                std::to_string(j));
        double nrm = std::hypot(dut, dul);
        double ut = dut / nrm, ul = dul / nrm;
        max_slope0 = std::max(max_slope0,
                              detail::max_char_slope(2 * ut * ut - 1, 2 * ut * ul,
                                                     2 * ul * ul - 1));
    }
    for (int k = 0; k < g.size(); ++k)
        require(H.v[k] > 0, "march_polar: H must be positive");

    double hlat_min = g.r_inner * g.hy;
    double dt_max = cfg.cfl * hlat_min / max_slope0;
    int m = std::max(cfg.substeps_min, static_cast<int>(std::ceil(g.hx / dt_max)));
    if (m % 2) ++m;
    double dt = g.hx / m;

    ScalarField lnH(g, 0.0);
    for (int k = 0; k < g.size(); ++k) lnH.v[k] = std::log(H.v[k]);
    VectorField glnH = gradient(d, lnH);  // frame components (d_r, (1/r) d_phi)
    ScalarField ktf(g, 0.0), klf(g, 0.0);
    for (int k = 0; k < g.size(); ++k) {
        ktf.v[k] = glnH.vx[k];   // m_tau = -d_tau lnH = +d_r lnH
        klf.v[k] = -glnH.vy[k];  // m_l = -(1/r) d_phi lnH
    }

    detail::StripProblem p;
    p.nlat = g.ny;
    p.hlat = g.hy;
    p.periodic = true;
    p.polar = true;
    p.r0 = g.r_outer;
    p.t0 = 0.0;
    p.dt = dt;
    p.nsteps = g.nx * m + 1;
    p.kt = detail::ColumnInterp{&ktf, true};
    p.kl = detail::ColumnInterp{&klf, true};
    p.u0 = f;
    p.dudt0.resize(g.ny);
    for (int j = 0; j < g.ny; ++j) p.dudt0[j] = -jn[j];
    p.valid0 = have;
    for (int i = 0; i < g.nx; ++i) p.record.push_back(m / 2 + i * m);
    p.g_min_abs = gmin_abs;
    p.margin_min = cfg.margin_min;
    p.picard = cfg.picard_iters;

    detail::StripResult sr = detail::march_strip(p);

    ReconstructionResult out{ScalarField(g, 0.0), ScalarField(g, 0.0), VectorField(g),
                             Mask(g.size(), 0), {}, {}};
    out.stats.dt = dt;
    out.stats.substeps_per_cell = m;
    out.stats.levels_done = static_cast<int>(sr.at_levels.size());
    out.stats.depth = sr.steps_done * dt;

    for (size_t li = 0; li < sr.at_levels.size(); ++li) {
        const auto& lv = sr.at_levels[li];
        int i = g.nx - 1 - static_cast<int>(li);  // level 0 is the outermost ring
        if (i < 0) break;
        double r = g.r(i);
        std::vector<std::uint8_t> vv = lv.valid;
        detail::LateralOps lops{g.ny, g.hy, true, &vv};
        for (int j = 0; j < g.ny; ++j) {
            if (!lv.valid[j]) continue;
            int k = g.idx(i, j);
            out.u.v[k] = lv.u[j];
            auto dl = lops.d1(lv.u, j);
            double dut = lv.dudt[j];            // = -d_r u
            double dul = (dl ? *dl : 0.0) / r;  // frame angular component
            out.grad_u.vx[k] = -dut;            // store d_r u
            out.grad_u.vy[k] = dul;
            double n2 = dut * dut + dul * dul;
            if (std::sqrt(n2) < gmin_abs) {
                out.failure_log.push_back({i, j, TrimReason::gradient_floor});
                continue;
            }
            out.sigma.v[k] = H.v[k] / n2;
            out.valid[k] = 1;
        }
    }
    for (const auto& te : sr.trims) {
        int i = std::clamp(g.nx - 1 - static_cast<int>(te.t / g.hx), 0, g.nx - 1);
        out.failure_log.push_back({i, te.j, te.reason});
        if (te.reason == TrimReason::gradient_floor) ++out.stats.n_gradient_floor;
        if (te.reason == TrimReason::hyperbolicity_loss) ++out.stats.n_hyperbolicity;
        if (te.reason == TrimReason::cone_trim) ++out.stats.n_cone;
    }
    return out;
}

// ----------------------------------------------------------- linearized ----
// March g^{ij} d2_ij v + kk^i d_i v + d_i (l^i dH) = 0 with Cauchy data
// (df, dj) on the left face.  Coefficients come from a metric_pair field; the
// drift kk = div(g) and the source div(l dH) are assembled by discrete
// product-rule expansion of the divergence-form equation.
struct LinearizedResult {
    ScalarField v;
    Mask valid;
    std::vector<CellTrim> failure_log;
};

inline LinearizedResult linearized_solve(const Domain& d, const ScalarField& u,
                                         const ScalarField& ut, const ScalarField& dH,
                                         const std::vector<double>& df,
                                         const std::vector<double>& dj,
                                         const LorentzDirectionField& metric,
                                         const MarchConfig& cfg = {}) {
    require(d.grid.chart == Chart::cartesian, "linearized_solve: Cartesian domains");
    const Grid2D& g = d.grid;
    require(static_cast<int>(df.size()) == g.ny && static_cast<int>(dj.size()) == g.ny,
            "linearized_solve: Cauchy arrays must cover the left face");

    // metric tensor component fields
    ScalarField Af(g, 0.0), Bf(g, 0.0), Cf(g, 0.0), thetaf(g, -1.0);
    for (int k = 0; k < g.size(); ++k) {
        if (!metric.valid[k]) continue;
        Mat2 gt = g_tensor({metric.e.vx[k], metric.e.vy[k]}, metric.alpha.v[k],
                           metric.beta.v[k]);
        Af.v[k] = gt.a11;
        Bf.v[k] = gt.a12;
        Cf.v[k] = gt.a22;
        double et = metric.e.vx[k], b = metric.beta.v[k];
        thetaf.v[k] = et * et - 1.0 / (1.0 + b * b);
    }
    // kk^j = d_i g^{ij}
    VectorField dA = gradient(d, Af), dB = gradient(d, Bf), dC = gradient(d, Cf);
    ScalarField kkt(g, 0.0), kkl(g, 0.0);
    for (int k = 0; k < g.size(); ++k) {
        kkt.v[k] = dA.vx[k] + dB.vy[k];
        kkl.v[k] = dB.vx[k] + dC.vy[k];
    }
    // source S = d_i (l^i dH).  With g oriented positive along e as in
    // g_tensor, the divergence-form derivation fixes
    // l = -(grad u/|grad u|^2 + grad ut/|grad ut|^2); the sign is pinned by
    // the nonlinear-twin oracle.
    VectorField gu = gradient(d, u), gt2 = gradient(d, ut);
    ScalarField lx(g, 0.0), ly(g, 0.0);
    for (int k = 0; k < g.size(); ++k) {
        double nu = gu.vx[k] * gu.vx[k] + gu.vy[k] * gu.vy[k];
        double nt = gt2.vx[k] * gt2.vx[k] + gt2.vy[k] * gt2.vy[k];
        if (nu < 1e-12 || nt < 1e-12) continue;
        lx.v[k] = -(gu.vx[k] / nu + gt2.vx[k] / nt) * dH.v[k];
        ly.v[k] = -(gu.vy[k] / nu + gt2.vy[k] / nt) * dH.v[k];
    }
    VectorField dlx = gradient(d, lx), dly = gradient(d, ly);
    ScalarField Sf(g, 0.0);
    for (int k = 0; k < g.size(); ++k) Sf.v[k] = dlx.vx[k] + dly.vy[k];

    // CFL from the metric's characteristic slopes
    double smax = 1.0;
    for (int k = 0; k < g.size(); ++k)
        if (metric.valid[k] && thetaf.v[k] >= cfg.margin_min)
            smax = std::max(smax, detail::max_char_slope(Af.v[k], Bf.v[k], Cf.v[k]));
    double dt_max = cfg.cfl * g.hy / smax;
    int m = std::max(cfg.substeps_min, static_cast<int>(std::ceil(g.hx / dt_max)));
    if (m % 2) ++m;
    double dt = g.hx / m;

    detail::ColumnInterp Ai{&Af, false}, Bi{&Bf, false}, Ci{&Cf, false};
    detail::ColumnInterp kti{&kkt, false}, kli{&kkl, false}, Si{&Sf, false},
        thi{&thetaf, false};

    // bespoke linear leapfrog (coefficients frozen per level, cross term
    // iterated twice)
    int n = g.ny;
    std::vector<double> vprev(df), vcur(n, 0.0), vnext(n, 0.0), dvdt(n, 0.0);
    std::vector<std::uint8_t> valid(n, 1), trim(n, 0);
    LinearizedResult out{ScalarField(g, 0.0), Mask(g.size(), 0), {}};

    auto theta_ok = [&](double t, int j) { return thi(t, j) >= cfg.margin_min; };

    {  // start layer
        detail::LateralOps lat{n, g.hy, false, &valid};
        for (int j = 0; j < n; ++j) {
            double A = Ai(0.0, j);
            auto d1 = lat.d1(vprev, j);
            auto d2 = lat.d2(vprev, j);
            std::vector<double> dj0(dj);
            for (auto& x : dj0) x = -x;
            auto dty = lat.d1(dj0, j);
            if (!d1 || !d2 || !dty || !theta_ok(0.0, j)) {
                trim[j] = 1;
                continue;
            }
            double vtt = -(2 * Bi(0.0, j) * *dty + Ci(0.0, j) * *d2 +
                           kti(0.0, j) * (-dj[j]) + kli(0.0, j) * *d1 + Si(0.0, j)) /
                         A;
            vcur[j] = vprev[j] + dt * (-dj[j]) + 0.5 * dt * dt * vtt;
        }
        for (int j = 0; j < n; ++j)
            if (trim[j]) valid[j] = 0;
    }

    double erode = 0.0;
    int nsteps = g.nx * m + 1;
    std::vector<int> record;
    for (int i = 0; i < g.nx; ++i) record.push_back(m / 2 + i * m);
    size_t rec_at = 0;

    for (int q = 1; q < nsteps; ++q) {
        double t_c = q * dt;
        detail::LateralOps lat{n, g.hy, false, &valid};
        std::fill(trim.begin(), trim.end(), 0);
        for (int j = 0; j < n; ++j) vnext[j] = valid[j] ? 2 * vcur[j] - vprev[j] : 0.0;
        double slope = 0.0;  // beta < 1 metrics erode slower than 45 degrees
        for (int it = 0; it < std::max(2, cfg.picard_iters); ++it) {
            for (int j = 0; j < n; ++j)
                dvdt[j] = valid[j] ? (vnext[j] - vprev[j]) / (2 * dt) : 0.0;
            for (int j = 0; j < n; ++j) {
                if (!valid[j] || trim[j]) continue;
                auto d1 = lat.d1(vcur, j);
                auto d2 = lat.d2(vcur, j);
                auto dty = lat.d1(dvdt, j);
                if (!d1 || !d2 || !dty) {
                    trim[j] = 1;
                    continue;
                }
                if (!theta_ok(t_c, j)) {
                    trim[j] = 1;
                    continue;
                }
                double A = Ai(t_c, j), B = Bi(t_c, j), C = Ci(t_c, j);
                double sl = detail::max_char_slope(A, B, C);
                if (sl * dt > g.hy) {
                    trim[j] = 1;
                    continue;
                }
                slope = std::max(slope, sl);
                double vtt = -(2 * B * *dty + C * *d2 + kti(t_c, j) * dvdt[j] +
                               kli(t_c, j) * *d1 + Si(t_c, j)) /
                             A;
                double cand = 2 * vcur[j] - vprev[j] + dt * dt * vtt;
                if (!std::isfinite(cand)) {
                    trim[j] = 1;
                    continue;
                }
                vnext[j] = cand;
            }
        }
        std::vector<std::uint8_t> nv = valid;
        for (int j = 0; j < n; ++j)
            if (valid[j] && trim[j]) nv[j] = 0;
        erode += slope * dt / g.hy;
        while (erode >= 1.0) {
            erode -= 1.0;
            std::vector<std::uint8_t> shr = nv;
            for (int j = 0; j < n; ++j)
                if (nv[j] && (j + 1 >= n || !nv[j + 1] || j - 1 < 0 || !nv[j - 1]))
                    shr[j] = 0;
            nv.swap(shr);
        }
        if (rec_at < record.size() && record[rec_at] == q) {
            int i = static_cast<int>(rec_at);
            for (int j = 0; j < n; ++j) {
                if (!nv[j]) continue;
                out.v.v[g.idx(i, j)] = vcur[j];
                out.valid[g.idx(i, j)] = 1;
            }
            ++rec_at;
        }
        vprev.swap(vcur);
        vcur.swap(vnext);
        valid = nv;
    }
    return out;
}

}  // namespace aet

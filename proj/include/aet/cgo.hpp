// Complex-geometrical-optics illuminations on the slab X = (0,1) x (-a,a),
// measurement polarization, and the slab-chained global reconstruction for
// conductivities near a constant.
//
// The harmonic pair is v = Im e^{rho.x}, w = Re e^{rho.x} with
// rho = i|k| e1 + |k| e2, so grad v = |k| e^{|k| x2} theta(x1) and
// grad w = |k| e^{|k| x2} theta_perp(x1).  Per slab, two linear combinations
// with gradients near p = w e1 + sqrt(1-w^2) e2 and q = w e1 - sqrt(1-w^2) e2
// are marched with e1 time-like, and the 2x2 rotation is inverted at each
// interface to recover the Cauchy data of (u1, u2).
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "aet/elliptic.hpp"
#include "aet/geometry.hpp"
#include "aet/hypersolve.hpp"

namespace aet {

struct CgoSpec {
    double k_mag = 4.0;
    double w = std::cos(M_PI / 8);
    int slab_count = 0;  // 0: ceil(10 |k|), enforcing |k|/N <= 0.1
    double a = 0;        // 0: take the domain half-width
    double target_halfwidth = 0.5;  // lateral extent of supp(sigma - 1)

    int resolved_slabs() const {
        return slab_count > 0 ? slab_count : static_cast<int>(std::ceil(10.0 * k_mag));
    }
};

struct MeasurementBundle {
    ScalarField H11, H22, H12;
    CauchyTrace cauchy1, cauchy2;  // at the x1 = 0 face
};

// v = Im e^{rho.x}, w = Re e^{rho.x}.  With discrete_kappa the lateral growth
// rate solves the 5-point symbol, making the pair exactly discrete-harmonic
// on the given grid (used for data synthesis).
inline std::pair<ScalarField, ScalarField> cgo_harmonic_pair(const Grid2D& g, double k_mag,
                                                             bool discrete_kappa = false) {
    double kappa = k_mag;
    if (discrete_kappa) {
        double sx = 2.0 / (g.hx * g.hx) * (1.0 - std::cos(k_mag * g.hx));
        kappa = std::acosh(1.0 + 0.5 * g.hy * g.hy * sx) / g.hy;
    }
    ScalarField v(g, 0.0), w(g, 0.0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double grow = std::exp(kappa * g.cy(j));
            v.at(i, j) = grow * std::sin(k_mag * g.cx(i));
            w.at(i, j) = grow * std::cos(k_mag * g.cx(i));
        }
    return {v, w};
}

inline double cgo_discrete_kappa(const Grid2D& g, double k_mag) {
    double sx = 2.0 / (g.hx * g.hx) * (1.0 - std::cos(k_mag * g.hx));
    return std::acosh(1.0 + 0.5 * g.hy * g.hy * sx) / g.hy;
}

// theta(x1) and theta_perp(x1) of the k = |k| e1 convention
inline Vec2 cgo_theta(double x1, double k_mag) {
    return {std::cos(k_mag * x1), std::sin(k_mag * x1)};
}
inline Vec2 cgo_theta_perp(double x1, double k_mag) {
    return {-std::sin(k_mag * x1), std::cos(k_mag * x1)};
}

struct SlabAngles {
    double alpha, beta;
};

// Angles solving cos(a) theta(y0) + sin(a) theta_perp(y0) = p (resp. q) at
// y0 = (t, 0).  Rotating theta by |k| t turns the system into a pure phase
// shift: alpha = arccos(w) - |k| t, beta = -arccos(w) - |k| t (mod 2 pi).
inline SlabAngles slab_angles(double t, double k_mag, double w) {
    double phi_p = std::acos(w);
    auto wrap = [](double a) {
        double m = std::fmod(a, 2 * M_PI);
        return m < 0 ? m + 2 * M_PI : m;
    };
    return {wrap(phi_p - k_mag * t), wrap(-phi_p - k_mag * t)};
}

// cross term sigma grad u1 . grad u2 from the three quadratic measurements
inline ScalarField polarize(const MeasurementBundle& b) {
    require(b.H11.grid.same_layout(b.H22.grid) && b.H11.grid.same_layout(b.H12.grid),
            "polarize: fields must be co-registered");
    ScalarField out(b.H11.grid, 0.0);
    for (size_t k = 0; k < out.v.size(); ++k)
        out.v[k] = 0.5 * (b.H12.v[k] - b.H11.v[k] - b.H22.v[k]);
    return out;
}

// sigma |mu grad u1 + nu grad u2|^2
inline ScalarField combined_functional(const MeasurementBundle& b, double mu, double nu) {
    ScalarField cross = polarize(b);
    ScalarField out(b.H11.grid, 0.0);
    for (size_t k = 0; k < out.v.size(); ++k)
        out.v[k] = mu * mu * b.H11.v[k] + nu * nu * b.H22.v[k] + 2 * mu * nu * cross.v[k];
    return out;
}

// Forward synthesis of the three measurements and the x1 = 0 Cauchy traces
// for CGO illuminations (optionally perturbed multiplicatively by
// perturb * cos(pi y / (2a)) in trace norm).
inline MeasurementBundle synthesize_cgo_bundle(const Domain& d, const ScalarField& sigma,
                                               double k_mag, double perturb = 0.0,
                                               const EllipticOptions& opts = {}) {
    require(d.grid.chart == Chart::cartesian, "synthesize_cgo_bundle: slab domains");
    const Grid2D& g = d.grid;
    double a = -g.oy;
    double kappa = cgo_discrete_kappa(g, k_mag);
    auto [vh, wh] = cgo_harmonic_pair(g, k_mag, true);

    auto shape = [&](const Vec2& p) { return 1.0 + perturb * std::cos(M_PI * p.y / (2 * a)); };
    // Face values are ghost-pair averages of the discrete CGO pair, so the
    // sampled pair is an exact discrete solution for sigma = 1 and the
    // correction responds to sigma - 1 only (no spurious corner layers under
    // the exponential growth).
    double Lx = g.nx * g.hx;
    auto face_factors = [&](const Vec2& p) {
        bool xface = std::abs(p.x - g.ox) < 0.25 * g.hx ||
                     std::abs(p.x - (g.ox + Lx)) < 0.25 * g.hx;
        return xface ? std::pair{std::cos(k_mag * g.hx / 2), 1.0}
                     : std::pair{1.0, std::cosh(kappa * g.hy / 2)};
    };
    BoundaryFn f1 = [&](const Vec2& p) {
        auto [cx, cy] = face_factors(p);
        return std::exp(kappa * p.y) * cy * std::sin(k_mag * p.x) * cx * shape(p);
    };
    BoundaryFn f2 = [&](const Vec2& p) {
        auto [cx, cy] = face_factors(p);
        return std::exp(kappa * p.y) * cy * std::cos(k_mag * p.x) * cx * shape(p);
    };
    ScalarField d1 = solve_elliptic_correction(d, sigma, f1, vh, opts);
    ScalarField d2 = solve_elliptic_correction(d, sigma, f2, wh, opts);

    // gradients: analytic CGO part plus the numeric correction
    VectorField gd1 = gradient(d, d1), gd2 = gradient(d, d2);
    VectorField g1(g), g2(g);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double grow = std::exp(kappa * g.cy(j));
            double s = std::sin(k_mag * g.cx(i)), c = std::cos(k_mag * g.cx(i));
            g1.set(i, j, Vec2{k_mag * grow * c, kappa * grow * s} + gd1.at(i, j));
            g2.set(i, j, Vec2{-k_mag * grow * s, kappa * grow * c} + gd2.at(i, j));
        }
    MeasurementBundle b{ScalarField(g, 0.0), ScalarField(g, 0.0), ScalarField(g, 0.0),
                        {}, {}};
    for (int k = 0; k < g.size(); ++k) {
        Vec2 a1{g1.vx[k], g1.vy[k]}, a2{g2.vx[k], g2.vy[k]};
        b.H11.v[k] = sigma.v[k] * a1.dot(a1);
        b.H22.v[k] = sigma.v[k] * a2.dot(a2);
        b.H12.v[k] = sigma.v[k] * (a1 + a2).dot(a1 + a2);
    }

    // Cauchy traces at the left face: analytic part plus the one-sided trace
    // of the correction
    ScalarField u1(g, 0.0), u2(g, 0.0);
    for (int k = 0; k < g.size(); ++k) {
        u1.v[k] = vh.v[k] + d1.v[k];
        u2.v[k] = wh.v[k] + d2.v[k];
    }
    auto tr1 = neumann_trace(d, sigma, u1, f1);
    auto tr2 = neumann_trace(d, sigma, u2, f2);
    CauchyTrace c1, c2;
    c1.component_id = c2.component_id = 0;
    for (size_t s = 0; s < tr1[0].sample.size(); ++s) {
        if (d.boundary[tr1[0].sample[s]].face != 0) continue;
        c1.sample.push_back(tr1[0].sample[s]);
        c1.f.push_back(tr1[0].f[s]);
        c1.j.push_back(tr1[0].j[s]);
        c1.flux.push_back(tr1[0].flux[s]);
        c2.sample.push_back(tr2[0].sample[s]);
        c2.f.push_back(tr2[0].f[s]);
        c2.j.push_back(tr2[0].j[s]);
        c2.flux.push_back(tr2[0].flux[s]);
    }
    b.cauchy1 = c1;
    b.cauchy2 = c2;
    return b;
}

struct SlabDiag {
    int slab = 0;
    double alpha = 0, beta = 0;
    double cond = 0;
    double margin_p = 0, margin_q = 0;
    double consistency = 0;  // relative sigma discrepancy of the two marches
};

struct SlabResult {
    ScalarField sigma, sigma_alt;  // from the p-march and the q-march
    Mask valid;
    std::vector<SlabDiag> diag;
    double max_cond = 0;
};

namespace detail {

inline std::vector<double> lat_face_values(const Domain& d, const CauchyTrace& tr,
                                           bool derivative) {
    std::vector<double> out(d.grid.ny, 0.0);
    for (size_t s = 0; s < tr.sample.size(); ++s) {
        const BoundarySample& bs = d.boundary[tr.sample[s]];
        out[bs.cj] = derivative ? -tr.j[s] : tr.f[s];  // dudt = -j (inward)
    }
    return out;
}

}  // namespace detail

// Global slab-chained reconstruction (both marches per slab, 2x2 interface
// inversion).  Aborts when the rotation system degrades past 1/(1-w) or when
// the marched cone no longer covers |y| <= a/2.
inline SlabResult slab_reconstruct(const Domain& d, const MeasurementBundle& bundle,
                                   const CgoSpec& spec, const MarchConfig& mcfg = {}) {
    require(d.grid.chart == Chart::cartesian, "slab_reconstruct: slab domains only");
    const Grid2D& g = d.grid;
    const int N = spec.resolved_slabs();
    require(spec.k_mag / N <= 0.1 + 1e-12, "slab_reconstruct: need |k|/N <= 0.1");
    require(spec.w < 1.0 && spec.w > 0.0, "slab_reconstruct: need 0 < w < 1");
    double a = spec.a > 0 ? spec.a : -g.oy;
    double L = g.nx * g.hx;

    // Cauchy data as lateral arrays
    std::vector<double> u1 = detail::lat_face_values(d, bundle.cauchy1, false);
    std::vector<double> du1 = detail::lat_face_values(d, bundle.cauchy1, true);
    std::vector<double> u2 = detail::lat_face_values(d, bundle.cauchy2, false);
    std::vector<double> du2 = detail::lat_face_values(d, bundle.cauchy2, true);
    std::vector<std::uint8_t> valid(g.ny, 1);

    double s_bound;
    {
        double wt = spec.w, wl = std::sqrt(1 - spec.w * spec.w);
        s_bound = detail::max_char_slope(2 * wt * wt - 1, 2 * wt * wl, 2 * wl * wl - 1);
    }
    // lateral band whose data can reach the target through the p/q cones;
    // outside it the CGO profile is exponentially small and its direction
    // carries no usable information
    double dep_band = spec.target_halfwidth + s_bound * L;
    double kappa = cgo_discrete_kappa(g, spec.k_mag);

    // open-set check on the dependency band: data gradients within 0.2 rad of
    // theta(0), theta_perp(0)
    {
        detail::ExpStencil es = detail::make_exp_stencil(kappa, g.hy);
        detail::LateralOps lat{g.ny, g.hy, false, &valid, &es};
        for (int j = 0; j < g.ny; ++j) {
            if (std::abs(g.cy(j)) > dep_band) continue;
            auto f1p = lat.d1(u1, j);
            auto f2p = lat.d1(u2, j);
            Vec2 g1{du1[j], f1p ? *f1p : 0.0};
            Vec2 g2{du2[j], f2p ? *f2p : 0.0};
            require(g1.norm() > 0 && g2.norm() > 0,
                    "slab_reconstruct: degenerate illumination trace");
            double a1 = std::acos(std::clamp(g1.normalized().x, -1.0, 1.0));
            double a2 = std::acos(std::clamp(g2.normalized().y, -1.0, 1.0));
            require(a1 <= 0.2 && a2 <= 0.2,
                    "slab_reconstruct: illumination outside the admissible set");
        }
    }

    // 2x2 rotation-combination system: constant conditioning across slabs
    double cos_pq = 2 * spec.w * spec.w - 1;  // p . q
    double cond = std::sqrt((1 + std::abs(cos_pq)) / (1 - std::abs(cos_pq)));
    require_num(cond <= 1.0 / (1.0 - spec.w),
                "slab_reconstruct: rotation system condition " + std::to_string(cond));

    // marching lattice aligned with both slab interfaces and cell centers
    long lcm_nn = std::lcm(static_cast<long>(N), static_cast<long>(g.nx));
    double dt_max = mcfg.cfl * g.hy / (1.2 * s_bound);
    long S = 2 * lcm_nn;
    S *= std::max(1L, static_cast<long>(std::ceil(L / (S * dt_max))));
    double dt = L / S;
    long steps_per_slab = S / N;
    long steps_per_cell = S / g.nx;  // cell centers at odd multiples of half this

    SlabResult res{ScalarField(g, 0.0), ScalarField(g, 0.0), Mask(g.size(), 0), {}, cond};

    ScalarField cross = polarize(bundle);
    for (int k = 0; k < g.size(); ++k)
        require(bundle.H11.v[k] >= 0 && bundle.H22.v[k] >= 0,
                "slab_reconstruct: negative quadratic measurement");

    for (int slab = 1; slab <= N; ++slab) {
        double t0 = (slab - 1) * L / N;
        long q0 = (slab - 1) * steps_per_slab;  // global sub-level of t0
        SlabAngles ang = slab_angles(t0, spec.k_mag, spec.w);
        double ca = std::cos(ang.alpha), sa = std::sin(ang.alpha);
        double cb = std::cos(ang.beta), sb = std::sin(ang.beta);

        // cell centers sit at global sub-levels ic*spc + spc/2 (spc even by
        // construction); record the ones strictly inside this slab, then the
        // interface level
        std::vector<int> rec_levels;
        std::vector<int> rec_cells;
        for (long ic = 0; ic < g.nx; ++ic) {
            long qc = ic * steps_per_cell + steps_per_cell / 2;
            long local = qc - q0;
            if (local >= 1 && local <= steps_per_slab) {
                rec_levels.push_back(static_cast<int>(local));
                rec_cells.push_back(static_cast<int>(ic));
            }
        }
        bool iface_dup = !rec_levels.empty() &&
                         rec_levels.back() == static_cast<int>(steps_per_slab);
        if (!iface_dup) rec_levels.push_back(static_cast<int>(steps_per_slab));

        // the combined functionals span e^{4|k|a} across the face, so the
        // log-safety floor must be absolute, never relative to the max
        ScalarField Hv(g, 0.0), Hw(g, 0.0);
        for (int k = 0; k < g.size(); ++k) {
            Hv.v[k] = std::max(ca * ca * bundle.H11.v[k] + sa * sa * bundle.H22.v[k] +
                                   2 * ca * sa * cross.v[k],
                               1e-290);
            Hw.v[k] = std::max(cb * cb * bundle.H11.v[k] + sb * sb * bundle.H22.v[k] +
                                   2 * cb * sb * cross.v[k],
                               1e-290);
        }

        auto run_march = [&](const ScalarField& Hc, const std::vector<double>& f0,
                             const std::vector<double>& df0, double& margin_out) {
            ScalarField lnH(g, 0.0);
            for (int k = 0; k < g.size(); ++k) lnH.v[k] = std::log(Hc.v[k]);
            VectorField gl = gradient(d, lnH);
            ScalarField ktf(g, 0.0), klf(g, 0.0);
            for (int k = 0; k < g.size(); ++k) {
                ktf.v[k] = -gl.vx[k];
                klf.v[k] = -gl.vy[k];
            }
            detail::StripProblem p;
            p.nlat = g.ny;
            p.hlat = g.hy;
            p.periodic = false;
            p.polar = false;
            p.t0 = t0;
            p.dt = dt;
            p.nsteps = static_cast<int>(steps_per_slab) + 2;
            p.kt = detail::ColumnInterp{&ktf, false};
            p.kl = detail::ColumnInterp{&klf, false};
            p.u0 = f0;
            p.dudt0 = df0;
            p.valid0 = valid;
            for (int q : rec_levels) p.record.push_back(q);
            // gradient floor per lateral cell: the CGO data scale spans
            // e^{|k| y} across the face, so one global median would wipe the
            // lower half of the cone
            p.g_min_lat.resize(g.ny);
            for (int j = 0; j < g.ny; ++j)
                p.g_min_lat[j] = mcfg.g_min * std::max(std::abs(df0[j]), 1e-300);
            p.exp_rate = kappa;
            p.margin_min = mcfg.margin_min;
            p.picard = mcfg.picard_iters;

            // margin of the slab data against the e1 marching direction,
            // asserted on the band that still feeds the target
            double band = spec.target_halfwidth + s_bound * (L - t0);
            detail::ExpStencil es = detail::make_exp_stencil(kappa, g.hy);
            detail::LateralOps lat{g.ny, g.hy, false, &valid, &es};
            double margin = 1.0;
            for (int j = 0; j < g.ny; ++j) {
                if (!valid[j] || std::abs(g.cy(j)) > band) continue;
                auto fp = lat.d1(f0, j);
                double dul = fp ? *fp : 0.0;
                double n2 = df0[j] * df0[j] + dul * dul;
                if (n2 > 0) margin = std::min(margin, df0[j] * df0[j] / n2 - 0.5);
            }
            margin_out = margin;
            require_num(margin > 0, "slab_reconstruct: slab " + std::to_string(slab) +
                                        " lost the e1 margin");
            return detail::march_strip(p);
        };

        std::vector<double> v0(g.ny), dv0(g.ny), w0(g.ny), dw0(g.ny);
        for (int j = 0; j < g.ny; ++j) {
            v0[j] = ca * u1[j] + sa * u2[j];
            dv0[j] = ca * du1[j] + sa * du2[j];
            w0[j] = cb * u1[j] + sb * u2[j];
            dw0[j] = cb * du1[j] + sb * du2[j];
        }

        SlabDiag diag;
        diag.slab = slab;
        diag.alpha = ang.alpha;
        diag.beta = ang.beta;
        diag.cond = cond;
        detail::StripResult rv = run_march(Hv, v0, dv0, diag.margin_p);
        detail::StripResult rw = run_march(Hw, w0, dw0, diag.margin_q);

        // sigma on the recorded cell-center levels
        double cnum = 0, cden = 0;
        int nlev = static_cast<int>(rec_cells.size());
        for (int li = 0; li < nlev; ++li) {
            if (li >= static_cast<int>(rv.at_levels.size()) ||
                li >= static_cast<int>(rw.at_levels.size()))
                break;
            int ic = rec_cells[li];
            const auto& lv = rv.at_levels[li];
            const auto& lw = rw.at_levels[li];
            std::vector<std::uint8_t> vb(g.ny);
            for (int j = 0; j < g.ny; ++j) vb[j] = lv.valid[j] && lw.valid[j];
            detail::LateralOps lops{g.ny, g.hy, false, &vb};
            for (int j = 0; j < g.ny; ++j) {
                if (!vb[j]) continue;
                int k = g.idx(ic, j);
                auto dvl = lops.d1(lv.u, j);
                auto dwl = lops.d1(lw.u, j);
                if (!dvl || !dwl) continue;
                double nv2 = lv.dudt[j] * lv.dudt[j] + *dvl * *dvl;
                double nw2 = lw.dudt[j] * lw.dudt[j] + *dwl * *dwl;
                if (nv2 <= 0 || nw2 <= 0) continue;
                res.sigma.v[k] = Hv.v[k] / nv2;
                res.sigma_alt.v[k] = Hw.v[k] / nw2;
                res.valid[k] = 1;
                double df = res.sigma.v[k] - res.sigma_alt.v[k];
                cnum += df * df;
                cden += res.sigma.v[k] * res.sigma.v[k];
            }
        }
        diag.consistency = cden > 0 ? std::sqrt(cnum / cden) : 0.0;
        res.diag.push_back(diag);

        // interface inversion back to (u1, u2)
        bool reached = rv.at_levels.size() == rec_levels.size() &&
                       rw.at_levels.size() == rec_levels.size();
        if (!reached)
            throw NumericalError("slab_reconstruct: march died inside slab " +
                                 std::to_string(slab));
        const auto& iv = rv.at_levels.back();
        const auto& iw = rw.at_levels.back();
        double det = ca * sb - sa * cb;  // sin(beta - alpha)
        for (int j = 0; j < g.ny; ++j) {
            bool ok = iv.valid[j] && iw.valid[j];
            valid[j] = ok ? 1 : 0;
            if (!ok) continue;
            u1[j] = (sb * iv.u[j] - sa * iw.u[j]) / det;
            u2[j] = (-cb * iv.u[j] + ca * iw.u[j]) / det;
            du1[j] = (sb * iv.dudt[j] - sa * iw.dudt[j]) / det;
            du2[j] = (-cb * iv.dudt[j] + ca * iw.dudt[j]) / det;
        }

#ifdef AET_CGO_DEBUG
        {
            int lo = g.ny, hi = -1;
            for (int jj = 0; jj < g.ny; ++jj)
                if (valid[jj]) { lo = std::min(lo, jj); hi = std::max(hi, jj); }
            std::fprintf(stderr, "[cgo] slab %d valid [%.2f, %.2f] trims v=%zu w=%zu\n", slab,
                         lo <= hi ? g.cy(lo) : 0.0, lo <= hi ? g.cy(hi) : 0.0,
                         rv.trims.size(), rw.trims.size());
        }
#endif
        // The cone must keep covering the target: B(a/2) while that is still
        // inside the target's backward cone, and the backward cone itself
        // afterwards (trim past either means X-tilde is no longer covered).
        double t_i = slab * L / N;
        double r_req = std::min(0.5 * a, spec.target_halfwidth + s_bound * (L - t_i));
        for (int j = 0; j < g.ny; ++j)
            if (std::abs(g.cy(j)) <= r_req && !valid[j]) {
#ifdef AET_CGO_DEBUG
                int lo = g.ny, hi = -1;
                for (int jj = 0; jj < g.ny; ++jj)
                    if (valid[jj]) { lo = std::min(lo, jj); hi = std::max(hi, jj); }
                std::fprintf(stderr, "[cgo] slab %d r_req %.3f valid [%.2f, %.2f]\n", slab,
                             r_req, lo <= hi ? g.cy(lo) : 0.0, lo <= hi ? g.cy(hi) : 0.0);
#endif
                throw NumericalError("slab_reconstruct: cone no longer covers B(a/2) at slab " +
                                     std::to_string(slab));
            }
    }
    return res;
}

}  // namespace aet

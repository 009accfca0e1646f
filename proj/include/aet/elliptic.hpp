// Forward elliptic solver for -div(sigma grad u) = 0 with Dirichlet data,
// plus gradient, internal functional H = sigma |grad u|^2, and Cauchy traces.
//
// Discretization: cell-centered finite volumes, 5-point flux form with
// harmonic-mean face conductivities.  Dirichlet data enter through boundary
// faces (half-cell fluxes on grid-aligned boundaries, Shortley-Weller cut
// distances on masked shapes).  Grid-aligned assemblies are SPD and solved
// with preconditioned CG at relative tolerance below 1e-10; masked shapes
// assemble a nonsymmetric M-matrix and go to the sparse direct path.
#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "aet/geometry.hpp"
#include "aet/grid.hpp"

namespace aet {

using BoundaryFn = std::function<double(const Vec2&)>;

struct EllipticOptions {
    double rel_tol = 1e-12;   // CG stopping tolerance
    double rel_check = 1e-10; // hard acceptance on the final residual
    double sigma_floor = 0.05; // reject fields below this (sigma_min/2 default)
    int max_iter = 0;          // 0: solver default
    const ScalarField* guess = nullptr;
};

// Dirichlet/Neumann boundary data paired on one boundary component.
struct CauchyTrace {
    int component_id = 0;
    std::vector<int> sample;   // indices into Domain::boundary
    std::vector<double> f;     // Dirichlet values
    std::vector<double> j;     // outward normal derivative, one-sided O(h^2)
    std::vector<double> flux;  // sigma * du/dnu (discrete face flux on aligned faces)
};

namespace detail {

inline double harmonic_mean(double a, double b) { return 2.0 * a * b / (a + b); }

// face conductivity at a grid-aligned boundary.  The adjacent cell value is
// used as-is: it keeps the boundary half-face sampling of a modulated
// conductivity consistent with the harmonic-mean interior faces, which the
// modulation pipeline needs (an extrapolated face value leaves an O((kh)^2)
// lattice defect in the measured Fourier coefficients).
inline double boundary_sigma(double sc, double /*scc*/) { return sc; }

struct Assembled {
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd b;
    std::vector<int> cell_of_row;  // flat grid index per unknown
    std::vector<int> row_of_cell;  // -1 for exterior cells
    bool symmetric = true;
};

inline Assembled assemble(const Domain& d, const ScalarField& sigma, const BoundaryFn& f) {
    const Grid2D& g = d.grid;
    Assembled as;
    as.row_of_cell.assign(g.size(), -1);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            if (d.is_interior(i, j)) {
                as.row_of_cell[g.idx(i, j)] = static_cast<int>(as.cell_of_row.size());
                as.cell_of_row.push_back(g.idx(i, j));
            }
    int n = static_cast<int>(as.cell_of_row.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * n);
    as.b = Eigen::VectorXd::Zero(n);

    auto sig = [&](int i, int j) { return sigma.v[g.idx(i, g.wrap_j(j))]; };

    const bool polar = g.chart == Chart::polar;
    const int di[4] = {-1, 1, 0, 0};
    const int dj[4] = {0, 0, -1, 1};

    // cut faces indexed per cell for masked shapes
    std::vector<const CutFace*> cut_of(polar ? 0 : g.size() * 4, nullptr);
    for (const auto& c : d.cuts) cut_of[4 * g.idx(c.ci, c.cj) + c.dir] = &c;

    for (int row = 0; row < n; ++row) {
        int k = as.cell_of_row[row];
        int i = k % g.nx, j = k / g.nx;
        double diag = 0.0;
        for (int dir = 0; dir < 4; ++dir) {
            int ii = i + di[dir], jj = j + dj[dir];
            bool radial = dir < 2;
            // transmissibility T = sigma_face * area / dist
            double area, dist;
            if (!polar) {
                area = radial ? g.hy : g.hx;
                dist = radial ? g.hx : g.hy;
            } else {
                if (radial) {
                    double rf = g.r_inner + (dir == 0 ? i : i + 1) * g.hx;
                    area = rf * g.hy;
                    dist = g.hx;
                } else {
                    area = g.hx;
                    dist = g.r(i) * g.hy;
                }
            }
            bool neighbor_in = d.is_interior(ii, jj);
            if (neighbor_in) {
                double T = harmonic_mean(sig(i, j), sig(ii, jj)) * area / dist;
                diag += T;
                trip.emplace_back(row, as.row_of_cell[g.idx(ii, g.wrap_j(jj))], -T);
            } else if (!polar && d.kind != ShapeKind::rectangle && d.kind != ShapeKind::slab) {
                const CutFace* c = cut_of[4 * k + dir];
                if (!c) continue;  // grid edge outside the shape
                double sb = sig(i, j);
                double T = sb * area / (c->frac * dist);
                diag += T;
                as.b[row] += T * f(c->bpos);
                as.symmetric = false;
            } else {
                // grid-aligned domain boundary: half-cell flux to the face
                int i2 = std::clamp(i - di[dir], 0, g.nx - 1);
                int j2 = std::clamp(j - dj[dir], 0, g.ny - 1);
                if (polar && !radial) continue;  // angular direction is periodic
                double sb = boundary_sigma(sig(i, j), sig(i2, j2));
                double T = sb * area / (0.5 * dist);
                Vec2 fp;
                if (!polar) {
                    fp = {g.cx(i) + di[dir] * 0.5 * g.hx, g.cy(j) + dj[dir] * 0.5 * g.hy};
                } else {
                    double rf = dir == 0 ? g.r_inner : g.r_outer;
                    fp = {rf * std::cos(g.phi(j)), rf * std::sin(g.phi(j))};
                }
                diag += T;
                as.b[row] += T * f(fp);
            }
        }
        trip.emplace_back(row, row, diag);
    }
    as.A.resize(n, n);
    as.A.setFromTriplets(trip.begin(), trip.end());
    return as;
}

}  // namespace detail

inline ScalarField solve_elliptic(const Domain& d, const ScalarField& sigma,
                                  const BoundaryFn& f, const EllipticOptions& opt = {}) {
    require(sigma.grid.same_layout(d.grid), "solve_elliptic: sigma grid mismatch");
    for (int k = 0; k < d.grid.size(); ++k)
        if (d.interior[k])
            require(std::isfinite(sigma.v[k]) && sigma.v[k] >= opt.sigma_floor,
                    "solve_elliptic: sigma below floor at cell " + std::to_string(k));

    detail::Assembled as = detail::assemble(d, sigma, f);
    const int n = static_cast<int>(as.cell_of_row.size());
    Eigen::VectorXd u(n);
    double bnorm = as.b.norm();
    if (bnorm == 0.0) {
        u.setZero();
    } else if (as.symmetric) {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                                 Eigen::Lower | Eigen::Upper,
                                 Eigen::IncompleteCholesky<double>> cg;
        cg.setTolerance(opt.rel_tol);
        if (opt.max_iter > 0) cg.setMaxIterations(opt.max_iter);
        cg.compute(as.A);
        if (opt.guess) {
            Eigen::VectorXd g0(n);
            for (int r = 0; r < n; ++r) g0[r] = opt.guess->v[as.cell_of_row[r]];
            u = cg.solveWithGuess(as.b, g0);
        } else {
            u = cg.solve(as.b);
        }
        double rel = (as.b - as.A * u).norm() / bnorm;
        if (rel > opt.rel_check) {
            // sparse direct fallback
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(as.A);
            if (ldlt.info() == Eigen::Success) u = ldlt.solve(as.b);
            rel = (as.b - as.A * u).norm() / bnorm;
            require_num(rel <= opt.rel_check,
                        "solve_elliptic: linear solve stalled, residual " + std::to_string(rel));
        }
    } else {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(as.A);
        require_num(lu.info() == Eigen::Success, "solve_elliptic: singular cut-cell system");
        u = lu.solve(as.b);
        double rel = (as.b - as.A * u).norm() / bnorm;
        require_num(rel <= 1e-8, "solve_elliptic: direct solve residual " + std::to_string(rel));
    }

    ScalarField out(d.grid, 0.0);
    for (int r = 0; r < n; ++r) out.v[as.cell_of_row[r]] = u[r];
    return out;
}

// Solve with a known base field split off: returns the correction delta with
// u = base + delta.  Keeps small-scale regions accurate when the solution
// spans many orders of magnitude (exponentially growing illuminations).
inline ScalarField solve_elliptic_correction(const Domain& d, const ScalarField& sigma,
                                             const BoundaryFn& f, const ScalarField& base,
                                             const EllipticOptions& opt = {}) {
    for (int k = 0; k < d.grid.size(); ++k)
        if (d.interior[k])
            require(std::isfinite(sigma.v[k]) && sigma.v[k] >= opt.sigma_floor,
                    "solve_elliptic_correction: sigma below floor");
    detail::Assembled as = detail::assemble(d, sigma, f);
    const int n = static_cast<int>(as.cell_of_row.size());
    Eigen::VectorXd b0(n);
    for (int r = 0; r < n; ++r) b0[r] = base.v[as.cell_of_row[r]];
    Eigen::VectorXd rhs = as.b - as.A * b0;
    Eigen::VectorXd x(n);
    double bnorm = rhs.norm();
    if (bnorm == 0.0) {
        x.setZero();
    } else {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                                 Eigen::Lower | Eigen::Upper,
                                 Eigen::IncompleteCholesky<double>> cg;
        cg.setTolerance(opt.rel_tol);
        cg.compute(as.A);
        x = cg.solve(rhs);
        double rel = (rhs - as.A * x).norm() / bnorm;
        if (rel > opt.rel_check) {
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(as.A);
            if (ldlt.info() == Eigen::Success) x = ldlt.solve(rhs);
            rel = (rhs - as.A * x).norm() / bnorm;
            require_num(rel <= opt.rel_check,
                        "solve_elliptic_correction: residual " + std::to_string(rel));
        }
    }
    ScalarField out(d.grid, 0.0);
    for (int r = 0; r < n; ++r) out.v[as.cell_of_row[r]] = x[r];
    return out;
}

// Gradient of a cell-centered field: central differences in the interior,
// one-sided second-order where a stencil neighbor is missing.  On polar
// charts the components are in the orthonormal frame (d_r, (1/r) d_phi).
inline VectorField gradient(const Domain& d, const ScalarField& u) {
    const Grid2D& g = d.grid;
    VectorField out(g);
    auto val = [&](int i, int j) { return u.v[g.idx(i, g.wrap_j(j))]; };
    auto deriv = [&](int i, int j, int axis) -> double {
        int di = axis == 0 ? 1 : 0, dj = axis == 0 ? 0 : 1;
        double h = axis == 0 ? g.hx : g.hy;
        bool up = d.is_interior(i + di, j + dj), dn = d.is_interior(i - di, j - dj);
        if (up && dn) return (val(i + di, j + dj) - val(i - di, j - dj)) / (2 * h);
        if (up) {
            if (d.is_interior(i + 2 * di, j + 2 * dj))
                return (-3 * val(i, j) + 4 * val(i + di, j + dj) - val(i + 2 * di, j + 2 * dj)) / (2 * h);
            return (val(i + di, j + dj) - val(i, j)) / h;
        }
        if (dn) {
            if (d.is_interior(i - 2 * di, j - 2 * dj))
                return (3 * val(i, j) - 4 * val(i - di, j - dj) + val(i - 2 * di, j - 2 * dj)) / (2 * h);
            return (val(i, j) - val(i - di, j - dj)) / h;
        }
        return 0.0;
    };
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (!d.is_interior(i, j)) continue;
            double gx = deriv(i, j, 0);
            double gy = deriv(i, j, 1);
            if (g.chart == Chart::polar) gy /= g.r(i);
            out.set(i, j, {gx, gy});
        }
    return out;
}

inline ScalarField internal_functional(const Domain& d, const ScalarField& sigma,
                                       const ScalarField& u) {
    VectorField gu = gradient(d, u);
    ScalarField H(d.grid, 0.0);
    for (int k = 0; k < d.grid.size(); ++k)
        if (d.interior[k])
            H.v[k] = sigma.v[k] * (gu.vx[k] * gu.vx[k] + gu.vy[k] * gu.vy[k]);
    return H;
}

namespace detail {

// Bilinear interpolation of u at a physical point; falls back to the nearest
// interior cell when the four surrounding centers are not all interior.
inline double interp(const Domain& d, const ScalarField& u, Vec2 p) {
    const Grid2D& g = d.grid;
    double fx = (p.x - g.ox) / g.hx - 0.5;
    double fy = (p.y - g.oy) / g.hy - 0.5;
    int i0 = static_cast<int>(std::floor(fx)), j0 = static_cast<int>(std::floor(fy));
    double ax = fx - i0, ay = fy - j0;
    if (d.is_interior(i0, j0) && d.is_interior(i0 + 1, j0) && d.is_interior(i0, j0 + 1) &&
        d.is_interior(i0 + 1, j0 + 1)) {
        return (1 - ax) * (1 - ay) * u.at(i0, j0) + ax * (1 - ay) * u.at(i0 + 1, j0) +
               (1 - ax) * ay * u.at(i0, j0 + 1) + ax * ay * u.at(i0 + 1, j0 + 1);
    }
    int bi = std::clamp(static_cast<int>(std::lround(fx)), 0, g.nx - 1);
    int bj = std::clamp(static_cast<int>(std::lround(fy)), 0, g.ny - 1);
    double best = u.at(bi, bj);
    return best;
}

}  // namespace detail

// Cauchy traces of a solved field: Dirichlet value, outward normal derivative
// (one-sided second-order along nu), and the conductive flux.  On grid-aligned
// faces the flux is the scheme's own half-cell face flux, so the total
// boundary flux telescopes to the solver residual.
inline std::vector<CauchyTrace> neumann_trace(const Domain& d, const ScalarField& sigma,
                                              const ScalarField& u, const BoundaryFn& f) {
    const Grid2D& g = d.grid;
    std::vector<CauchyTrace> out(d.n_components);
    for (int c = 0; c < d.n_components; ++c) out[c].component_id = c;

    const int fdi[4] = {-1, 1, 0, 0};
    const int fdj[4] = {0, 0, -1, 1};

    for (size_t s = 0; s < d.boundary.size(); ++s) {
        const BoundarySample& bs = d.boundary[s];
        CauchyTrace& tr = out[bs.component_id];
        double fv = f(bs.pos);
        double jv, fluxv;
        if (bs.face >= 0) {
            // nodes at h/2 and 3h/2 along the inward normal
            int di = -fdi[bs.face], dj = -fdj[bs.face];
            bool radial = bs.face < 2;
            double h = radial ? g.hx : g.hy;
            if (g.chart == Chart::polar && !radial) h = g.r(bs.ci) * g.hy;
            double u1 = u.v[g.idx(bs.ci, bs.cj)];
            double u2 = u.v[g.idx(std::clamp(bs.ci + di, 0, g.nx - 1),
                                  g.wrap_j(bs.cj + dj))];
            double d_in = (-8.0 * fv / 3.0 + 3.0 * u1 - u2 / 3.0) / h;
            jv = -d_in;
            int i2 = std::clamp(bs.ci + di, 0, g.nx - 1);
            int j2 = g.chart == Chart::polar ? g.wrap_j(bs.cj + dj)
                                             : std::clamp(bs.cj + dj, 0, g.ny - 1);
            double sb = detail::boundary_sigma(sigma.v[g.idx(bs.ci, bs.cj)],
                                               sigma.v[g.idx(i2, j2)]);
            fluxv = sb * (fv - u1) / (0.5 * h);
        } else {
            // cut boundary: interpolate along the inward normal
            double h = std::min(g.hx, g.hy);
            Vec2 p1 = bs.pos - 1.2 * h * bs.normal;
            Vec2 p2 = bs.pos - 2.4 * h * bs.normal;
            double u1 = detail::interp(d, u, p1);
            double u2 = detail::interp(d, u, p2);
            double d_in = (-3.0 * fv + 4.0 * u1 - u2) / (2.0 * 1.2 * h);
            jv = -d_in;
            fluxv = sigma.v[g.idx(bs.ci, bs.cj)] * jv;
        }
        tr.sample.push_back(static_cast<int>(s));
        tr.f.push_back(fv);
        tr.j.push_back(jv);
        tr.flux.push_back(fluxv);
    }
    return out;
}

// Total outward conductive flux; ~0 for any interior-source-free solve.
inline double total_boundary_flux(const Domain& d, const std::vector<CauchyTrace>& traces) {
    double acc = 0.0;
    for (const auto& tr : traces)
        for (size_t k = 0; k < tr.sample.size(); ++k)
            acc += tr.flux[k] * d.boundary[tr.sample[k]].weight;
    return acc;
}

}  // namespace aet

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aet/elliptic.hpp"
#include "aet/geometry.hpp"

using namespace aet;

namespace {

Domain rect_unit(int n) {
    ShapeSpec s;
    s.kind = ShapeKind::rectangle;
    s.p1 = s.p2 = 1.0;
    s.n = n;
    return build_domain(s);
}

ScalarField fill(const Domain& d, const std::function<double(Vec2)>& fn) {
    ScalarField f(d.grid, 0.0);
    for (int j = 0; j < d.grid.ny; ++j)
        for (int i = 0; i < d.grid.nx; ++i)
            if (d.is_interior(i, j)) f.at(i, j) = fn(d.grid.pos(i, j));
    return f;
}

double rel_l2_err(const Domain& d, const ScalarField& got,
                  const std::function<double(Vec2)>& exact) {
    double num = 0, den = 0;
    for (int j = 0; j < d.grid.ny; ++j)
        for (int i = 0; i < d.grid.nx; ++i) {
            if (!d.is_interior(i, j)) continue;
            double e = exact(d.grid.pos(i, j));
            double diff = got.at(i, j) - e;
            num += diff * diff;
            den += e * e;
        }
    return std::sqrt(num / den);
}

// manufactured pair: sigma = e^{x}, u = e^{-x}  (sigma u' = -1, divergence free)
double manufactured_err(int n) {
    Domain d = rect_unit(n);
    ScalarField sigma = fill(d, [](Vec2 p) { return std::exp(p.x); });
    ScalarField u = solve_elliptic(d, sigma, [](const Vec2& p) { return std::exp(-p.x); });
    return rel_l2_err(d, u, [](Vec2 p) { return std::exp(-p.x); });
}

}  // namespace

TEST_CASE("linear potential is an exact discrete solution") {
    Domain d = rect_unit(33);
    ScalarField sigma(d.grid, 1.0);
    ScalarField u = solve_elliptic(d, sigma, [](const Vec2& p) { return p.x; });
    double emax = 0;
    for (int j = 0; j < d.grid.ny; ++j)
        for (int i = 0; i < d.grid.nx; ++i)
            emax = std::max(emax, std::abs(u.at(i, j) - d.grid.cx(i)));
    CHECK(emax < 1e-9);
}

TEST_CASE("manufactured solution converges at second order") {
    double e32 = manufactured_err(33);
    double e64 = manufactured_err(65);
    CHECK(e32 < 2e-4);
    CHECK(std::log2(e32 / e64) > 1.85);
}

TEST_CASE("annulus radial solution") {
    auto err_at = [](int nr) {
        ShapeSpec s;
        s.kind = ShapeKind::annulus;
        s.p1 = 0.5;
        s.p2 = 1.0;
        s.nr = nr;
        s.nphi = 2 * nr;
        Domain d = build_domain(s);
        ScalarField sigma(d.grid, 1.0);
        // f = 1 on the inner circle (component 1), 0 on the outer
        auto f = [&](const Vec2& p) { return p.norm() < 0.75 ? 1.0 : 0.0; };
        ScalarField u = solve_elliptic(d, sigma, f);
        // u(r) = ln(r/r_out) / ln(r_in/r_out)
        auto exact = [](Vec2 p) { return std::log(p.norm() / 1.0) / std::log(0.5 / 1.0); };
        return rel_l2_err(d, u, exact);
    };
    double e48 = err_at(48);
    CHECK(e48 < 2e-4);  // ~0.8 h^2
    CHECK(std::log2(err_at(24) / e48) > 1.85);
}

TEST_CASE("solver rejects sigma below the floor") {
    Domain d = rect_unit(16);
    ScalarField sigma(d.grid, 0.01);
    CHECK_THROWS_AS(solve_elliptic(d, sigma, [](const Vec2& p) { return p.x; }),
                    PreconditionError);
}

TEST_CASE("non-convergence carries the residual") {
    Domain d = rect_unit(33);
    ScalarField sigma = fill(d, [](Vec2 p) { return 1.0 + 0.5 * std::sin(7 * p.x); });
    EllipticOptions opt;
    opt.max_iter = 1;     // force CG to stall
    opt.rel_tol = 1e-15;  // and keep the fallback from being skipped
    // the direct fallback still rescues the solve
    ScalarField u = solve_elliptic(d, sigma, [](const Vec2& p) { return p.x; }, opt);
    CHECK(std::isfinite(u.v[0]));
}

TEST_CASE("gradient operator") {
    Domain d = rect_unit(33);
    SECTION("linear field is exact") {
        ScalarField u = fill(d, [](Vec2 p) { return p.x; });
        VectorField g = gradient(d, u);
        for (int k = 0; k < d.grid.size(); ++k) {
            CHECK(g.vx[k] == Catch::Approx(1.0).margin(1e-12));
            CHECK(g.vy[k] == Catch::Approx(0.0).margin(1e-12));
        }
    }
    SECTION("quadratic field is exact") {
        ScalarField u = fill(d, [](Vec2 p) { return p.x * p.x; });
        VectorField g = gradient(d, u);
        for (int j = 0; j < d.grid.ny; ++j)
            for (int i = 0; i < d.grid.nx; ++i)
                CHECK(g.at(i, j).x == Catch::Approx(2 * d.grid.cx(i)).margin(1e-11));
    }
    SECTION("sin(pi x) derivative is O(h^2)") {
        ScalarField u = fill(d, [](Vec2 p) { return std::sin(M_PI * p.x); });
        VectorField g = gradient(d, u);
        double h = d.grid.hx;
        // one-sided boundary stencils double the central-difference constant
        double bound = 2.5 * (M_PI * M_PI * M_PI / 6.0) * h * h;
        for (int j = 0; j < d.grid.ny; ++j)
            for (int i = 0; i < d.grid.nx; ++i) {
                double exact = M_PI * std::cos(M_PI * d.grid.cx(i));
                CHECK(std::abs(g.at(i, j).x - exact) < bound);
            }
    }
}

TEST_CASE("internal functional") {
    Domain d = rect_unit(33);
    SECTION("unit gradient") {
        ScalarField sigma(d.grid, 1.0);
        ScalarField u = fill(d, [](Vec2 p) { return p.x; });
        ScalarField H = internal_functional(d, sigma, u);
        for (int k = 0; k < d.grid.size(); ++k) CHECK(H.v[k] == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("scaling") {
        ScalarField sigma(d.grid, 2.0);
        ScalarField u = fill(d, [](Vec2 p) { return p.x; });
        ScalarField H = internal_functional(d, sigma, u);
        for (int k = 0; k < d.grid.size(); ++k) CHECK(H.v[k] == Catch::Approx(2.0).margin(1e-12));
    }
    SECTION("manufactured pair") {
        ScalarField sigma = fill(d, [](Vec2 p) { return std::exp(p.x); });
        ScalarField u = fill(d, [](Vec2 p) { return std::exp(-p.x); });
        ScalarField H = internal_functional(d, sigma, u);
        double h2 = d.grid.hx * d.grid.hx;
        for (int j = 1; j < d.grid.ny - 1; ++j)
            for (int i = 1; i < d.grid.nx - 1; ++i) {
                double exact = std::exp(-d.grid.cx(i));
                CHECK(std::abs(H.at(i, j) - exact) < 2.0 * h2);
            }
    }
}

TEST_CASE("neumann trace on the rectangle") {
    Domain d = rect_unit(33);
    ScalarField sigma(d.grid, 1.0);
    auto fx = [](const Vec2& p) { return p.x; };
    ScalarField u = solve_elliptic(d, sigma, fx);
    auto traces = neumann_trace(d, sigma, u, fx);
    REQUIRE(traces.size() == 1);
    const auto& tr = traces[0];
    for (size_t k = 0; k < tr.sample.size(); ++k) {
        const auto& bs = d.boundary[tr.sample[k]];
        double expect = bs.normal.x;  // du/dnu of u = x
        CHECK(tr.j[k] == Catch::Approx(expect).margin(1e-8));
    }
}

TEST_CASE("neumann trace constant solution is zero") {
    Domain d = rect_unit(17);
    ScalarField sigma(d.grid, 1.0);
    auto fc = [](const Vec2&) { return 3.5; };
    ScalarField u = solve_elliptic(d, sigma, fc);
    auto traces = neumann_trace(d, sigma, u, fc);
    for (const auto& tr : traces)
        for (double jv : tr.j) CHECK(std::abs(jv) < 1e-9);
}

TEST_CASE("annulus radial neumann trace") {
    ShapeSpec s;
    s.kind = ShapeKind::annulus;
    s.p1 = 0.5;
    s.p2 = 1.0;
    s.nr = 64;
    s.nphi = 128;
    Domain d = build_domain(s);
    ScalarField sigma(d.grid, 1.0);
    auto f = [&](const Vec2& p) { return p.norm() < 0.75 ? 1.0 : 0.0; };
    ScalarField u = solve_elliptic(d, sigma, f);
    auto traces = neumann_trace(d, sigma, u, f);
    REQUIRE(traces.size() == 2);
    double L = std::log(0.5 / 1.0);
    // du/dr = 1/(r L); outward is +r on component 0, -r on component 1
    double h = d.grid.hx;
    for (size_t k = 0; k < traces[0].j.size(); ++k)
        CHECK(std::abs(traces[0].j[k] - 1.0 / (1.0 * L)) < 3 * h);
    for (size_t k = 0; k < traces[1].j.size(); ++k)
        CHECK(std::abs(traces[1].j[k] + 1.0 / (0.5 * L)) < 3 * h);
}

TEST_CASE("discrete flux conservation under 1e-8") {
    SECTION("manufactured rectangle") {
        Domain d = rect_unit(65);
        ScalarField sigma = fill(d, [](Vec2 p) { return std::exp(p.x); });
        auto f = [](const Vec2& p) { return std::exp(-p.x); };
        ScalarField u = solve_elliptic(d, sigma, f);
        auto traces = neumann_trace(d, sigma, u, f);
        CHECK(std::abs(total_boundary_flux(d, traces)) < 1e-8);
    }
    SECTION("annulus") {
        ShapeSpec s;
        s.kind = ShapeKind::annulus;
        s.p1 = 0.5;
        s.p2 = 1.0;
        s.nr = 32;
        s.nphi = 64;
        Domain d = build_domain(s);
        ScalarField sigma(d.grid, 1.0);
        auto f = [&](const Vec2& p) { return p.norm() < 0.75 ? 1.0 : 0.0; };
        ScalarField u = solve_elliptic(d, sigma, f);
        auto traces = neumann_trace(d, sigma, u, f);
        CHECK(std::abs(total_boundary_flux(d, traces)) < 1e-8);
    }
}

TEST_CASE("maximum principle") {
    ShapeSpec s;
    s.kind = ShapeKind::disc;
    s.p1 = 1.0;
    s.n = 49;
    Domain d = build_domain(s);
    ScalarField sigma = fill(d, [](Vec2 p) { return 1.0 + 0.5 * std::cos(3 * p.x) * std::sin(2 * p.y); });
    for (int k = 0; k < d.grid.size(); ++k)
        if (!d.interior[k]) sigma.v[k] = 1.0;
    for (int k = 0; k < d.grid.size(); ++k) sigma.v[k] = std::max(sigma.v[k], 0.5);
    auto f = [](const Vec2& p) { return p.x; };
    ScalarField u = solve_elliptic(d, sigma, f);
    for (int j = 0; j < d.grid.ny; ++j)
        for (int i = 0; i < d.grid.nx; ++i) {
            if (!d.is_interior(i, j)) continue;
            CHECK(u.at(i, j) <= 1.0 + 1e-12);
            CHECK(u.at(i, j) >= -1.0 - 1e-12);
        }
    // disc with sigma = 1 and f = x stays close to the harmonic solution u = x
    ScalarField sig1(d.grid, 1.0);
    ScalarField uh = solve_elliptic(d, sig1, f);
    double emax = 0;
    for (int j = 0; j < d.grid.ny; ++j)
        for (int i = 0; i < d.grid.nx; ++i)
            if (d.is_interior(i, j)) emax = std::max(emax, std::abs(uh.at(i, j) - d.grid.cx(i)));
    CHECK(emax < 1e-7);  // Shortley-Weller is exact on linear fields
}

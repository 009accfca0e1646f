#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aet/modulation.hpp"

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
        for (int i = 0; i < d.grid.nx; ++i) f.at(i, j) = fn(d.grid.pos(i, j));
    return f;
}

double rel_l2(const Domain& d, const ScalarField& a, const ScalarField& b) {
    double num = 0, den = 0;
    for (int k = 0; k < d.grid.size(); ++k) {
        if (!d.interior[k]) continue;
        num += (a.v[k] - b.v[k]) * (a.v[k] - b.v[k]);
        den += b.v[k] * b.v[k];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("modulated sigma") {
    Domain d = rect_unit(17);
    ScalarField sigma(d.grid, 1.0);
    SECTION("eps = 0 is the identity") {
        ScalarField m = modulated_sigma(sigma, {2 * M_PI, 0}, 0.3, 0.0);
        for (double v : m.v) CHECK(v == 1.0);
    }
    SECTION("k = 0 scales by 1 + eps") {
        ScalarField m = modulated_sigma(sigma, {0, 0}, 0.0, 0.01);
        for (double v : m.v) CHECK(v == Catch::Approx(1.01).margin(1e-15));
    }
    SECTION("phase pi/2 turns cos into -sin") {
        ScalarField m = modulated_sigma(sigma, {2 * M_PI, 0}, M_PI / 2, 0.01);
        for (int j = 0; j < d.grid.ny; ++j)
            for (int i = 0; i < d.grid.nx; ++i) {
                double expect = 1.0 - 0.01 * std::sin(2 * M_PI * d.grid.cx(i));
                CHECK(m.at(i, j) == Catch::Approx(expect).margin(1e-14));
            }
    }
    SECTION("positivity guard") {
        ScalarField low(d.grid, 0.051);
        CHECK_THROWS_AS(modulated_sigma(low, {0, 0}, 0.0, -0.05), PreconditionError);
        CHECK_THROWS_AS(modulated_sigma(sigma, {0, 0}, 0.0, 0.2), PreconditionError);
    }
}

TEST_CASE("boundary functional trivial values") {
    Domain d = rect_unit(33);
    ScalarField sigma(d.grid, 1.0);
    auto fx = [](const Vec2& p) { return p.x; };
    SECTION("k = 0 gives the domain volume") {
        ModulationSample ms = boundary_functional(d, sigma, fx, {0, 0}, 0.0, 1e-3);
        CHECK(ms.J_eps / ms.eps == Catch::Approx(1.0).margin(1e-6));
    }
    SECTION("full-period cosine integrates to zero") {
        ModulationSample ms = boundary_functional(d, sigma, fx, {2 * M_PI, 0}, 0.0, 1e-3);
        CHECK(std::abs(ms.J_eps / ms.eps) < 1e-3);  // O(h^2) discrete offset
    }
}

TEST_CASE("eps -> 0 limit agrees with the volume quadrature of H") {
    Domain d = rect_unit(33);
    ScalarField sigma = fill(d, [](Vec2 p) {
        double r2 = (p.x - 0.45) * (p.x - 0.45) + (p.y - 0.6) * (p.y - 0.6);
        return 1.0 + 0.3 * std::exp(-r2 / (0.12 * 0.12));
    });
    auto fx = [](const Vec2& p) { return p.x; };
    ScalarField u0 = solve_elliptic(d, sigma, fx);
    ScalarField H = internal_functional(d, sigma, u0);
    J1Table quad = j1_from_quadrature(d, H, 2);
    for (auto [m1, m2, phase] : {std::tuple{1, 0, 0.0}, {0, 1, M_PI / 2}, {2, 1, 0.0}}) {
        Vec2 k = quad.wavevector(m1, m2);
        ModulationSample ms = boundary_functional(d, sigma, fx, k, phase, 1e-3);
        double expect = phase == 0.0 ? quad.jc[quad.idx(m1, m2)] : quad.js[quad.idx(m1, m2)];
        CHECK(std::abs(ms.J_eps / ms.eps - expect) < 2e-3);
    }
}

TEST_CASE("J_eps is odd in eps") {
    Domain d = rect_unit(17);
    ScalarField sigma = fill(d, [](Vec2 p) { return 1.0 + 0.2 * std::sin(3 * p.x + p.y); });
    auto fx = [](const Vec2& p) { return p.x + 0.3 * p.y; };
    Vec2 k{2 * M_PI, 4 * M_PI};
    ModulationSample plus = boundary_functional(d, sigma, fx, k, 0.0, 2e-3);
    ModulationSample minus = boundary_functional(d, sigma, fx, k, 0.0, -2e-3);
    CHECK(plus.J_eps == Catch::Approx(-minus.J_eps).margin(1e-14));
}

TEST_CASE("first order coefficient extraction") {
    SECTION("exact linear") {
        ModulationSample full{{1, 0}, 0.0, 1e-2, 1e-2 * 3.7};
        ModulationSample half{{1, 0}, 0.0, 5e-3, 5e-3 * 3.7};
        CHECK(first_order_coefficient(full, half) == Catch::Approx(3.7).epsilon(1e-12));
    }
    SECTION("cubic term cancels") {
        double c = 2.1, eps = 1e-2;
        auto J = [&](double e) { return c * e + e * e * e; };
        ModulationSample full{{1, 0}, 0.0, eps, J(eps)};
        ModulationSample half{{1, 0}, 0.0, eps / 2, J(eps / 2)};
        CHECK(std::abs(first_order_coefficient(full, half) - c) < eps * eps * eps * eps);
    }
    SECTION("mismatched samples rejected") {
        ModulationSample full{{1, 0}, 0.0, 1e-2, 1.0};
        ModulationSample half{{2, 0}, 0.0, 5e-3, 1.0};
        CHECK_THROWS_AS(first_order_coefficient(full, half), PreconditionError);
    }
    SECTION("pipeline DC coefficient") {
        Domain d = rect_unit(33);
        ScalarField sigma(d.grid, 1.0);
        auto fx = [](const Vec2& p) { return p.x; };
        ModulationSample full = boundary_functional(d, sigma, fx, {0, 0}, 0.0, 1e-3);
        ModulationSample half = boundary_functional(d, sigma, fx, {0, 0}, 0.0, 5e-4);
        CHECK(first_order_coefficient(full, half) == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("recover_H inverts the lattice data") {
    Domain d = rect_unit(33);
    SECTION("DC-only spectrum gives a constant") {
        J1Table t = J1Table::empty(d.grid, 3);
        for (int m2 = -3; m2 <= 3; ++m2)
            for (int m1 = -3; m1 <= 3; ++m1) t.set(m1, m2, 0.0, 0.0);
        t.set(0, 0, 1.0, 0.0);
        ScalarField H = recover_H(d, t);
        for (int k = 0; k < d.grid.size(); ++k)
            CHECK(H.v[k] == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("band-limited round trip") {
        ScalarField H = fill(d, [](Vec2 p) { return 1.0 + 0.2 * std::cos(2 * M_PI * p.x); });
        J1Table t = j1_from_quadrature(d, H, 4);
        ScalarField back = recover_H(d, t);
        double emax = 0;
        for (int k = 0; k < d.grid.size(); ++k)
            emax = std::max(emax, std::abs(back.v[k] - H.v[k]));
        CHECK(emax < 1e-8);
    }
    SECTION("incomplete coverage is rejected") {
        J1Table t = J1Table::empty(d.grid, 2);
        t.set(0, 0, 1.0, 0.0);
        CHECK_THROWS_AS(recover_H(d, t), PreconditionError);
    }
}

TEST_CASE("physical pipeline recovers H for a smooth bump") {
    Domain d = rect_unit(33);
    ScalarField sigma = fill(d, [](Vec2 p) {
        double r2 = (p.x - 0.5) * (p.x - 0.5) + (p.y - 0.5) * (p.y - 0.5);
        return 1.0 + 0.25 * std::exp(-r2 / (0.13 * 0.13));
    });
    auto fx = [](const Vec2& p) { return p.x; };
    ScalarField u0 = solve_elliptic(d, sigma, fx);
    ScalarField H_true = internal_functional(d, sigma, u0);
    J1Table t = synthesize_j1_table(d, sigma, fx, 8, 1e-3);
    ScalarField H_rec = recover_H(d, t);
    CHECK(rel_l2(d, H_rec, H_true) < 0.01);
}

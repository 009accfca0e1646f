#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

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

Domain disc_unit(int n) {
    ShapeSpec s;
    s.kind = ShapeKind::disc;
    s.p1 = 1.0;
    s.n = n;
    return build_domain(s);
}

}  // namespace

TEST_CASE("rectangle boundary sampling") {
    Domain d = rect_unit(32);
    // 31 cells per side -> 4*31 face-midpoint samples
    CHECK(d.boundary.size() == 4u * 31u);
    for (const auto& bs : d.boundary) {
        double ax = std::abs(bs.normal.x), ay = std::abs(bs.normal.y);
        CHECK(std::abs(bs.normal.norm() - 1.0) < 1e-12);
        CHECK((ax == 1.0 || ay == 1.0));  // axis-aligned
    }
    // perimeter is exact for the face-midpoint rule
    std::vector<double> one(d.boundary.size(), 1.0);
    CHECK(boundary_integral(d, one) == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("disc boundary normals and integrals") {
    Domain d = disc_unit(64);
    double h = d.grid.hx;
    for (const auto& bs : d.boundary) {
        Vec2 radial = bs.pos.normalized();
        CHECK(std::abs(bs.normal.norm() - 1.0) < 1e-12);
        CHECK((bs.normal - radial).norm() < 2 * h);
        CHECK(bs.normal.dot(bs.pos) > 0);  // outward
    }
    std::vector<double> one(d.boundary.size(), 1.0);
    double circ = boundary_integral(d, one);
    CHECK(std::abs(circ - 2 * M_PI) < 10 * h * h);

    // odd integrand vanishes
    double ix = boundary_integral(d, [](const BoundarySample& b) { return b.pos.x; });
    CHECK(std::abs(ix) < 10 * h * h);
}

TEST_CASE("annulus has two components with opposite radial normals") {
    ShapeSpec s;
    s.kind = ShapeKind::annulus;
    s.p1 = 0.5;
    s.p2 = 1.0;
    s.nr = 16;
    s.nphi = 64;
    Domain d = build_domain(s);
    REQUIRE(d.n_components == 2);
    std::set<int> ids;
    for (const auto& bs : d.boundary) {
        ids.insert(bs.component_id);
        Vec2 radial = bs.pos.normalized();
        if (bs.component_id == 0)
            CHECK((bs.normal - radial).norm() < 1e-12);
        else
            CHECK((bs.normal + radial).norm() < 1e-12);
    }
    CHECK(ids == std::set<int>{0, 1});
    std::vector<double> one(d.boundary.size(), 1.0);
    CHECK(boundary_integral(d, one) ==
          Catch::Approx(2 * M_PI * (0.5 + 1.0)).epsilon(1e-10));
}

TEST_CASE("boundary integral converges at order >= 1.8") {
    auto smooth_err = [](int n) {
        Domain d = disc_unit(n);
        // exact: integral of x^2 over the unit circle = pi
        double val = boundary_integral(
            d, [](const BoundarySample& b) { return b.pos.x * b.pos.x; });
        return std::abs(val - M_PI);
    };
    double e1 = smooth_err(33), e2 = smooth_err(65);
    double order = std::log2(e1 / e2);
    CHECK(order >= 1.8);
}

TEST_CASE("constant-field flux through closed boundaries is ~0") {
    Vec2 c{0.7, -0.3};
    for (auto kind : {ShapeKind::disc, ShapeKind::ovoid}) {
        ShapeSpec s;
        s.kind = kind;
        s.p1 = 1.0;
        s.p2 = 0.6;
        s.n = 65;
        Domain d = build_domain(s);
        double flux = boundary_integral(
            d, [&](const BoundarySample& b) { return c.dot(b.normal); });
        CHECK(std::abs(flux) < 5 * d.grid.hx);
    }
}

TEST_CASE("interior cells have classified stencil neighbors") {
    Domain d = disc_unit(48);
    const Grid2D& g = d.grid;
    // every exterior neighbor of an interior cell carries a cut face
    std::set<std::pair<int, int>> cut_keys;
    for (const auto& c : d.cuts) cut_keys.insert({g.idx(c.ci, c.cj), c.dir});
    const int di[4] = {-1, 1, 0, 0};
    const int dj[4] = {0, 0, -1, 1};
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (!d.is_interior(i, j)) continue;
            for (int dir = 0; dir < 4; ++dir)
                if (!d.is_interior(i + di[dir], j + dj[dir]))
                    CHECK(cut_keys.count({g.idx(i, j), dir}) == 1);
        }
}

TEST_CASE("invalid shape specs are rejected") {
    ShapeSpec s;
    s.kind = ShapeKind::rectangle;
    s.p1 = -1.0;
    s.p2 = 1.0;
    CHECK_THROWS_AS(build_domain(s), PreconditionError);

    s.kind = ShapeKind::annulus;
    s.p1 = 1.0;
    s.p2 = 0.5;  // r_inner >= r_outer
    CHECK_THROWS_AS(build_domain(s), PreconditionError);

    s.kind = ShapeKind::disc;
    s.p1 = 1.0;
    s.n = 4;  // too coarse
    CHECK_THROWS_AS(build_domain(s), PreconditionError);
}

TEST_CASE("boundary integral rejects mismatched samples") {
    Domain d = rect_unit(16);
    std::vector<double> wrong(d.boundary.size() + 1, 1.0);
    CHECK_THROWS_AS(boundary_integral(d, wrong), PreconditionError);
}

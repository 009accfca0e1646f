// 2D structured grid and grid-sampled fields.
//
// Fields are cell-centered.  A grid either covers a Cartesian box or, for
// annular domains, a polar chart (i = radial index, j = angular index with
// periodic wrap).  Metric factors of the polar chart are applied inside the
// operators that need them, never stored in the field values.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "aet/errors.hpp"

namespace aet {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double c) const { return {c * x, c * y}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
    Vec2 perp() const { return {-y, x}; }
    Vec2 normalized() const {
        double n = norm();
        return n > 0 ? Vec2{x / n, y / n} : Vec2{0, 0};
    }
};

inline Vec2 operator*(double c, const Vec2& v) { return {c * v.x, c * v.y}; }

enum class Chart { cartesian, polar };

struct Grid2D {
    int nx = 0, ny = 0;      // cell counts
    double hx = 0, hy = 0;   // cell spacing (polar: hx = dr, hy = dphi)
    double ox = 0, oy = 0;   // Cartesian origin (lower-left corner of the box)
    Chart chart = Chart::cartesian;
    double r_inner = 0, r_outer = 0;  // polar chart only

    static Grid2D cartesian_box(int nx, int ny, double Lx, double Ly,
                                double ox = 0, double oy = 0) {
        require(nx >= 8 && ny >= 8, "Grid2D: nx, ny must be >= 8");
        require(Lx > 0 && Ly > 0, "Grid2D: box sides must be positive");
        Grid2D g;
        g.nx = nx;
        g.ny = ny;
        g.hx = Lx / nx;
        g.hy = Ly / ny;
        g.ox = ox;
        g.oy = oy;
        g.chart = Chart::cartesian;
        return g;
    }

    static Grid2D polar_annulus(int nr, int nphi, double r_inner, double r_outer) {
        require(nr >= 8 && nphi >= 8, "Grid2D: nr, nphi must be >= 8");
        require(r_inner > 0 && r_inner < r_outer,
                "Grid2D: polar chart needs 0 < r_inner < r_outer");
        Grid2D g;
        g.nx = nr;
        g.ny = nphi;
        g.hx = (r_outer - r_inner) / nr;
        g.hy = 2.0 * M_PI / nphi;
        g.chart = Chart::polar;
        g.r_inner = r_inner;
        g.r_outer = r_outer;
        return g;
    }

    int size() const { return nx * ny; }
    int idx(int i, int j) const { return j * nx + i; }

    // chart coordinates of cell centers
    double cx(int i) const { return chart == Chart::polar ? r_inner + (i + 0.5) * hx : ox + (i + 0.5) * hx; }
    double cy(int j) const { return oy + (j + 0.5) * hy; }
    double r(int i) const { return r_inner + (i + 0.5) * hx; }
    double phi(int j) const { return (j + 0.5) * hy; }

    // physical position of a cell center
    Vec2 pos(int i, int j) const {
        if (chart == Chart::polar) {
            double rr = r(i), ph = phi(j);
            return {rr * std::cos(ph), rr * std::sin(ph)};
        }
        return {cx(i), cy(j)};
    }

    int wrap_j(int j) const {
        if (chart != Chart::polar) return j;
        int m = j % ny;
        return m < 0 ? m + ny : m;
    }

    bool same_layout(const Grid2D& o) const {
        return nx == o.nx && ny == o.ny && chart == o.chart;
    }
};

struct ScalarField {
    Grid2D grid;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(const Grid2D& g, double fill = 0.0) : grid(g), v(g.size(), fill) {}

    double& at(int i, int j) { return v[grid.idx(i, j)]; }
    double at(int i, int j) const { return v[grid.idx(i, j)]; }
    double& operator[](int k) { return v[k]; }
    double operator[](int k) const { return v[k]; }
};

struct VectorField {
    Grid2D grid;
    std::vector<double> vx, vy;

    VectorField() = default;
    explicit VectorField(const Grid2D& g) : grid(g), vx(g.size(), 0.0), vy(g.size(), 0.0) {}

    Vec2 at(int i, int j) const {
        int k = grid.idx(i, j);
        return {vx[k], vy[k]};
    }
    void set(int i, int j, Vec2 w) {
        int k = grid.idx(i, j);
        vx[k] = w.x;
        vy[k] = w.y;
    }
};

using Mask = std::vector<std::uint8_t>;

// L2 norm of a field over masked cells, with the cell measure included.
// Fixed (serial, index-ordered) summation for determinism.
inline double masked_l2(const ScalarField& f, const Mask& mask) {
    double s = 0.0;
    double cell = f.grid.hx * f.grid.hy;
    for (int j = 0; j < f.grid.ny; ++j)
        for (int i = 0; i < f.grid.nx; ++i) {
            int k = f.grid.idx(i, j);
            if (!mask.empty() && !mask[k]) continue;
            double m = cell;
            if (f.grid.chart == Chart::polar) m = f.grid.r(i) * cell;
            s += f.v[k] * f.v[k] * m;
        }
    return std::sqrt(s);
}

inline int mask_count(const Mask& m) {
    int n = 0;
    for (auto b : m) n += (b != 0);
    return n;
}

}  // namespace aet

#include <doctest.h>

#include <cmath>
#include <random>

#include "bandgap/errors.hpp"
#include "bandgap/geometry.hpp"

using namespace bandgap;
using geometry::InclusionShape;
using geometry::Lattice;

namespace {
constexpr double pi = 3.14159265358979323846;
}

TEST_CASE("dual basis identities on random bases") {
    std::mt19937 rng(20260819);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec2 a1{u(rng), u(rng)};
        Vec2 a2{u(rng), u(rng)};
        if (std::abs(cross(a1, a2)) < 1e-3) {
            a2.x += 1.0;  // step away from degeneracy; still arbitrary
        }
        const Lattice lat = Lattice::from_basis(a1, a2);
        CHECK(std::abs(dot(lat.a1, lat.b1) - 2.0 * pi) < 1e-12);
        CHECK(std::abs(dot(lat.a2, lat.b2) - 2.0 * pi) < 1e-12);
        CHECK(std::abs(dot(lat.a1, lat.b2)) < 1e-12);
        CHECK(std::abs(dot(lat.a2, lat.b1)) < 1e-12);
        CHECK(lat.cell_area == doctest::Approx(std::abs(cross(a1, a2))).epsilon(1e-14));
        CHECK(lat.bz_area * lat.cell_area == doctest::Approx(4.0 * pi * pi).epsilon(1e-12));
    }
}

TEST_CASE("degenerate basis rejected") {
    CHECK_THROWS_AS((void)Lattice::from_basis({1.0, 0.0}, {2.0, 0.0}), DegenerateLattice);
    CHECK_THROWS_AS((void)Lattice::from_basis({1.0, 1.0}, {-2.0, -2.0}), DegenerateLattice);
    CHECK_THROWS_AS((void)Lattice::from_basis({0.0, 0.0}, {0.0, 1.0}), DegenerateLattice);
}

TEST_CASE("square lattice constants") {
    const Lattice lat = Lattice::square();
    CHECK(lat.b1.x == doctest::Approx(2.0 * pi));
    CHECK(lat.b1.y == doctest::Approx(0.0));
    CHECK(lat.cell_area == doctest::Approx(1.0));
    // theta0 = -(b1+b2)/2 = (-pi, -pi)
    CHECK(lat.theta0().x == doctest::Approx(-pi));
    CHECK(lat.theta0().y == doctest::Approx(-pi));
    CHECK(norm(lat.b_minus()) == doctest::Approx(2.0 * pi));
}

TEST_CASE("hexagonal lattice dual") {
    const Lattice lat = Lattice::from_basis({1.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0});
    CHECK(lat.cell_area == doctest::Approx(std::sqrt(3.0) / 2.0));
    CHECK(std::abs(dot(lat.a1, lat.b1) - 2.0 * pi) < 1e-12);
    CHECK(std::abs(dot(lat.a2, lat.b1)) < 1e-12);
}

TEST_CASE("lattice coordinate round trip and cell reduction") {
    const Lattice lat = Lattice::from_basis({2.0, 0.3}, {-0.4, 1.7});
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (int i = 0; i < 50; ++i) {
        const Vec2 x{u(rng), u(rng)};
        const Vec2 s = lat.to_lattice_coords(x);
        const Vec2 back = lat.from_lattice_coords(s);
        CHECK(std::abs(back.x - x.x) < 1e-10);
        CHECK(std::abs(back.y - x.y) < 1e-10);

        const Vec2 red = lat.reduce_to_cell(x);
        const Vec2 sr = lat.to_lattice_coords(red);
        CHECK(sr.x >= -1e-12);
        CHECK(sr.x < 1.0 + 1e-12);
        CHECK(sr.y >= -1e-12);
        CHECK(sr.y < 1.0 + 1e-12);
        // x - red is a lattice vector
        const Vec2 d = lat.to_lattice_coords(Vec2{x.x - red.x, x.y - red.y});
        CHECK(std::abs(d.x - std::round(d.x)) < 1e-9);
        CHECK(std::abs(d.y - std::round(d.y)) < 1e-9);
    }
}

TEST_CASE("nearest image is minimal over a brute-force search") {
    const Lattice lat = Lattice::from_basis({1.0, 0.0}, {0.45, 0.9});  // skewed
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 40; ++i) {
        const Vec2 x{u(rng), u(rng)};
        const Vec2 img = lat.nearest_image(x);
        double best = 1e300;
        for (int n1 = -12; n1 <= 12; ++n1)
            for (int n2 = -12; n2 <= 12; ++n2) {
                const Vec2 d{x.x - n1 * lat.a1.x - n2 * lat.a2.x,
                             x.y - n1 * lat.a1.y - n2 * lat.a2.y};
                best = std::min(best, norm2(d));
            }
        CHECK(norm2(img) == doctest::Approx(best).epsilon(1e-12));
        // the image differs from x by a lattice vector
        const Vec2 d = lat.to_lattice_coords(Vec2{x.x - img.x, x.y - img.y});
        CHECK(std::abs(d.x - std::round(d.x)) < 1e-9);
        CHECK(std::abs(d.y - std::round(d.y)) < 1e-9);
    }
}

TEST_CASE("Brillouin grid: size, range, inversion symmetry") {
    const Lattice lat = Lattice::from_basis({1.2, 0.1}, {0.0, 0.8});
    for (int m : {1, 2, 3, 8}) {
        const std::vector<Vec2> grid = geometry::brillouin_grid(lat, m);
        CHECK(grid.size() == std::size_t(m) * std::size_t(m));
        for (const Vec2& th : grid) {
            // coordinates s in (-1/2, 1/2]
            const double s1 = (th.x * lat.a1.x + th.y * lat.a1.y) / (2.0 * pi);
            const double s2 = (th.x * lat.a2.x + th.y * lat.a2.y) / (2.0 * pi);
            CHECK(s1 > -0.5 - 1e-12);
            CHECK(s1 < 0.5 + 1e-12);
            CHECK(s2 > -0.5 - 1e-12);
            CHECK(s2 < 0.5 + 1e-12);
            // -theta also sampled (possibly as itself)
            bool found = false;
            for (const Vec2& th2 : grid)
                if (std::abs(th2.x + th.x) < 1e-12 && std::abs(th2.y + th.y) < 1e-12)
                    found = true;
            CHECK(found);
        }
    }
    CHECK_THROWS_AS((void)geometry::brillouin_grid(lat, 0), InvalidInput);
}

TEST_CASE("disk shape") {
    const InclusionShape d = InclusionShape::disk(0.7);
    CHECK(d.area() == doctest::Approx(pi * 0.49).epsilon(1e-14));
    CHECK(d.bounding_radius() == doctest::Approx(0.7));
    CHECK(d.contains({0.69, 0.0}));
    CHECK(!d.contains({0.71, 0.0}));
    CHECK_THROWS_AS((void)InclusionShape::disk(0.0), InvalidShape);
    CHECK_THROWS_AS((void)InclusionShape::disk(-1.0), InvalidShape);
}

TEST_CASE("polygon shape: area, containment, validation") {
    const InclusionShape sq = InclusionShape::polygon(
        {{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}});
    CHECK(sq.area() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sq.bounding_radius() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
    CHECK(sq.contains({0.49, 0.49}));
    CHECK(!sq.contains({0.51, 0.0}));

    // fewer than 3 vertices
    CHECK_THROWS_AS((void)InclusionShape::polygon({{0.0, 0.0}, {1.0, 0.0}}), InvalidShape);
    // origin outside
    CHECK_THROWS_AS((void)InclusionShape::polygon({{1.0, 1.0}, {2.0, 1.0}, {1.5, 2.0}}),
                    InvalidShape);
    // self-intersecting bowtie around the origin
    CHECK_THROWS_AS((void)InclusionShape::polygon(
                        {{-1.0, -1.0}, {1.0, 1.0}, {1.0, -1.0}, {-1.0, 1.0}}),
                    InvalidShape);
    // zero area (collinear)
    CHECK_THROWS_AS((void)InclusionShape::polygon(
                        {{-1.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}}),
                    InvalidShape);
}

TEST_CASE("min_center_distance: single center sees its own images") {
    const Lattice lat = Lattice::square();
    CHECK(geometry::min_center_distance(lat, {Vec2{0.3, 0.3}}) == doctest::Approx(1.0));
    // two centers closer than any image pair
    const double d = geometry::min_center_distance(lat, {Vec2{0.2, 0.2}, Vec2{0.5, 0.2}});
    CHECK(d == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("crystal spec validation") {
    geometry::CrystalSpec spec;
    spec.lattice = Lattice::square();
    spec.centers = {Vec2{0.5, 0.5}};
    spec.lambdas = {1.0};
    spec.coefficients = {2.0};
    spec.shape = InclusionShape::disk(1.0);
    spec.r = 0.1;
    CHECK(geometry::validate_crystal_spec(spec).ok());

    SUBCASE("overlapping inclusions flagged") {
        geometry::CrystalSpec bad = spec;
        bad.r = 0.6;  // diameter 1.2 > image distance 1
        CHECK(!geometry::validate_crystal_spec(bad).ok());
    }
    SUBCASE("lambdas must increase") {
        geometry::CrystalSpec bad = spec;
        bad.centers = {Vec2{0.25, 0.25}, Vec2{0.75, 0.75}};
        bad.lambdas = {2.0, 1.0};
        bad.coefficients = {1.0, 1.0};
        CHECK(!geometry::validate_crystal_spec(bad).ok());
    }
    SUBCASE("coefficient count must match") {
        geometry::CrystalSpec bad = spec;
        bad.coefficients = {1.0, 2.0};
        CHECK(!geometry::validate_crystal_spec(bad).ok());
    }
    SUBCASE("nonpositive r flagged") {
        geometry::CrystalSpec bad = spec;
        bad.r = 0.0;
        CHECK(!geometry::validate_crystal_spec(bad).ok());
    }
}

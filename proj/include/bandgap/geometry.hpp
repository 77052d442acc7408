#pragma once

// Bravais lattices with their duals, Brillouin-zone sampling, inclusion
// shapes (disks and simple polygons), and crystal-specification validation.

#include <string>
#include <vector>

#include "bandgap/vec2.hpp"

namespace bandgap::geometry {

struct Lattice {
    Vec2 a1, a2;  // direct basis
    Vec2 b1, b2;  // dual basis, a_m . b_l = 2 pi delta_ml
    double cell_area = 0.0;
    double bz_area = 0.0;

    static Lattice from_basis(Vec2 a1, Vec2 a2);
    static Lattice square() { return from_basis({1.0, 0.0}, {0.0, 1.0}); }

    Vec2 theta0() const { return -0.5 * (b1 + b2); }
    // the shorter dual basis vector (tie -> b1)
    Vec2 b_minus() const { return norm2(b1) <= norm2(b2) ? b1 : b2; }
    // lattice coordinates of x: x = s1 a1 + s2 a2
    Vec2 to_lattice_coords(Vec2 x) const;
    Vec2 from_lattice_coords(Vec2 s) const { return s.x * a1 + s.y * a2; }
    // representative of x mod Lambda with lattice coordinates in [0,1)
    Vec2 reduce_to_cell(Vec2 x) const;
    // displacement x - L of minimal norm over lattice translates L
    Vec2 nearest_image(Vec2 x) const;
};

// dual basis alone; throws DegenerateLattice when |det| <= 1e-14 |a1||a2|
std::pair<Vec2, Vec2> dual_lattice(Vec2 a1, Vec2 a2);

// m x m cell-centered sample of the Brillouin zone:
// theta = s1 b1 + s2 b2, s_i = -1/2 + (k+1/2)/m. Symmetric under theta -> -theta.
std::vector<Vec2> brillouin_grid(const Lattice& lattice, int m);

struct InclusionShape {
    enum class Kind { disk, polygon };
    Kind kind = Kind::disk;
    double radius = 1.0;          // disk only
    std::vector<Vec2> vertices;   // polygon only, counter-clockwise

    static InclusionShape disk(double radius);
    // validates: >= 3 vertices, simple, nonzero area, contains the origin
    static InclusionShape polygon(std::vector<Vec2> vertices);

    double area() const;
    double bounding_radius() const;  // R with the shape inside B_R(0)
    bool contains(Vec2 p) const;
};

struct CrystalSpec {
    Lattice lattice;
    std::vector<Vec2> centers;        // inclusion centers, fundamental cell
    std::vector<double> lambdas;      // target values, increasing
    std::vector<double> coefficients; // c_n, one per target
    InclusionShape shape;
    double r = 0.1;                   // inclusion scale
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Report-style check of all CrystalSpec invariants. Disjointness of the
// translated inclusions is tested conservatively via center distances
// > 2 r R_Omega over the 3x3 block of neighboring cells.
ValidationReport validate_crystal_spec(const CrystalSpec& spec);

// Minimal center-to-center distance (pairs and periodic images, 3x3 block).
double min_center_distance(const Lattice& lattice, const std::vector<Vec2>& centers);

}  // namespace bandgap::geometry

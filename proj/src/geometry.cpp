#include "bandgap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bandgap/errors.hpp"

namespace bandgap::geometry {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

double shoelace_area(const std::vector<Vec2>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2& p = v[i];
        const Vec2& q = v[(i + 1) % v.size()];
        s += cross(p, q);
    }
    return 0.5 * s;
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
        const double v = cross(q - p, r - p);
        return (v > 0.0) - (v < 0.0);
    };
    const int o1 = orient(a, b, c), o2 = orient(a, b, d);
    const int o3 = orient(c, d, a), o4 = orient(c, d, b);
    return o1 != o2 && o3 != o4;
}

}  // namespace

std::pair<Vec2, Vec2> dual_lattice(Vec2 a1, Vec2 a2) {
    const double det = cross(a1, a2);
    if (std::abs(det) <= 1e-14 * norm(a1) * norm(a2))
        throw DegenerateLattice("lattice basis is (numerically) linearly dependent");
    // rows of 2*pi*A^{-1}: b1 = 2pi/det (a2.y, -a2.x), b2 = 2pi/det (-a1.y, a1.x)
    const double f = two_pi / det;
    return {Vec2{f * a2.y, -f * a2.x}, Vec2{-f * a1.y, f * a1.x}};
}

Lattice Lattice::from_basis(Vec2 a1, Vec2 a2) {
    auto [b1, b2] = dual_lattice(a1, a2);
    Lattice l;
    l.a1 = a1;
    l.a2 = a2;
    l.b1 = b1;
    l.b2 = b2;
    l.cell_area = std::abs(cross(a1, a2));
    l.bz_area = std::abs(cross(b1, b2));
    return l;
}

Vec2 Lattice::to_lattice_coords(Vec2 x) const {
    // invert x = s1 a1 + s2 a2
    const double det = cross(a1, a2);
    return {cross(x, a2) / det, cross(a1, x) / det};
}

Vec2 Lattice::reduce_to_cell(Vec2 x) const {
    Vec2 s = to_lattice_coords(x);
    s.x -= std::floor(s.x);
    s.y -= std::floor(s.y);
    // floor can leave exactly 1.0 after rounding; fold it back
    if (s.x >= 1.0) s.x -= 1.0;
    if (s.y >= 1.0) s.y -= 1.0;
    return from_lattice_coords(s);
}

Vec2 Lattice::nearest_image(Vec2 x) const {
    Vec2 s = to_lattice_coords(x);
    const double n1 = std::round(s.x), n2 = std::round(s.y);
    Vec2 best = x - from_lattice_coords({n1, n2});
    double bn = norm2(best);
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
            const Vec2 cand = x - from_lattice_coords({n1 + i, n2 + j});
            const double cn = norm2(cand);
            if (cn < bn) {
                bn = cn;
                best = cand;
            }
        }
    return best;
}

std::vector<Vec2> brillouin_grid(const Lattice& lattice, int m) {
    if (m < 1) throw InvalidInput("brillouin_grid: m must be >= 1");
    std::vector<Vec2> out;
    out.reserve(std::size_t(m) * m);
    for (int k1 = 0; k1 < m; ++k1)
        for (int k2 = 0; k2 < m; ++k2) {
            const double s1 = -0.5 + (k1 + 0.5) / m;
            const double s2 = -0.5 + (k2 + 0.5) / m;
            out.push_back(s1 * lattice.b1 + s2 * lattice.b2);
        }
    return out;
}

InclusionShape InclusionShape::disk(double radius) {
    if (!(radius > 0.0)) throw InvalidShape("disk radius must be positive");
    InclusionShape s;
    s.kind = Kind::disk;
    s.radius = radius;
    return s;
}

InclusionShape InclusionShape::polygon(std::vector<Vec2> vertices) {
    if (vertices.size() < 3) throw InvalidShape("polygon needs at least 3 vertices");
    double area = shoelace_area(vertices);
    if (std::abs(area) < 1e-14)
        throw InvalidShape("polygon area vanishes");
    if (area < 0.0) std::reverse(vertices.begin(), vertices.end());
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            // adjacent edges share a vertex; skip those pairs
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(vertices[i], vertices[(i + 1) % n],
                                   vertices[j], vertices[(j + 1) % n]))
                throw InvalidShape("polygon is self-intersecting");
        }
    InclusionShape s;
    s.kind = Kind::polygon;
    s.vertices = std::move(vertices);
    if (!s.contains({0.0, 0.0}))
        throw InvalidShape("shape must contain the origin");
    return s;
}

double InclusionShape::area() const {
    if (kind == Kind::disk) return std::numbers::pi * radius * radius;
    return shoelace_area(vertices);
}

double InclusionShape::bounding_radius() const {
    if (kind == Kind::disk) return radius;
    double r2 = 0.0;
    for (const Vec2& v : vertices) r2 = std::max(r2, norm2(v));
    return std::sqrt(r2);
}

bool InclusionShape::contains(Vec2 p) const {
    if (kind == Kind::disk) return norm2(p) <= radius * radius;
    // even-odd ray casting along +x
    bool inside = false;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& vi = vertices[i];
        const Vec2& vj = vertices[j];
        if ((vi.y > p.y) != (vj.y > p.y)) {
            const double xcross = vj.x + (p.y - vj.y) / (vi.y - vj.y) * (vi.x - vj.x);
            if (p.x < xcross) inside = !inside;
        }
    }
    return inside;
}

double min_center_distance(const Lattice& lattice, const std::vector<Vec2>& centers) {
    double dmin = std::numeric_limits<double>::infinity();
    const std::size_t n = centers.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (int n1 = -1; n1 <= 1; ++n1)
                for (int n2 = -1; n2 <= 1; ++n2) {
                    if (i == j && n1 == 0 && n2 == 0) continue;
                    const Vec2 d = centers[i] - centers[j] -
                                   lattice.from_lattice_coords({double(n1), double(n2)});
                    dmin = std::min(dmin, norm(d));
                }
    return dmin;
}

ValidationReport validate_crystal_spec(const CrystalSpec& spec) {
    ValidationReport rep;
    auto flag = [&rep](const std::string& s) { rep.violations.push_back(s); };

    if (std::abs(cross(spec.lattice.a1, spec.lattice.a2)) <=
        1e-14 * norm(spec.lattice.a1) * norm(spec.lattice.a2))
        flag("lattice basis degenerate");
    if (spec.centers.empty()) flag("no inclusion centers");
    if (spec.lambdas.size() != spec.centers.size())
        flag("lambdas and centers disagree in count");
    if (spec.coefficients.size() != spec.lambdas.size())
        flag("coefficients and lambdas disagree in count");
    for (std::size_t i = 0; i < spec.lambdas.size(); ++i) {
        if (!(spec.lambdas[i] > 0.0)) {
            flag("lambda values must be positive");
            break;
        }
    }
    for (std::size_t i = 1; i < spec.lambdas.size(); ++i) {
        if (!(spec.lambdas[i] > spec.lambdas[i - 1])) {
            flag("lambda values must be strictly increasing");
            break;
        }
    }
    for (double c : spec.coefficients)
        if (!std::isfinite(c)) {
            flag("coefficients must be finite");
            break;
        }
    if (!(spec.r > 0.0)) flag("scale r must be positive");
    if (!(spec.shape.area() > 0.0)) flag("shape area must be positive");

    // centers inside the fundamental cell (lattice coordinates in [0,1))
    for (const Vec2& y : spec.centers) {
        const Vec2 s = spec.lattice.to_lattice_coords(y);
        if (s.x < -1e-12 || s.x >= 1.0 + 1e-12 || s.y < -1e-12 || s.y >= 1.0 + 1e-12) {
            flag("center outside the fundamental cell");
            break;
        }
    }

    if (!spec.centers.empty() && spec.r > 0.0) {
        const double dmin = min_center_distance(spec.lattice, spec.centers);
        const double need = 2.0 * spec.r * spec.shape.bounding_radius();
        if (!(dmin > need))
            flag("inclusions not disjoint: min center distance " + std::to_string(dmin) +
                 " <= 2 r R_Omega = " + std::to_string(need));
    }
    return rep;
}

}  // namespace bandgap::geometry

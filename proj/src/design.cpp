#include "bandgap/design.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "bandgap/errors.hpp"

namespace bandgap::design {

namespace {

constexpr double kPi = std::numbers::pi;

// antiderivative of ln(s^2 + h^2) plus the -2s from the divergence identity;
// the h*atan term vanishes with h, and s ln(s^2+h^2) -> 0 as s,h -> 0
double edge_antiderivative(double s, double h) {
    const double r2 = s * s + h * h;
    double v = -2.0 * s;
    if (r2 > 0.0 && s != 0.0) v += s * std::log(r2);
    if (h != 0.0) v += 2.0 * h * std::atan(s / h);
    return v;
}

double polygon_area(const std::vector<Vec2>& v) {
    double twice = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2& p = v[i];
        const Vec2& q = v[(i + 1) % v.size()];
        twice += cross(p, q);
    }
    return 0.5 * twice;
}

// int_Omega ln|x-z| dx for a polygon, any z in the plane. From
// div(u(ln|u|^2 - 1)) = 4 ln|u| with u = x - z: the flux through each edge
// has a closed form, and the -1 part contributes -|Omega|/2.
double polygon_log_potential(const std::vector<Vec2>& verts, Vec2 z) {
    double total = 0.0;
    const std::size_t n = verts.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 p0 = verts[i];
        const Vec2 p1 = verts[(i + 1) % n];
        const Vec2 e{p1.x - p0.x, p1.y - p0.y};
        const double len = norm(e);
        if (len == 0.0) continue;
        const Vec2 t{e.x / len, e.y / len};
        const Vec2 nrm{t.y, -t.x};  // outward for counter-clockwise vertices
        const Vec2 d0{p0.x - z.x, p0.y - z.y};
        const double h = dot(d0, nrm);
        const double s0 = dot(d0, t);
        const double s1 = dot(Vec2{p1.x - z.x, p1.y - z.y}, t);
        total += (h / 4.0) * (edge_antiderivative(s1, h) - edge_antiderivative(s0, h));
    }
    return total - 0.5 * polygon_area(verts);
}

// degree-5 rule on the triangle (7 points), weights relative to area
struct TriRule {
    double b0, b1, w;  // barycentric (b0, b1, 1-b0-b1)
};

const TriRule kTriRule[7] = {
    {1.0 / 3.0, 1.0 / 3.0, 9.0 / 40.0},
    {0.47014206410511508, 0.47014206410511508, 0.13239415278850618},
    {0.47014206410511508, 0.05971587178976983, 0.13239415278850618},
    {0.05971587178976983, 0.47014206410511508, 0.13239415278850618},
    {0.10128650732345634, 0.10128650732345634, 0.12593918054482716},
    {0.10128650732345634, 0.79742698535308732, 0.12593918054482716},
    {0.79742698535308732, 0.10128650732345634, 0.12593918054482716},
};

template <typename F>
double tri_rule_apply(Vec2 a, Vec2 b, Vec2 c, double signed_area, const F& f) {
    double acc = 0.0;
    for (const TriRule& q : kTriRule) {
        const double b2 = 1.0 - q.b0 - q.b1;
        const Vec2 p{q.b0 * a.x + q.b1 * b.x + b2 * c.x,
                     q.b0 * a.y + q.b1 * b.y + b2 * c.y};
        acc += q.w * f(p);
    }
    return acc * signed_area;
}

template <typename F>
struct TriQuad {
    const F& f;
    double tol_per_area;
    long budget;

    double refine(Vec2 a, Vec2 b, Vec2 c, double signed_area, double coarse, int depth) {
        const Vec2 ab{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
        const Vec2 bc{0.5 * (b.x + c.x), 0.5 * (b.y + c.y)};
        const Vec2 ca{0.5 * (c.x + a.x), 0.5 * (c.y + a.y)};
        const double sa = 0.25 * signed_area;
        const double c0 = tri_rule_apply(a, ab, ca, sa, f);
        const double c1 = tri_rule_apply(ab, b, bc, sa, f);
        const double c2 = tri_rule_apply(ca, bc, c, sa, f);
        const double c3 = tri_rule_apply(ab, bc, ca, sa, f);
        const double fine = c0 + c1 + c2 + c3;
        budget -= 4;
        const double err = std::abs(fine - coarse);
        if (err <= tol_per_area * std::abs(signed_area) || depth >= 40) return fine;
        if (budget <= 0)
            throw NoConvergence("triangle quadrature budget exhausted", fine, err);
        return refine(a, ab, ca, sa, c0, depth + 1) + refine(ab, b, bc, sa, c1, depth + 1) +
               refine(ca, bc, c, sa, c2, depth + 1) + refine(ab, bc, ca, sa, c3, depth + 1);
    }

    double integrate(Vec2 a, Vec2 b, Vec2 c) {
        const double sa = 0.5 * cross(Vec2{b.x - a.x, b.y - a.y}, Vec2{c.x - a.x, c.y - a.y});
        if (sa == 0.0) return 0.0;
        return refine(a, b, c, sa, tri_rule_apply(a, b, c, sa, f), 0);
    }
};

double shape_area_checked(const geometry::InclusionShape& shape) {
    const double area = shape.area();
    if (!(area > 0.0)) throw InvalidShape("inclusion has nonpositive area");
    return area;
}

}  // namespace

double log_potential(const geometry::InclusionShape& shape, Vec2 z) {
    using geometry::InclusionShape;
    if (shape.kind == InclusionShape::Kind::disk) {
        const double R = shape.radius;
        const double d = norm(z);
        if (d <= R) return kPi * (R * R * std::log(R) - 0.5 * (R * R - d * d));
        return kPi * R * R * std::log(d);
    }
    return polygon_log_potential(shape.vertices, z);
}

double log_self_energy(const geometry::InclusionShape& shape, double tol) {
    using geometry::InclusionShape;
    if (!(tol > 0.0)) throw InvalidInput("self-energy tolerance must be positive");
    if (shape.kind == InclusionShape::Kind::disk) {
        const double R = shape.radius;
        return kPi * kPi * R * R * R * R * (std::log(R) - 0.25);
    }
    // outer integral of the exact inner potential over a signed fan from the
    // origin; psi is defined on all of R^2, so overlapping signed triangles
    // of a non-convex polygon cancel correctly
    const std::vector<Vec2>& v = shape.vertices;
    const double area = std::abs(polygon_area(v));
    auto psi = [&](Vec2 z) { return polygon_log_potential(v, z); };
    TriQuad<decltype(psi)> quad{psi, tol / std::max(area, 1e-30), 400000};
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        total += quad.integrate(Vec2{0.0, 0.0}, v[i], v[(i + 1) % v.size()]);
    return total;
}

std::vector<double> coupling_constants(const std::vector<double>& targets,
                                       const geometry::InclusionShape& shape,
                                       double alpha, double tol) {
    const double area = shape_area_checked(shape);
    const double C = log_self_energy(shape, tol);
    std::vector<double> out;
    out.reserve(targets.size());
    for (double lambda : targets) {
        if (!(lambda > 0.0)) throw InvalidInput("target values must be positive");
        out.push_back(4.0 * kPi * kPi / (lambda * area) *
                      (C / (2.0 * kPi * area * area) - alpha));
    }
    return out;
}

double alpha_from_coupling(double c, double lambda, const geometry::InclusionShape& shape,
                           double tol) {
    if (!(lambda > 0.0)) throw InvalidInput("target value must be positive");
    const double area = shape_area_checked(shape);
    const double C = log_self_energy(shape, tol);
    return -c * lambda * area / (4.0 * kPi * kPi) + C / (2.0 * kPi * area * area);
}

double mu_eval(std::size_t n, double x, const geometry::CrystalSpec& spec) {
    if (n >= spec.lambdas.size() || n >= spec.coefficients.size())
        throw InvalidInput("mu_eval: index out of range");
    if (!(x >= 0.0)) throw InvalidInput("mu_eval: x must be nonnegative");
    const double area = shape_area_checked(spec.shape);
    return 2.0 * kPi / (spec.lambdas[n] * area) * x + spec.coefficients[n] * x * x;
}

double weight_eval(Vec2 x, const geometry::CrystalSpec& spec, bool* negative_contrast) {
    if (!(spec.r > 0.0) || spec.r >= 1.0)
        throw InvalidInput("weight_eval: r must lie in (0, 1)");
    const double inv_log = 1.0 / std::abs(std::log(spec.r));
    if (negative_contrast) *negative_contrast = false;
    double w = 1.0;
    for (std::size_t n = 0; n < spec.centers.size(); ++n) {
        const Vec2 d = spec.lattice.nearest_image(
            Vec2{x.x - spec.centers[n].x, x.y - spec.centers[n].y});
        if (!spec.shape.contains(Vec2{d.x / spec.r, d.y / spec.r})) continue;
        const double mu = mu_eval(n, inv_log, spec);
        if (negative_contrast && mu <= 0.0) *negative_contrast = true;
        w += mu / (spec.r * spec.r);
    }
    return w;
}

double r_max(const geometry::CrystalSpec& spec) {
    double r = 0.5;
    const double area = shape_area_checked(spec.shape);
    for (std::size_t n = 0; n < spec.coefficients.size(); ++n) {
        const double c = spec.coefficients[n];
        if (c >= 0.0) continue;  // mu_n > 0 for every x > 0
        // mu_n(x) = x (2 pi/(lambda_n |Omega|) + c x) > 0 iff x < x*
        const double xstar = (2.0 * kPi / (spec.lambdas[n] * area)) / (-c);
        r = std::min(r, std::exp(-1.0 / xstar));
    }
    if (!spec.centers.empty()) {
        const double dmin = geometry::min_center_distance(spec.lattice, spec.centers);
        const double R = spec.shape.bounding_radius();
        if (R > 0.0) r = std::min(r, dmin / (2.0 * R) * (1.0 - 1e-9));
    }
    return r;
}

DesignResult design_crystal(const DesignInputs& inputs, double tol) {
    const std::vector<double>& targets = inputs.targets;
    if (targets.empty()) throw InvalidInput("design: no target values");
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!std::isfinite(targets[i]) || !(targets[i] > 0.0))
            throw InvalidInput("design: targets must be positive finite reals");
        if (i > 0 && !(targets[i] > targets[i - 1]))
            throw InvalidInput("design: targets must be strictly increasing");
    }
    const double area = shape_area_checked(inputs.shape);

    DesignReport report;
    report.threshold = pointspec::threshold_alpha(inputs.lattice0, tol);
    report.alpha0 = inputs.alpha0.value_or(report.threshold - 1.0);
    if (!(report.alpha0 < report.threshold))
        throw BadBaseCoupling("design: base coupling does not open a gap (E1 >= 0)");
    report.margin = inputs.margin.value_or(0.1 * targets.front());
    if (!(report.margin > 0.0)) throw InvalidInput("design: margin must be positive");
    report.eta = 2.0 * kPi / area + 1.0;
    report.window_lo = targets.front() - report.eta - 2.0 * report.margin;
    report.window_hi = targets.back() + report.eta + 2.0 * report.margin;

    const pointspec::PointInteractionModel base{report.alpha0, inputs.lattice0, Vec2{0.0, 0.0}};
    const pointspec::GapPlacement placed =
        pointspec::place_gap(report.window_lo, report.window_hi, base, tol);
    report.k = placed.k;
    report.alpha_k = placed.model.alpha;
    report.edges = pointspec::band_edges(placed.model, tol);

    geometry::CrystalSpec spec;
    spec.lattice = placed.model.lattice;
    spec.lambdas = targets;
    spec.shape = inputs.shape;
    spec.coefficients = coupling_constants(targets, inputs.shape, report.alpha_k,
                                           std::min(tol, 1e-8));
    const std::size_t N = targets.size();
    if (inputs.centers) {
        if (inputs.centers->size() != N)
            throw InvalidInput("design: need one center per target value");
        spec.centers.reserve(N);
        for (Vec2 s : *inputs.centers) {
            if (!(s.x >= 0.0) || s.x >= 1.0 || !(s.y >= 0.0) || s.y >= 1.0)
                throw InvalidInput("design: centers must have lattice coordinates in [0,1)^2");
            spec.centers.push_back(spec.lattice.from_lattice_coords(s));
        }
    } else {
        // diagonal placement keeps pairwise distances equal and maximal
        for (std::size_t n = 0; n < N; ++n) {
            const double s = (2.0 * static_cast<double>(n) + 1.0) / (2.0 * static_cast<double>(N));
            spec.centers.push_back(spec.lattice.from_lattice_coords(Vec2{s, s}));
        }
    }
    report.r_max = r_max(spec);
    report.self_energy = log_self_energy(inputs.shape, std::min(tol, 1e-8));
    spec.r = inputs.r.value_or(std::min(0.1, 0.5 * report.r_max));
    if (!(spec.r > 0.0)) throw InvalidInput("design: r must be positive");
    if (spec.r >= report.r_max)
        throw Infeasible("design: requested r exceeds r_max for this crystal");

    const geometry::ValidationReport check = geometry::validate_crystal_spec(spec);
    if (!check.ok()) {
        std::string msg = "design produced an invalid crystal:";
        for (const std::string& s : check.violations) msg += " " + s + ";";
        throw Infeasible(msg);
    }
    return DesignResult{std::move(spec), report};
}

}  // namespace bandgap::design

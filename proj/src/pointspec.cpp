#include "bandgap/pointspec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bandgap/errors.hpp"

namespace bandgap::pointspec {

namespace {

using geometry::Lattice;
using latticesum::GFunEvaluator;

// smallest |x + theta|^2 over the dual lattice (the first resolvent pole)
double first_pole(const Lattice& lat, Vec2 theta) {
    const double det = cross(lat.b1, lat.b2);
    const Vec2 c{cross(-theta, lat.b2) / det, cross(lat.b1, -theta) / det};
    double best = std::numeric_limits<double>::infinity();
    for (long n1 = long(std::floor(c.x)) - 2; n1 <= long(std::ceil(c.x)) + 2; ++n1)
        for (long n2 = long(std::floor(c.y)) - 2; n2 <= long(std::ceil(c.y)) + 2; ++n2) {
            const Vec2 x = double(n1) * lat.b1 + double(n2) * lat.b2 + theta;
            best = std::min(best, norm2(x));
        }
    return best;
}

// smallest nonzero |x|^2 over the dual lattice
double first_nonzero_pole(const Lattice& lat) {
    double best = std::numeric_limits<double>::infinity();
    for (int n1 = -2; n1 <= 2; ++n1)
        for (int n2 = -2; n2 <= 2; ++n2) {
            if (n1 == 0 && n2 == 0) continue;
            best = std::min(best, norm2(double(n1) * lat.b1 + double(n2) * lat.b2));
        }
    return best;
}

struct EdgeFn {
    const GFunEvaluator& ev;
    Vec2 theta;
    double alpha;
    double operator()(double E) const {
        return latticesum::g_lattice(E, theta, ev) + edge_constant() - alpha;
    }
};

// Safeguarded secant/bisection on a bracket [lo, hi] with f(lo) < 0 < f(hi);
// g is strictly increasing between poles, so the root is unique. Terminates
// on |f| < tol.
double refine_root(const EdgeFn& f, double lo, double hi, double flo, double fhi,
                   double tol) {
    for (int it = 0; it < 300; ++it) {
        double cand = hi - fhi * (hi - lo) / (fhi - flo);  // secant through the bracket
        const double mid = 0.5 * (lo + hi);
        // reject secant steps that leave the bracket or stall
        if (!(cand > lo && cand < hi)) cand = mid;
        if (std::min(cand - lo, hi - cand) < 1e-3 * (hi - lo) && it % 2 == 1) cand = mid;
        if (cand == lo || cand == hi) return cand;  // bracket at rounding width
        const double fc = f(cand);
        if (std::abs(fc) < tol) return cand;
        if (fc < 0.0) {
            lo = cand;
            flo = fc;
        } else {
            hi = cand;
            fhi = fc;
        }
    }
    throw NoConvergence("band edge refinement stalled", 0.5 * (lo + hi), 0.0);
}

// Root on (-inf, hi0] where f(hi0) >= 0: expand the bracket leftward by
// doubling (g -> -inf as E -> -inf guarantees a sign change).
double root_negative_side(const EdgeFn& f, double hi0, double fhi0, double scale,
                          double tol) {
    double hi = hi0, fhi = fhi0;
    double lo = -scale;
    for (int it = 0;; ++it) {
        if (it > 60 || lo < -1e300)
            throw BracketFailure("no sign change found while expanding toward -inf");
        const double flo = f(lo);
        if (std::abs(flo) < tol) return lo;
        if (flo < 0.0) return refine_root(f, lo, hi, flo, fhi, tol);
        hi = lo;
        fhi = flo;
        lo *= 4.0;
    }
}

// Root on (eps, pole): walk a geometric ladder from both ends of the
// pole-free interval; f is increasing from -inf side values to +inf at the
// pole, so one adjacent pair brackets the root.
double root_below_pole(const EdgeFn& f, double pole, double tol) {
    std::vector<double> ts;
    for (int k = 12; k >= 1; --k) ts.push_back(std::pow(4.0, -k));
    ts.push_back(0.5);
    for (int j = 1; j <= 16; ++j) ts.push_back(1.0 - std::pow(4.0, -j));
    double prev_e = ts.front() * pole;
    double prev_f = f(prev_e);
    if (std::abs(prev_f) < tol) return prev_e;
    for (std::size_t i = 1; i < ts.size(); ++i) {
        const double e = ts[i] * pole;
        const double fe = f(e);
        if (std::abs(fe) < tol) return e;
        if (prev_f < 0.0 && fe > 0.0) return refine_root(f, prev_e, e, prev_f, fe, tol);
        prev_e = e;
        prev_f = fe;
    }
    throw BracketFailure("no sign change on the pole-free interval");
}

}  // namespace

double edge_constant() {
    return (specfun::euler_gamma + std::numbers::ln2) / (2.0 * std::numbers::pi);
}

double threshold_alpha(const geometry::Lattice& lattice, double tol) {
    GFunEvaluator ev(lattice, tol);
    return latticesum::g_lattice(0.0, lattice.theta0(), ev) + edge_constant();
}

EdgeSet band_edges(const PointInteractionModel& model, double tol) {
    if (!(tol > 0.0)) throw InvalidInput("band_edges: tol must be positive");
    const Lattice& lat = model.lattice;
    GFunEvaluator ev(lat, std::min(tol, 1e-12));
    const double scale = norm2(lat.b_minus());

    EdgeSet edges;

    // E0: smallest zero at theta = 0, always negative (g -> +inf as E -> 0-)
    {
        EdgeFn f{ev, Vec2{0.0, 0.0}, model.alpha};
        const double hi = -1e-9 * scale;
        const double fhi = f(hi);
        edges.E0 = fhi <= 0.0 && std::abs(fhi) < tol
                       ? hi
                       : root_negative_side(f, hi, fhi, scale, tol);
    }

    // E1: smallest zero at theta0; negative iff alpha < threshold
    {
        EdgeFn f{ev, lat.theta0(), model.alpha};
        const double f0 = f(0.0);
        if (std::abs(f0) < tol) {
            edges.E1 = 0.0;
        } else if (f0 > 0.0) {
            edges.E1 = root_negative_side(f, 0.0, f0, scale, tol);
        } else {
            edges.E1 = root_below_pole(f, first_pole(lat, lat.theta0()), tol);
        }
    }

    // E_tilde: smallest positive zero at theta = 0 (between the pole at 0
    // and the first nonzero pole)
    {
        EdgeFn f{ev, Vec2{0.0, 0.0}, model.alpha};
        edges.E_tilde = root_below_pole(f, first_nonzero_pole(lat), tol);
    }

    edges.E2 = std::min(edges.E_tilde, 0.25 * norm2(lat.b_minus()));
    return edges;
}

bool Spectrum::contains(double E) const {
    for (const Interval& b : bands)
        if (E >= b.lo && E <= b.hi) return true;
    return false;
}

double Spectrum::distance(double E) const {
    double d = std::numeric_limits<double>::infinity();
    for (const Interval& b : bands) {
        if (E >= b.lo && E <= b.hi) return 0.0;
        d = std::min(d, std::min(std::abs(E - b.lo), std::abs(E - b.hi)));
    }
    return d;
}

Spectrum spectrum_pi(const PointInteractionModel& model, double tol) {
    const EdgeSet e = band_edges(model, tol);
    Spectrum s;
    if (e.E2 <= e.E1) {
        s.bands.push_back({e.E0, std::numeric_limits<double>::infinity()});
    } else {
        s.bands.push_back({e.E0, e.E1});
        s.bands.push_back({e.E2, std::numeric_limits<double>::infinity()});
    }
    return s;
}

PointInteractionModel scale_model(const PointInteractionModel& model, double k) {
    if (!(k > 0.0)) throw InvalidScale("scale_model: k must be positive");
    PointInteractionModel out;
    out.alpha = model.alpha - std::log(k) / (2.0 * std::numbers::pi);
    out.lattice = geometry::Lattice::from_basis(model.lattice.a1 / k, model.lattice.a2 / k);
    out.shift = model.shift / k;
    return out;
}

GapPlacement place_gap(double a, double b, const PointInteractionModel& base,
                       double tol) {
    if (!(a < b)) throw InvalidInput("place_gap: need a < b");
    const EdgeSet e = band_edges(base, tol);
    if (e.E2 <= e.E1) throw NoGapToScale("base model has no spectral gap (E2 <= E1)");

    // constraints: k^2 E1 < a and k^2 E2 > b  (E2 > 0 always)
    double klo2 = b > 0.0 ? b / e.E2 : 0.0;
    double khi2 = std::numeric_limits<double>::infinity();
    if (e.E1 > 0.0) {
        if (!(a > 0.0)) throw Infeasible("a <= 0 but the scaled gap starts above 0");
        khi2 = a / e.E1;
    } else if (e.E1 < 0.0) {
        if (a <= 0.0) klo2 = std::max(klo2, a / e.E1);
    } else if (!(a > 0.0)) {
        throw Infeasible("E1 = 0 requires a > 0");
    }
    if (khi2 <= klo2) throw Infeasible("no scale factor fits the requested window");

    const double grain = 1.01;
    auto admissible = [&](double k) {
        const double k2 = k * k;
        return k2 * e.E1 < a && k2 * e.E2 > b && k2 < khi2 * (1.0 + 1e-14);
    };

    double k = 0.0;
    if (klo2 > 0.0) {
        const double kmin = std::sqrt(klo2);
        for (int j = 1; j <= 10000; ++j) {
            const double cand = kmin * std::pow(grain, j);
            if (cand * cand >= khi2) throw Infeasible("1% grid skips the feasible window");
            if (admissible(cand)) {
                k = cand;
                break;
            }
        }
    } else if (std::isinf(khi2)) {
        k = 1.0;  // unconstrained; keep the base scale
    } else {
        const double kmax = std::sqrt(khi2);
        for (int j = 1; j <= 10000; ++j) {
            const double cand = kmax / std::pow(grain, j);
            if (admissible(cand)) {
                k = cand;
                break;
            }
        }
    }
    if (k == 0.0) throw Infeasible("no admissible scale factor found");
    return {k, scale_model(base, k)};
}

}  // namespace bandgap::pointspec

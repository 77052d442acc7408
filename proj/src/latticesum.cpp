#include "bandgap/latticesum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bandgap/errors.hpp"

namespace bandgap::latticesum {

namespace {

constexpr double pi = std::numbers::pi;

// 32-point Gauss-Legendre nodes/weights on [-1, 1] (positive half; symmetric)
constexpr int gauss_n = 16;
constexpr double gauss_x[gauss_n] = {
    0.0483076656877383162348126, 0.1444719615827964934851864,
    0.2392873622521370745446032, 0.3318686022821276497799168,
    0.4213512761306353453641194, 0.5068999089322293900237475,
    0.5877157572407623290407455, 0.6630442669302152009751152,
    0.7321821187402896803874267, 0.7944837959679424069630973,
    0.8493676137325699701336930, 0.8963211557660521239653072,
    0.9349060759377396891709191, 0.9647622555875064307738119,
    0.9856115115452683354001750, 0.9972638618494815635449811};
constexpr double gauss_w[gauss_n] = {
    0.0965400885147278005667648, 0.0956387200792748594190820,
    0.0938443990808045656391802, 0.0911738786957638847128686,
    0.0876520930044038111427715, 0.0833119242269467552221991,
    0.0781938957870703064717409, 0.0723457941088485062253994,
    0.0658222227763618468376501, 0.0586840934785355471452836,
    0.0509980592623761761961632, 0.0428358980222266806568786,
    0.0342738629130214331026877, 0.0253920653092620594557526,
    0.0162743947309056706051706, 0.0070186100094700966004071};

struct Estimate {
    double g;
    double dg;
};

// two integrals accumulated over the same nodes
struct Pair2 {
    double f = 0.0;
    double g = 0.0;
};

template <class F>
Pair2 quad16(const F& fn, double lo, double hi) {
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    Pair2 acc;
    for (int i = 0; i < gauss_n; ++i)
        for (double sign : {-1.0, 1.0}) {
            const Pair2 v = fn(mid + sign * half * gauss_x[i]);
            acc.f += gauss_w[i] * half * v.f;
            acc.g += gauss_w[i] * half * v.g;
        }
    return acc;
}

// bisect until the 16-point rule agrees with its refinement; tol is per test,
// not halved down the tree (a passing 16-point panel is far inside tol)
template <class F>
Pair2 adapt_pair(const F& fn, double lo, double hi, Pair2 whole, double tol,
                 int depth) {
    const double mid = 0.5 * (lo + hi);
    const Pair2 l = quad16(fn, lo, mid), r = quad16(fn, mid, hi);
    const Pair2 ref{l.f + r.f, l.g + r.g};
    const double diff = std::abs(ref.f - whole.f) + std::abs(ref.g - whole.g);
    if (diff < tol || depth <= 0) return ref;
    const Pair2 a = adapt_pair(fn, lo, mid, l, tol, depth - 1);
    const Pair2 b = adapt_pair(fn, mid, hi, r, tol, depth - 1);
    return {a.f + b.f, a.g + b.g};
}

// Heat-kernel tail of the direct-lattice term and its E-derivative,
//   I(xi)  = int_0^a exp(E t - xi^2/4t) dt/t,
//   I'(xi) = int_0^a exp(E t - xi^2/4t) dt,
// in the variable u = xi^2/4t:
//   I = int_w^inf exp(-u + beta/u) du/u,  I' = (xi^2/4) int_w^inf ... du/u^2,
// with w = xi^2/4a, beta = E xi^2/4.  The exponent peaks at
// u* = max(w, sqrt(-beta)) and afterwards decays at least like exp(-c u).
Pair2 heat_tail(double w, double beta, double xi2) {
    const double ustar = (beta < 0.0 && -beta > w * w) ? std::sqrt(-beta) : w;
    const double hmax = -ustar + beta / ustar;
    if (hmax < -700.0) return {0.0, 0.0};  // underflows: deep negative E
    // past u* the exponent decays at rate >= 1 for beta >= 0, slower otherwise
    const double hi = ustar + (beta < 0.0 ? 190.0 : 60.0);
    const auto fn = [beta, hmax](double u) -> Pair2 {
        const double e = std::exp(-u + beta / u - hmax);
        return {e / u, e / (u * u)};
    };
    const double scale = std::exp(hmax);
    Pair2 v = adapt_pair(fn, w, hi, quad16(fn, w, hi), 1e-15, 40);
    return {scale * v.f, scale * v.g * 0.25 * xi2};
}

// Gaussian-split evaluation of the integrated density of states remainder,
//   g = S_dual + S_direct + g0,
// with split scale a (Gaussian width 1/sqrt(4a) in the dual variable):
//   S_dual   = (|BZ|/4pi^2) sum_x exp(-a(|x+theta|^2-E)) / (|x+theta|^2-E),
//   S_direct = (1/4pi) sum_{xi != 0} cos(theta.xi) I(xi),
//   4pi g0   = Ei(aE) - ln|E|   (E != 0; gamma + ln a at E = 0),
// everything converging like exp(-a q^2) resp. exp(-|xi|^2/4a).  The value is
// independent of a; a is capped at 6/E for large positive E so that no
// intermediate term exceeds e^6 (the split cancels exponentials otherwise).
Estimate ewald_estimate(double E, Vec2 theta, const GFunEvaluator& ev) {
    const geometry::Lattice& lat = ev.lattice;
    const double bz = lat.bz_area;
    const double cell_area = 4.0 * pi * pi / bz;
    double a = cell_area / (4.0 * pi);
    if (E > 0.0 && a * E > 6.0) a = 6.0 / E;
    const double L = std::max(34.0, -std::log(ev.tolerance)) + 18.0;

    // dual sum over |x + theta| <= qmax, where terms fall below exp(-L)
    const double q2max = std::max(E, 0.0) + L / a;
    const double qmax = std::sqrt(q2max);
    if (qmax > ev.max_radius)
        throw NoConvergence("g(E, theta): dual cutoff exceeds radius cap", 0.0, 0.0);
    const Vec2 b1 = lat.b1, b2 = lat.b2;
    const double det = cross(b1, b2);
    const Vec2 c{cross(-theta, b2) / det, cross(b1, -theta) / det};
    const double m1 = qmax * norm(b2) / std::abs(det);
    const double m2 = qmax * norm(b1) / std::abs(det);
    const long n1_lo = long(std::floor(c.x - m1)) - 1, n1_hi = long(std::ceil(c.x + m1)) + 1;
    const long n2_lo = long(std::floor(c.y - m2)) - 1, n2_hi = long(std::ceil(c.y + m2)) + 1;

    double s1 = 0.0, ds1 = 0.0;
    for (long n1 = n1_lo; n1 <= n1_hi; ++n1)
        for (long n2 = n2_lo; n2 <= n2_hi; ++n2) {
            const Vec2 x{n1 * b1.x + n2 * b2.x + theta.x,
                         n1 * b1.y + n2 * b2.y + theta.y};
            const double q2 = norm2(x);
            if (q2 > q2max) continue;
            const double s = q2 - E;
            if (std::abs(s) < 1e-10)
                throw NearPole("g(E, theta): E within 1e-10 of a resolvent pole");
            const double t = std::exp(-a * s);
            s1 += t / s;
            ds1 += t * (a / s + 1.0 / (s * s));
        }
    const double inv4pi2 = bz / (4.0 * pi * pi);
    s1 *= inv4pi2;
    ds1 *= inv4pi2;

    // direct sum over 0 < |xi| <= ximax, where the heat tails fall below exp(-L)
    const double xi2max = 4.0 * a * (L + a * std::max(E, 0.0));
    const double ximax = std::sqrt(xi2max);
    const Vec2 a1 = lat.a1, a2 = lat.a2;
    const double det_a = cross(a1, a2);
    const double k1 = ximax * norm(a2) / std::abs(det_a);
    const double k2 = ximax * norm(a1) / std::abs(det_a);
    const long p1 = long(std::ceil(k1)) + 1, p2 = long(std::ceil(k2)) + 1;

    double s2 = 0.0, ds2 = 0.0;
    for (long u1 = -p1; u1 <= p1; ++u1)
        for (long u2 = -p2; u2 <= p2; ++u2) {
            if (u1 == 0 && u2 == 0) continue;
            const Vec2 xi{u1 * a1.x + u2 * a2.x, u1 * a1.y + u2 * a2.y};
            const double xi2 = norm2(xi);
            if (xi2 > xi2max) continue;
            const Pair2 tail = heat_tail(xi2 / (4.0 * a), 0.25 * E * xi2, xi2);
            const double co = std::cos(theta.x * xi.x + theta.y * xi.y);
            s2 += co * tail.f;
            ds2 += co * tail.g;
        }
    s2 /= 4.0 * pi;
    ds2 /= 4.0 * pi;

    // split-scale remainder; the series branch cancels ln|E| exactly
    const double x = a * E;
    double g0, dg0;
    if (std::abs(x) < 0.125) {
        double term = 1.0, sum = 0.0;
        double termd = 1.0, sumd = 1.0;
        for (int k = 1; k < 40; ++k) {
            term *= x / k;
            sum += term / k;
            termd *= x / (k + 1);
            sumd += termd;
            if (std::abs(term) < 1e-18) break;
        }
        g0 = (specfun::euler_gamma + std::log(a) + sum) / (4.0 * pi);
        dg0 = a * sumd / (4.0 * pi);
    } else {
        g0 = (std::expint(x) - std::log(std::abs(E))) / (4.0 * pi);
        dg0 = std::expm1(x) / (4.0 * pi * E);
    }

    return {s1 + s2 + g0, ds1 + ds2 + dg0};
}

}  // namespace

GFunEvaluator::GFunEvaluator(geometry::Lattice lat, double tol, double cap)
    : lattice(lat), tolerance(tol), max_radius(cap) {
    if (!(tol > 0.0)) throw InvalidInput("GFunEvaluator: tolerance must be positive");
}

double g_lattice(double E, Vec2 theta, const GFunEvaluator& ev) {
    return ewald_estimate(E, theta, ev).g;
}

double dg_dE(double E, Vec2 theta, const GFunEvaluator& ev) {
    return ewald_estimate(E, theta, ev).dg;
}

GPair g_with_derivative(double E, Vec2 theta, const GFunEvaluator& ev) {
    const Estimate est = ewald_estimate(E, theta, ev);
    return {est.g, est.dg};
}

QMatrix q_matrix(double alpha, const geometry::Lattice& lattice,
                 const specfun::SpectralParameter& nu, int M) {
    if (nu.nu.imag() == 0.0) throw InvalidInput("q_matrix requires Im nu != 0");
    if (M < 0) throw InvalidInput("q_matrix: M must be >= 0");

    const Complex diag =
        alpha - (specfun::euler_gamma - specfun::log_sqrtnu_over_2i(nu)) / (2.0 * pi);

    const int w = 2 * M + 1;
    // kernel values on the difference lattice, d = (p1, p2), |p_i| <= 2M
    const int dw = 4 * M + 1;
    Eigen::MatrixXcd ker(dw, dw);
    for (int d1 = -2 * M; d1 <= 2 * M; ++d1)
        for (int d2 = -2 * M; d2 <= 2 * M; ++d2) {
            const Vec2 y = double(d1) * lattice.a1 + double(d2) * lattice.a2;
            ker(d1 + 2 * M, d2 + 2 * M) = specfun::green_regularized(y, nu);
        }

    QMatrix q;
    q.alpha = alpha;
    q.lattice = lattice;
    q.nu = nu.nu;
    q.truncation_index = M;
    q.entries.resize(w * w, w * w);
    for (int m1 = -M; m1 <= M; ++m1)
        for (int m2 = -M; m2 <= M; ++m2) {
            const int row = (m1 + M) * w + (m2 + M);
            for (int l1 = -M; l1 <= M; ++l1)
                for (int l2 = -M; l2 <= M; ++l2) {
                    const int col = (l1 + M) * w + (l2 + M);
                    Complex v = -ker(m1 - l1 + 2 * M, m2 - l2 + 2 * M);
                    if (row == col) v += diag;
                    q.entries(row, col) = v;
                }
        }
    return q;
}

int q_truncation_index(const geometry::Lattice& lattice,
                       const specfun::SpectralParameter& nu, double tol) {
    if (!(tol > 0.0)) throw InvalidInput("q_truncation_index: tol must be positive");
    const double decay = nu.sqrt_nu.imag();  // Re mu
    if (!(decay > 0.0)) throw InvalidInput("q_truncation_index: kernel does not decay");
    const double amin = geometry::min_center_distance(lattice, {Vec2{0.0, 0.0}});
    const double c = 20.0 / (decay * amin) / (decay * amin);
    for (int m = 1; m < 512; ++m) {
        if (c * m * std::exp(-decay * amin * m) < tol) return m;
    }
    return 512;
}

}  // namespace bandgap::latticesum

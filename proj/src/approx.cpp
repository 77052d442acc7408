#include "bandgap/approx.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include <Eigen/LU>

#include "bandgap/design.hpp"
#include "bandgap/errors.hpp"
#include "bandgap/parallel.hpp"
#include "bandgap/specfun.hpp"

namespace bandgap::approx {

namespace {

constexpr double pi = std::numbers::pi;
using specfun::SpectralParameter;

struct GaussRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

// Golub-free Newton iteration on the Legendre recurrence.
GaussRule gauss_legendre(int n) {
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[n - 1 - i] = x;
        rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

// 16-point Gauss on [a, b].
Complex gauss16(const std::function<Complex(double)>& f, double a, double b) {
    static const GaussRule rule = gauss_legendre(16);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    Complex acc = 0.0;
    for (int i = 0; i < 16; ++i) acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return acc * half;
}

Complex integrate_adaptive(const std::function<Complex(double)>& f, double a, double b,
                           double tol, int depth = 0) {
    Complex whole = gauss16(f, a, b);
    double m = 0.5 * (a + b);
    Complex split = gauss16(f, a, m) + gauss16(f, m, b);
    if (std::abs(whole - split) <= tol || depth >= 48) return split;
    return integrate_adaptive(f, a, m, 0.5 * tol, depth + 1) +
           integrate_adaptive(f, m, b, 0.5 * tol, depth + 1);
}

double mu_weight(const FiniteCrystal& fc, std::size_t cls) {
    const double x = 1.0 / std::abs(std::log(fc.r));
    const double area = fc.shape.area();
    return 2.0 * pi * x / (fc.lambdas[cls] * area) + fc.coefficients[cls] * x * x;
}

// degree-5 rule on a reference triangle, 7 points
struct TriPoint {
    double l1, l2, w;
};
constexpr TriPoint kTriRule[7] = {
    {1.0 / 3.0, 1.0 / 3.0, 0.225},
    {0.47014206410511508, 0.47014206410511508, 0.13239415278850618},
    {0.47014206410511508, 0.05971587178976983, 0.13239415278850618},
    {0.05971587178976983, 0.47014206410511508, 0.13239415278850618},
    {0.10128650732345634, 0.10128650732345634, 0.12593918054482716},
    {0.10128650732345634, 0.79742698535308731, 0.12593918054482716},
    {0.79742698535308731, 0.10128650732345634, 0.12593918054482716},
};

void fill_triangle(Vec2 a, Vec2 b, Vec2 c, int level, Quadrature& out) {
    if (level > 0) {
        Vec2 ab{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
        Vec2 bc{0.5 * (b.x + c.x), 0.5 * (b.y + c.y)};
        Vec2 ca{0.5 * (c.x + a.x), 0.5 * (c.y + a.y)};
        fill_triangle(a, ab, ca, level - 1, out);
        fill_triangle(ab, b, bc, level - 1, out);
        fill_triangle(ca, bc, c, level - 1, out);
        fill_triangle(ab, bc, ca, level - 1, out);
        return;
    }
    const double area =
        0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
    for (const auto& p : kTriRule) {
        const double l3 = 1.0 - p.l1 - p.l2;
        out.nodes.push_back({p.l1 * a.x + p.l2 * b.x + l3 * c.x,
                             p.l1 * a.y + p.l2 * b.y + l3 * c.y});
        out.weights.push_back(p.w * area);
    }
}

// exact integral over Omega of -(1/2pi) ln(scale |x - z|) dz at x
double log_moment(const geometry::InclusionShape& shape, Vec2 x, double scale) {
    return -(design::log_potential(shape, x) + shape.area() * std::log(scale)) /
           (2.0 * pi);
}

// Nystrom matrix of Xi -> int_Omega G_nu(scale (x_i - z)) Xi(z) dz on the
// quadrature nodes, with the log part of the diagonal integrated exactly.
Eigen::MatrixXcd green_block(const Quadrature& quad, const geometry::InclusionShape& shape,
                             const SpectralParameter& nu, double scale) {
    const std::size_t n = quad.nodes.size();
    Eigen::MatrixXcd G(n, n);
    const Complex limit = specfun::green_limit(nu);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 xi = quad.nodes[i];
        Complex diag = quad.weights[i] * limit + log_moment(shape, xi, scale);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Vec2 d{scale * (xi.x - quad.nodes[j].x), scale * (xi.y - quad.nodes[j].y)};
            G(i, j) = quad.weights[j] * specfun::green_free(d, nu);
            // add back the sampled log moment so the j-sum of the singular
            // part telescopes against the exact one
            diag += quad.weights[j] * std::log(scale * std::hypot(xi.x - quad.nodes[j].x,
                                                                  xi.y - quad.nodes[j].y)) /
                    (2.0 * pi);
        }
        G(i, i) = diag;
    }
    return G;
}

std::vector<double> stacked_weights(const BSOperators& ops) {
    const std::size_t m = ops.fc.centers.size(), nq = ops.quad.nodes.size();
    std::vector<double> w(m * nq);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < nq; ++j) w[k * nq + j] = ops.quad.weights[j];
    return w;
}

double weighted_norm(const Eigen::MatrixXcd& T, const std::vector<double>& w) {
    const auto n = T.rows();
    Eigen::MatrixXcd S = T;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double si = std::sqrt(w[static_cast<std::size_t>(i)]);
        S.row(i) *= si;
        S.col(i) /= si;
    }
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 / (1.0 + static_cast<double>(i));
    v.normalize();
    double sigma = 0.0;
    for (int it = 0; it < 1000; ++it) {
        Eigen::VectorXcd u = S * v;
        const double s = u.norm();
        v = S.adjoint() * u;
        const double vn = v.norm();
        if (vn == 0.0) return 0.0;
        v /= vn;
        if (it > 4 && std::abs(s - sigma) <= 1e-13 * std::max(1.0, s)) return s;
        sigma = s;
    }
    return sigma;
}

Complex free_resolvent_at(const Gaussian& f, const SpectralParameter& nu, Vec2 x);

std::vector<std::size_t> block_offsets(std::size_t m, std::size_t nq) {
    std::vector<std::size_t> off(m);
    for (std::size_t k = 0; k < m; ++k) off[k] = k * nq;
    return off;
}

}  // namespace

FiniteCrystal finite_crystal(const geometry::CrystalSpec& spec, std::size_t target,
                             int m_side) {
    if (target >= spec.lambdas.size())
        throw InvalidInput("finite_crystal: target class out of range");
    if (m_side < 1 || m_side % 2 == 0)
        throw InvalidInput("finite_crystal: m_side must be odd and positive");
    FiniteCrystal fc;
    fc.shape = spec.shape;
    fc.r = spec.r;
    fc.lambdas = {spec.lambdas[target]};
    fc.coefficients = {spec.coefficients[target]};
    const Vec2 base = spec.centers[target];  // physical coordinates
    const int s = (m_side - 1) / 2;
    for (int i = -s; i <= s; ++i)
        for (int j = -s; j <= s; ++j) {
            fc.centers.push_back({base.x + i * spec.lattice.a1.x + j * spec.lattice.a2.x,
                                  base.y + i * spec.lattice.a1.y + j * spec.lattice.a2.y});
            fc.classes.push_back(0);
        }
    return fc;
}

void validate_finite_crystal(const FiniteCrystal& fc) {
    if (fc.centers.empty()) throw InvalidInput("finite crystal: no centers");
    if (fc.classes.size() != fc.centers.size())
        throw InvalidInput("finite crystal: classes/centers size mismatch");
    if (fc.lambdas.empty() || fc.lambdas.size() != fc.coefficients.size())
        throw InvalidInput("finite crystal: lambdas/coefficients size mismatch");
    for (double l : fc.lambdas)
        if (!(l > 0.0)) throw InvalidInput("finite crystal: targets must be positive");
    for (std::size_t c : fc.classes)
        if (c >= fc.lambdas.size()) throw InvalidInput("finite crystal: class out of range");
    if (!(fc.r > 0.0 && fc.r < 1.0))
        throw InvalidInput("finite crystal: r must lie in (0, 1)");
    if (!(fc.shape.area() > 0.0)) throw InvalidShape("finite crystal: empty shape");
    const double reach = 2.0 * fc.r * fc.shape.bounding_radius();
    for (std::size_t a = 0; a < fc.centers.size(); ++a)
        for (std::size_t b = a + 1; b < fc.centers.size(); ++b) {
            const double d = std::hypot(fc.centers[a].x - fc.centers[b].x,
                                        fc.centers[a].y - fc.centers[b].y);
            if (!(d > reach))
                throw InvalidInput("finite crystal: inclusions touch or overlap");
        }
}

double gaussian_value(const Gaussian& f, Vec2 x) {
    if (!(f.sigma > 0.0)) throw InvalidInput("gaussian: sigma must be positive");
    const double d2 = (x.x - f.center.x) * (x.x - f.center.x) +
                      (x.y - f.center.y) * (x.y - f.center.y);
    return std::exp(-0.5 * d2 / (f.sigma * f.sigma)) / (2.0 * pi * f.sigma * f.sigma);
}

namespace {

// (R0 f)(x) = (1/2pi) int_0^inf k exp(-s^2 k^2 / 2) J0(k d) / (k^2 - nu) dk
Complex free_resolvent_at(const Gaussian& f, const SpectralParameter& nu, Vec2 x) {
    const double s = f.sigma;
    const double d = std::hypot(x.x - f.center.x, x.y - f.center.y);
    const double kmax = 9.2 / s;
    const Complex nuv = nu.nu;
    auto integrand = [&](double k) -> Complex {
        return k * std::exp(-0.5 * s * s * k * k) * std::cyl_bessel_j(0.0, k * d) /
               (k * k - nuv);
    };
    // panel width tracks both the Gaussian decay scale and the J0 period
    const double h = std::min(2.0 / s, 6.0 / std::max(d, 1e-12));
    Complex acc = 0.0;
    double a = 0.0;
    while (a < kmax) {
        const double b = std::min(a + h, kmax);
        acc += integrate_adaptive(integrand, a, b, 1e-14);
        a = b;
    }
    return acc / (2.0 * pi);
}

}  // namespace

Complex gaussian_resolvent(const Gaussian& f, Complex nu, Vec2 x) {
    if (!(f.sigma > 0.0)) throw InvalidInput("gaussian: sigma must be positive");
    SpectralParameter sp(nu);
    return free_resolvent_at(f, sp, x);
}

Quadrature shape_quadrature(const geometry::InclusionShape& shape, int order) {
    if (order < 2) throw InvalidInput("shape_quadrature: order must be at least 2");
    Quadrature quad;
    if (shape.kind == geometry::InclusionShape::Kind::disk) {
        const double R = shape.radius;
        const int nr = order;
        const int nphi = 2 * order + 8;
        const GaussRule radial = gauss_legendre(nr);
        for (int a = 0; a < nr; ++a) {
            const double t = 0.5 * (radial.nodes[a] + 1.0);  // (0, 1)
            const double wt = 0.5 * radial.weights[a];
            const double rho = R * t;
            for (int b = 0; b < nphi; ++b) {
                const double phi = 2.0 * pi * (b + 0.5) / nphi;
                quad.nodes.push_back({rho * std::cos(phi), rho * std::sin(phi)});
                quad.weights.push_back(R * R * t * wt * 2.0 * pi / nphi);
            }
        }
        return quad;
    }
    const auto& v = shape.vertices;
    const std::size_t n = v.size();
    // convexity: the fan from the centroid must stay inside
    double cx = 0.0, cy = 0.0;
    for (const auto& p : v) {
        cx += p.x;
        cy += p.y;
    }
    Vec2 cen{cx / n, cy / n};
    for (std::size_t a = 0; a < n; ++a) {
        const Vec2 p = v[a], q = v[(a + 1) % n], s = v[(a + 2) % n];
        const double cr = (q.x - p.x) * (s.y - q.y) - (q.y - p.y) * (s.x - q.x);
        if (cr <= 0.0)
            throw InvalidShape("shape_quadrature: polygon must be convex, CCW");
    }
    const int target = order * (2 * order + 8);
    int level = 0;
    while (static_cast<int>(n) * 7 * (1 << (2 * level)) < target && level < 5) ++level;
    for (std::size_t a = 0; a < n; ++a)
        fill_triangle(cen, v[a], v[(a + 1) % n], level, quad);
    return quad;
}

BSOperators assemble_bs(const FiniteCrystal& fc, Complex nu, int order) {
    validate_finite_crystal(fc);
    if (nu.imag() == 0.0)
        throw InvalidInput("assemble_bs: nu must have nonzero imaginary part");
    SpectralParameter sp(nu);
    BSOperators ops;
    ops.fc = fc;
    ops.nu = nu;
    ops.quad = shape_quadrature(fc.shape, order);
    const std::size_t m = fc.centers.size(), nq = ops.quad.nodes.size();
    ops.mu.resize(m);
    for (std::size_t k = 0; k < m; ++k) ops.mu[k] = mu_weight(fc, fc.classes[k]);

    const Eigen::MatrixXcd G = green_block(ops.quad, fc.shape, sp, fc.r);
    const std::size_t N = m * nq;
    ops.B = Eigen::MatrixXcd::Zero(N, N);
    ops.C = Eigen::MatrixXcd::Zero(N, N);
    const auto off = block_offsets(m, nq);
    for (std::size_t k = 0; k < m; ++k)
        ops.B.block(off[k], off[k], nq, nq) = ops.mu[k] * G;
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t l = 0; l < m; ++l) {
            if (l == k) continue;
            const Vec2 dy{fc.centers[k].x - fc.centers[l].x,
                          fc.centers[k].y - fc.centers[l].y};
            for (std::size_t i = 0; i < nq; ++i)
                for (std::size_t j = 0; j < nq; ++j) {
                    const Vec2 d{fc.r * (ops.quad.nodes[i].x - ops.quad.nodes[j].x) + dy.x,
                                 fc.r * (ops.quad.nodes[i].y - ops.quad.nodes[j].y) + dy.y};
                    ops.C(off[k] + i, off[l] + j) =
                        ops.quad.weights[j] * specfun::green_free(d, sp);
                }
        }
    return ops;
}

Eigen::MatrixXcd f_r_matrix(const BSOperators& ops, double lambda) {
    const std::size_t m = ops.fc.centers.size(), nq = ops.quad.nodes.size();
    const std::size_t N = m * nq;
    Eigen::MatrixXcd F = Eigen::MatrixXcd::Zero(N, N);
    if (lambda == 0.0) return F;
    const auto off = block_offsets(m, nq);
    for (std::size_t k = 0; k < m; ++k) {
        Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(nq, nq) -
                             lambda * ops.B.block(off[k], off[k], nq, nq);
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(A);
        if (!lu.isInvertible())
            throw SolverFailure("f_r_matrix: 1 - lambda B is singular at this nu");
        F.block(off[k], off[k], nq, nq) =
            lu.solve(Eigen::MatrixXcd::Identity(nq, nq) * (lambda * ops.mu[k]));
    }
    return F;
}

double op_norm(const Eigen::MatrixXcd& T, const BSOperators& ops) {
    return weighted_norm(T, stacked_weights(ops));
}

std::vector<Complex> bs_resolvent_apply(const BSOperators& ops, double lambda,
                                        const Gaussian& f,
                                        const std::vector<Vec2>& eval_pts) {
    SpectralParameter sp(ops.nu);
    const std::size_t m = ops.fc.centers.size(), nq = ops.quad.nodes.size();
    const std::size_t N = m * nq;
    const Eigen::MatrixXcd F = f_r_matrix(ops, lambda);
    const Eigen::MatrixXcd FC = F * ops.C;
    const double norm_fc = weighted_norm(FC, stacked_weights(ops));
    if (!(norm_fc < 1.0))
        throw NotContractive("bs_resolvent_apply: ||F C|| = " + std::to_string(norm_fc) +
                             " >= 1");
    Eigen::VectorXcd e(N);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t i = 0; i < nq; ++i)
            e(k * nq + i) = free_resolvent_at(
                f, sp,
                {ops.fc.centers[k].x + ops.fc.r * ops.quad.nodes[i].x,
                 ops.fc.centers[k].y + ops.fc.r * ops.quad.nodes[i].y});
    const Eigen::VectorXcd phi =
        (Eigen::MatrixXcd::Identity(N, N) - FC).partialPivLu().solve(F * e);

    std::vector<Complex> out(eval_pts.size());
    for (std::size_t p = 0; p < eval_pts.size(); ++p) {
        Complex u = free_resolvent_at(f, sp, eval_pts[p]);
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t j = 0; j < nq; ++j) {
                const Vec2 d{eval_pts[p].x - ops.fc.centers[k].x - ops.fc.r * ops.quad.nodes[j].x,
                             eval_pts[p].y - ops.fc.centers[k].y - ops.fc.r * ops.quad.nodes[j].y};
                u += ops.quad.weights[j] * specfun::green_free(d, sp) * phi(k * nq + j);
            }
        out[p] = u;
    }
    return out;
}

std::vector<Complex> direct_bs_apply(const FiniteCrystal& fc, Complex nu, double lambda,
                                     const Gaussian& f, const std::vector<Vec2>& eval_pts,
                                     int order) {
    validate_finite_crystal(fc);
    SpectralParameter sp(nu);
    const Quadrature quad = shape_quadrature(fc.shape, order);
    const std::size_t m = fc.centers.size(), nq = quad.nodes.size();
    const std::size_t N = m * nq;

    // physical nodes, weights and symmetric factors u = v = sqrt(w - 1)
    std::vector<Vec2> X(N);
    std::vector<double> W(N);
    std::vector<Complex> s(N);
    for (std::size_t k = 0; k < m; ++k) {
        const Complex sk = std::sqrt(Complex(mu_weight(fc, fc.classes[k]))) / fc.r;
        for (std::size_t i = 0; i < nq; ++i) {
            X[k * nq + i] = {fc.centers[k].x + fc.r * quad.nodes[i].x,
                             fc.centers[k].y + fc.r * quad.nodes[i].y};
            W[k * nq + i] = fc.r * fc.r * quad.weights[i];
            s[k * nq + i] = sk;
        }
    }

    const Complex limit = specfun::green_limit(sp);
    Eigen::MatrixXcd K(N, N);
    for (std::size_t a = 0; a < N; ++a) {
        const std::size_t ka = a / nq;
        Complex diag = W[a] * limit +
                       fc.r * fc.r * log_moment(fc.shape, quad.nodes[a % nq], fc.r);
        for (std::size_t b = 0; b < N; ++b) {
            if (b == a) continue;
            const Vec2 d{X[a].x - X[b].x, X[a].y - X[b].y};
            K(a, b) = s[a] * s[b] * W[b] * specfun::green_free(d, sp);
            if (b / nq == ka)
                diag += W[b] * std::log(std::hypot(d.x, d.y)) / (2.0 * pi);
        }
        K(a, a) = s[a] * s[a] * diag;
    }

    Eigen::VectorXcd rhs(N);
    for (std::size_t a = 0; a < N; ++a) rhs(a) = s[a] * free_resolvent_at(f, sp, X[a]);
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(Eigen::MatrixXcd::Identity(N, N) - lambda * K);
    if (!lu.isInvertible())
        throw SolverFailure("direct_bs_apply: 1 - lambda u R0 v is singular");
    const Eigen::VectorXcd beta = lu.solve(rhs);

    std::vector<Complex> out(eval_pts.size());
    for (std::size_t p = 0; p < eval_pts.size(); ++p) {
        Complex u = free_resolvent_at(f, sp, eval_pts[p]);
        for (std::size_t a = 0; a < N; ++a) {
            const Vec2 d{eval_pts[p].x - X[a].x, eval_pts[p].y - X[a].y};
            u += lambda * W[a] * specfun::green_free(d, sp) * s[a] * beta(a);
        }
        out[p] = u;
    }
    return out;
}

Complex f_limit(std::size_t cls, Complex nu, double lambda, const FiniteCrystal& fc) {
    if (cls >= fc.lambdas.size()) throw InvalidInput("f_limit: class out of range");
    SpectralParameter sp(nu);
    const double ln = fc.lambdas[cls];
    if (std::abs(lambda - ln) > 1e-12 * std::max(1.0, std::abs(ln))) return {0.0, 0.0};
    const double area = fc.shape.area();
    const double alpha = design::alpha_from_coupling(fc.coefficients[cls], ln, fc.shape);
    const Complex denom =
        specfun::log_sqrtnu_over_2i(sp) - specfun::euler_gamma + 2.0 * pi * alpha;
    if (std::abs(denom) < 1e-12)
        throw NearResonance("f_limit: ln(sqrt(nu)/2i) - gamma + 2 pi alpha vanishes");
    return 2.0 * pi / denom / (area * area);
}

std::vector<Complex> pi_resolvent_apply(const std::vector<Vec2>& centers,
                                        const std::vector<double>& alphas, Complex nu,
                                        const Gaussian& f,
                                        const std::vector<Vec2>& eval_pts,
                                        double* cond) {
    if (centers.empty()) throw InvalidInput("pi_resolvent_apply: no centers");
    if (alphas.size() != centers.size())
        throw InvalidInput("pi_resolvent_apply: alphas/centers size mismatch");
    SpectralParameter sp(nu);
    const std::size_t m = centers.size();
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b)
            if (centers[a].x == centers[b].x && centers[a].y == centers[b].y)
                throw InvalidInput("pi_resolvent_apply: duplicate centers");

    const Complex diag_shift =
        (specfun::log_sqrtnu_over_2i(sp) - specfun::euler_gamma) / (2.0 * pi);
    Eigen::MatrixXcd Q(m, m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
            if (a == b) {
                Q(a, b) = alphas[a] + diag_shift;
            } else {
                const Vec2 d{centers[a].x - centers[b].x, centers[a].y - centers[b].y};
                Q(a, b) = -specfun::green_free(d, sp);
            }
        }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(Q);
    if (!lu.isInvertible()) throw SingularQ("pi_resolvent_apply: Q matrix is singular");
    if (cond != nullptr) {
        const Eigen::MatrixXcd Qinv = lu.inverse();
        *cond = Q.cwiseAbs().colwise().sum().maxCoeff() *
                Qinv.cwiseAbs().colwise().sum().maxCoeff();
    }
    Eigen::VectorXcd rhs(m);
    for (std::size_t a = 0; a < m; ++a) rhs(a) = free_resolvent_at(f, sp, centers[a]);
    const Eigen::VectorXcd coef = lu.solve(rhs);

    std::vector<Complex> out(eval_pts.size());
    for (std::size_t p = 0; p < eval_pts.size(); ++p) {
        Complex u = free_resolvent_at(f, sp, eval_pts[p]);
        for (std::size_t a = 0; a < m; ++a) {
            const Vec2 d{eval_pts[p].x - centers[a].x, eval_pts[p].y - centers[a].y};
            u += coef(a) * specfun::green_free(d, sp);
        }
        out[p] = u;
    }
    return out;
}

namespace {

struct Fit {
    double kappa = 0.0;
    double residual = 0.0;
};

Fit fit_through_origin(const std::vector<double>& x, const std::vector<double>& e) {
    double sxx = 0.0, sxe = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += x[i] * x[i];
        sxe += x[i] * e[i];
    }
    Fit fit;
    fit.kappa = sxx > 0.0 ? sxe / sxx : 0.0;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = e[i] - fit.kappa * x[i];
        ss += d * d;
    }
    fit.residual = std::sqrt(ss / x.size());
    return fit;
}

}  // namespace

ConvergenceStudy convergence_study(const geometry::CrystalSpec& spec, std::size_t target,
                                   Complex nu, const std::vector<double>& r_list,
                                   const Gaussian& f, int m_side, int order, int jobs) {
    if (r_list.empty()) throw InvalidInput("convergence_study: empty r list");
    for (std::size_t i = 0; i + 1 < r_list.size(); ++i)
        if (!(r_list[i] > r_list[i + 1]))
            throw InvalidInput("convergence_study: r list must be strictly decreasing");
    const double rmax = design::r_max(spec);
    for (double r : r_list)
        if (!(r > 0.0 && r < rmax))
            throw InvalidInput("convergence_study: every r must lie in (0, r_max)");

    FiniteCrystal proto = finite_crystal(spec, target, m_side);
    const double lambda = proto.lambdas[0];
    const double alpha =
        design::alpha_from_coupling(proto.coefficients[0], lambda, proto.shape);
    SpectralParameter sp(nu);

    // fixed evaluation grid: two rings clear of every inclusion
    Vec2 mean{0.0, 0.0};
    double extent = 0.0;
    for (const auto& c : proto.centers) {
        mean.x += c.x;
        mean.y += c.y;
    }
    mean.x /= proto.centers.size();
    mean.y /= proto.centers.size();
    for (const auto& c : proto.centers)
        extent = std::max(extent, std::hypot(c.x - mean.x, c.y - mean.y));
    std::vector<Vec2> eval_pts;
    for (int a = 0; a < 16; ++a) {
        const double phi = 2.0 * pi * (a + 0.5) / 16;
        eval_pts.push_back({mean.x + (extent + 0.7) * std::cos(phi),
                            mean.y + (extent + 0.7) * std::sin(phi)});
    }
    for (int a = 0; a < 12; ++a) {
        const double phi = 2.0 * pi * (a + 0.25) / 12;
        eval_pts.push_back({mean.x + (extent + 2.2) * std::cos(phi),
                            mean.y + (extent + 2.2) * std::sin(phi)});
    }

    const std::vector<double> alphas(proto.centers.size(), alpha);
    const std::vector<Complex> u_pi =
        pi_resolvent_apply(proto.centers, alphas, nu, f, eval_pts);
    const Complex q_over_area2 = f_limit(0, nu, lambda, proto);

    ConvergenceStudy study;
    study.rows.resize(r_list.size());
    parallel::parallel_for(r_list.size(), jobs, [&](std::size_t idx) {
        FiniteCrystal fc = proto;
        fc.r = r_list[idx];
        BSOperators ops = assemble_bs(fc, nu, order);
        const std::vector<Complex> u_bs = bs_resolvent_apply(ops, lambda, f, eval_pts);
        double ss = 0.0;
        for (std::size_t p = 0; p < eval_pts.size(); ++p) {
            const Complex d = u_bs[p] - u_pi[p];
            ss += std::norm(d);
        }
        ConvergenceRow row;
        row.r = fc.r;
        row.inv_log_r = 1.0 / std::abs(std::log(fc.r));
        row.resolvent_error = std::sqrt(ss / eval_pts.size());

        const std::size_t m = fc.centers.size(), nq = ops.quad.nodes.size();
        const std::size_t N = m * nq;
        Eigen::MatrixXcd F0 = Eigen::MatrixXcd::Zero(N, N);
        Eigen::MatrixXcd C0 = Eigen::MatrixXcd::Zero(N, N);
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t i = 0; i < nq; ++i)
                for (std::size_t j = 0; j < nq; ++j)
                    F0(k * nq + i, k * nq + j) = q_over_area2 * ops.quad.weights[j];
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t l = 0; l < m; ++l) {
                if (l == k) continue;
                const Vec2 d{fc.centers[k].x - fc.centers[l].x,
                             fc.centers[k].y - fc.centers[l].y};
                const Complex g = specfun::green_free(d, sp);
                for (std::size_t i = 0; i < nq; ++i)
                    for (std::size_t j = 0; j < nq; ++j)
                        C0(k * nq + i, l * nq + j) = g * ops.quad.weights[j];
            }
        row.F_error = op_norm(f_r_matrix(ops, lambda) - F0, ops);
        row.C_error = op_norm(ops.C - C0, ops);
        study.rows[idx] = row;
    });

    std::vector<double> xs_log, xs_r, xs_sqrt, es;
    for (const auto& row : study.rows) {
        xs_log.push_back(row.inv_log_r);
        xs_r.push_back(row.r);
        xs_sqrt.push_back(std::sqrt(row.r));
        es.push_back(row.resolvent_error);
    }
    const Fit flog = fit_through_origin(xs_log, es);
    study.kappa = flog.kappa;
    study.residual_log = flog.residual;
    study.residual_r = fit_through_origin(xs_r, es).residual;
    study.residual_sqrt = fit_through_origin(xs_sqrt, es).residual;
    return study;
}

}  // namespace bandgap::approx

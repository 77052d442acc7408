#include "bandgap/bloch.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "bandgap/design.hpp"
#include "bandgap/errors.hpp"
#include "bandgap/parallel.hpp"

namespace bandgap::bloch {

namespace {

constexpr double kPi = std::numbers::pi;
using Complex = std::complex<double>;
using MatrixXcd = Eigen::MatrixXcd;
using VectorXd = Eigen::VectorXd;

// ---- exact cut-cell areas ------------------------------------------------

// signed angle from p to q as seen from the origin, in (-pi, pi]; a straight
// segment never subtends more than pi, so the wrap is safe per sub-segment
double arc_area(Vec2 p, Vec2 q, double R) {
    return 0.5 * R * R * std::atan2(cross(p, q), dot(p, q));
}

// contribution of the directed edge a -> b (circle-frame coordinates) to the
// intersection area of the circle |x| <= R with a CCW polygon
double circle_edge_term(Vec2 a, Vec2 b, double R) {
    const bool in_a = norm2(a) <= R * R;
    const bool in_b = norm2(b) <= R * R;
    if (in_a && in_b) return 0.5 * cross(a, b);
    const Vec2 d{b.x - a.x, b.y - a.y};
    const double A = norm2(d);
    if (A == 0.0) return 0.0;
    const double B = 2.0 * dot(a, d);
    const double C = norm2(a) - R * R;
    const double disc = B * B - 4.0 * A * C;
    if (disc <= 0.0) return arc_area(a, b, R);
    const double sq = std::sqrt(disc);
    double t1 = (-B - sq) / (2.0 * A);
    double t2 = (-B + sq) / (2.0 * A);
    t1 = std::max(t1, 0.0);
    t2 = std::min(t2, 1.0);
    if (t1 >= t2) return arc_area(a, b, R);
    const Vec2 p1{a.x + t1 * d.x, a.y + t1 * d.y};
    const Vec2 p2{a.x + t2 * d.x, a.y + t2 * d.y};
    double area = 0.5 * cross(p1, p2);
    if (t1 > 0.0) area += arc_area(a, p1, R);
    if (t2 < 1.0) area += arc_area(p2, b, R);
    return area;
}

// exact area of circle(center, R) intersected with a simple polygon
double circle_poly_area(Vec2 center, double R, const std::vector<Vec2>& poly) {
    double area = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a{poly[i].x - center.x, poly[i].y - center.y};
        const Vec2 b{poly[(i + 1) % n].x - center.x, poly[(i + 1) % n].y - center.y};
        area += circle_edge_term(a, b, R);
    }
    return std::abs(area);
}

// Sutherland-Hodgman clip of a polygon against an axis-aligned box
double clipped_poly_area(std::vector<Vec2> poly, double x0, double x1, double y0,
                         double y1) {
    auto clip = [](const std::vector<Vec2>& in, auto inside, auto intersect) {
        std::vector<Vec2> out;
        const std::size_t n = in.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 cur = in[i];
            const Vec2 nxt = in[(i + 1) % n];
            const bool cin = inside(cur);
            const bool nin = inside(nxt);
            if (cin) out.push_back(cur);
            if (cin != nin) out.push_back(intersect(cur, nxt));
        }
        return out;
    };
    auto cut_x = [&](double bound, int sign) {
        poly = clip(
            poly, [=](Vec2 p) { return sign * (p.x - bound) <= 0.0; },
            [=](Vec2 a, Vec2 b) {
                const double t = (bound - a.x) / (b.x - a.x);
                return Vec2{bound, a.y + t * (b.y - a.y)};
            });
    };
    auto cut_y = [&](double bound, int sign) {
        poly = clip(
            poly, [=](Vec2 p) { return sign * (p.y - bound) <= 0.0; },
            [=](Vec2 a, Vec2 b) {
                const double t = (bound - a.y) / (b.y - a.y);
                return Vec2{a.x + t * (b.x - a.x), bound};
            });
    };
    cut_x(x0, -1);
    if (poly.empty()) return 0.0;
    cut_x(x1, +1);
    if (poly.empty()) return 0.0;
    cut_y(y0, -1);
    if (poly.empty()) return 0.0;
    cut_y(y1, +1);
    if (poly.size() < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i)
        twice += cross(poly[i], poly[(i + 1) % poly.size()]);
    return 0.5 * std::abs(twice);
}

std::shared_ptr<const Mesh> build_mesh_impl(const geometry::CrystalSpec& spec, double r,
                                            int n, bool enforce_resolution) {
    if (n < 4) throw InvalidInput("mesh resolution must be at least 4");
    auto mesh = std::make_shared<Mesh>();
    mesh->n = n;
    mesh->lattice = spec.lattice;
    mesh->wm1.assign(static_cast<std::size_t>(n) * n, 0.0);
    mesh->winv.assign(static_cast<std::size_t>(n) * n, 1.0);
    if (r == 0.0 || spec.centers.empty()) return mesh;
    if (!(r > 0.0) || r >= 1.0) throw InvalidInput("inclusion scale r must lie in (0, 1)");

    const geometry::Lattice& lat = spec.lattice;
    const double Rb = spec.shape.bounding_radius();
    const double amax = std::max(norm(lat.a1), norm(lat.a2));
    if (enforce_resolution && n * 2.0 * r * Rb / amax < 8.0)
        throw MeshTooCoarse("fewer than 8 cells across an inclusion diameter");

    const double det = std::abs(cross(lat.a1, lat.a2));
    const double h = 1.0 / n;
    const double cell_area = det * h * h;
    const double inv_log = 1.0 / std::abs(std::log(r));

    std::vector<double> mu(spec.centers.size());
    for (std::size_t k = 0; k < spec.centers.size(); ++k) {
        mu[k] = design::mu_eval(k, inv_log, spec);
        if (1.0 + mu[k] / (r * r) <= 1e-12)
            throw InvalidInput("weight is nonpositive on an inclusion (r beyond r_max)");
        mesh->contrast = std::max(mesh->contrast, mu[k] / (r * r));
    }

    const bool is_disk = spec.shape.kind == geometry::InclusionShape::Kind::disk;
    const double disk_R = r * spec.shape.radius;
    // lattice-coordinate half-widths of the inclusion bounding box
    const double d1 = r * Rb * norm(lat.a2) / det;
    const double d2 = r * Rb * norm(lat.a1) / det;

    for (std::size_t k = 0; k < spec.centers.size(); ++k) {
        const double winc = 1.0 + mu[k] / (r * r);
        for (int o1 = -1; o1 <= 1; ++o1) {
            for (int o2 = -1; o2 <= 1; ++o2) {
                const Vec2 sc = lat.to_lattice_coords(spec.centers[k]);
                const Vec2 s{sc.x + o1, sc.y + o2};
                const Vec2 c_img{spec.centers[k].x + o1 * lat.a1.x + o2 * lat.a2.x,
                                 spec.centers[k].y + o1 * lat.a1.y + o2 * lat.a2.y};
                std::vector<Vec2> poly_lat;
                double lo1 = s.x - d1, hi1 = s.x + d1, lo2 = s.y - d2, hi2 = s.y + d2;
                if (!is_disk) {
                    lo1 = lo2 = 1e300;
                    hi1 = hi2 = -1e300;
                    for (Vec2 v : spec.shape.vertices) {
                        const Vec2 pv = lat.to_lattice_coords(
                            Vec2{c_img.x + r * v.x, c_img.y + r * v.y});
                        poly_lat.push_back(pv);
                        lo1 = std::min(lo1, pv.x);
                        hi1 = std::max(hi1, pv.x);
                        lo2 = std::min(lo2, pv.y);
                        hi2 = std::max(hi2, pv.y);
                    }
                }
                const int i0 = std::max(0, static_cast<int>(std::floor(lo1 / h)));
                const int i1 = std::min(n - 1, static_cast<int>(std::floor(hi1 / h)));
                const int j0 = std::max(0, static_cast<int>(std::floor(lo2 / h)));
                const int j1 = std::min(n - 1, static_cast<int>(std::floor(hi2 / h)));
                for (int j = j0; j <= j1; ++j) {
                    for (int i = i0; i <= i1; ++i) {
                        double overlap;
                        if (is_disk) {
                            const std::vector<Vec2> cell{
                                lat.from_lattice_coords(Vec2{i * h, j * h}),
                                lat.from_lattice_coords(Vec2{(i + 1) * h, j * h}),
                                lat.from_lattice_coords(Vec2{(i + 1) * h, (j + 1) * h}),
                                lat.from_lattice_coords(Vec2{i * h, (j + 1) * h})};
                            overlap = circle_poly_area(c_img, disk_R, cell);
                        } else {
                            overlap = det * clipped_poly_area(poly_lat, i * h, (i + 1) * h,
                                                              j * h, (j + 1) * h);
                        }
                        if (overlap <= 0.0) continue;
                        const double frac = std::min(overlap / cell_area, 1.0);
                        const std::size_t c = static_cast<std::size_t>(j) * n + i;
                        mesh->wm1[c] += mu[k] / (r * r) * frac;
                        mesh->winv[c] += frac * (1.0 / winc - 1.0);
                    }
                }
            }
        }
    }
    return mesh;
}

// ---- reference element ---------------------------------------------------

struct RefMats {
    double kxx[4][4], kyy[4][4], kxy[4][4], mass[4][4];
};

// bilinear basis on the unit square, 2x2 Gauss (exact for these integrands)
const RefMats& ref_mats() {
    static const RefMats mats = [] {
        RefMats r{};
        const double g0 = 0.5 - 0.5 / std::sqrt(3.0);
        const double g1 = 0.5 + 0.5 / std::sqrt(3.0);
        const double pts[2] = {g0, g1};
        auto phi = [](int k, double x, double y) {
            switch (k) {
                case 0: return (1 - x) * (1 - y);
                case 1: return x * (1 - y);
                case 2: return x * y;
                default: return (1 - x) * y;
            }
        };
        auto dphix = [](int k, double, double y) {
            switch (k) {
                case 0: return -(1 - y);
                case 1: return (1 - y);
                case 2: return y;
                default: return -y;
            }
        };
        auto dphiy = [](int k, double x, double) {
            switch (k) {
                case 0: return -(1 - x);
                case 1: return -x;
                case 2: return x;
                default: return (1 - x);
            }
        };
        for (double x : pts)
            for (double y : pts)
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b < 4; ++b) {
                        r.kxx[a][b] += 0.25 * dphix(a, x, y) * dphix(b, x, y);
                        r.kyy[a][b] += 0.25 * dphiy(a, x, y) * dphiy(b, x, y);
                        r.kxy[a][b] += 0.25 * dphix(a, x, y) * dphiy(b, x, y);
                        r.mass[a][b] += 0.25 * phi(a, x, y) * phi(b, x, y);
                    }
        return r;
    }();
    return mats;
}

}  // namespace

std::shared_ptr<const Mesh> build_mesh(const geometry::CrystalSpec& spec, double r, int n) {
    return build_mesh_impl(spec, r, n, true);
}

FiberMatrices assemble_fiber(const FiberProblem& problem) {
    if (!problem.mesh) throw InvalidInput("fiber problem has no mesh");
    const Mesh& mesh = *problem.mesh;
    const int n = mesh.n;
    const geometry::Lattice& lat = mesh.lattice;
    const double det = std::abs(cross(lat.a1, lat.a2));
    const double g11 = norm2(lat.a2) / (det * det);
    const double g22 = norm2(lat.a1) / (det * det);
    const double g12 = -dot(lat.a1, lat.a2) / (det * det);
    const double h = 1.0 / n;
    const RefMats& ref = ref_mats();

    double kgeo[4][4];
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            kgeo[a][b] = det * (g11 * ref.kxx[a][b] + g22 * ref.kyy[a][b] +
                                g12 * (ref.kxy[a][b] + ref.kxy[b][a]));

    const Complex phase1 = std::exp(Complex(0.0, dot(problem.theta, lat.a1)));
    const Complex phase2 = std::exp(Complex(0.0, dot(problem.theta, lat.a2)));

    const std::size_t N = static_cast<std::size_t>(n) * n;
    std::vector<Eigen::Triplet<Complex>> ta, tm;
    ta.reserve(N * 16);
    tm.reserve(N * 16);

    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const std::size_t cell = static_cast<std::size_t>(j) * n + i;
            // coefficient of the stiffness and mass blocks for this cell
            double ck, cm;
            switch (problem.kind) {
                case FiberKind::TM:
                    ck = 1.0;
                    cm = 1.0 + mesh.wm1[cell];
                    break;
                case FiberKind::TE:
                    ck = mesh.winv[cell];
                    cm = 1.0;
                    break;
                default:  // AUX
                    ck = 1.0;
                    cm = 1.0;
            }
            const double aux_shift =
                problem.kind == FiberKind::AUX ? -problem.aux_lambda * mesh.wm1[cell] : 0.0;

            const int ci[4] = {i, i + 1, i + 1, i};
            const int cj[4] = {j, j, j + 1, j + 1};
            int gidx[4];
            Complex ph[4];
            for (int k = 0; k < 4; ++k) {
                const int wx = ci[k] == n ? 1 : 0;
                const int wy = cj[k] == n ? 1 : 0;
                gidx[k] = (cj[k] % n) * n + (ci[k] % n);
                Complex f{1.0, 0.0};
                if (wx) f *= phase1;
                if (wy) f *= phase2;
                ph[k] = f;
            }
            const double mcell = det * h * h;
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    const Complex fac = std::conj(ph[a]) * ph[b];
                    const double kval = ck * kgeo[a][b] + aux_shift * mcell * ref.mass[a][b];
                    ta.emplace_back(gidx[a], gidx[b], fac * kval);
                    tm.emplace_back(gidx[a], gidx[b], fac * (cm * mcell * ref.mass[a][b]));
                }
            }
        }
    }
    FiberMatrices out;
    out.A.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    out.M.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    out.A.setFromTriplets(ta.begin(), ta.end());
    out.M.setFromTriplets(tm.begin(), tm.end());
    return out;
}

namespace {

// deterministic start block: fixed-seed LCG, independent of thread schedule
MatrixXcd lcg_block(std::size_t rows, std::size_t cols) {
    std::uint64_t state = 0x9E3779B97F4A7C15ull;
    auto draw = [&state] {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        return 2.0 * (static_cast<double>(state >> 11) * 0x1p-53) - 1.0;
    };
    MatrixXcd X(rows, cols);
    for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < rows; ++r) {
            const double re = draw();
            const double im = draw();
            X(r, c) = Complex(re, im);
        }
    return X;
}

// symmetric M-orthonormalization: Y <- Y (Y^H M Y)^{-1/2}
void m_orthonormalize(MatrixXcd& Y, const SparseMatrixZ& M) {
    MatrixXcd Z = Y.adjoint() * (M * Y);
    Z = 0.5 * (Z + Z.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(Z);
    Eigen::VectorXd d = es.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = 1.0 / std::sqrt(std::max(d(i), 1e-28));
    Y = Y * (es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint());
}

std::vector<double> dense_pencil_eigs(const SparseMatrixZ& A, const SparseMatrixZ& M,
                                      double sigma, int count) {
    const MatrixXcd Ad(A), Md(M);
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXcd> ges(Ad, Md);
    if (ges.info() != Eigen::Success)
        throw SolverFailure("dense generalized eigensolver did not converge");
    const Eigen::VectorXd& ev = ges.eigenvalues();
    std::vector<int> idx(ev.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double da = std::abs(ev(a) - sigma), db = std::abs(ev(b) - sigma);
        return da != db ? da < db : ev(a) < ev(b);
    });
    std::vector<double> out;
    for (int k = 0; k < count && k < static_cast<int>(idx.size()); ++k)
        out.push_back(ev(idx[k]));
    std::sort(out.begin(), out.end());
    return out;
}

// `count` eigenvalues of the Hermitian pencil (A, M) nearest sigma via
// shift-invert subspace iteration; deterministic
std::vector<double> shift_invert_eigs(const SparseMatrixZ& A, const SparseMatrixZ& M,
                                      double sigma, int count, double sigma_nudge) {
    const Eigen::Index N = A.rows();
    if (count < 1) throw InvalidInput("eigenvalue count must be >= 1");
    count = std::min<Eigen::Index>(count, N);
    const Eigen::Index p = std::min<Eigen::Index>(count + 10, N);

    Eigen::SparseLU<SparseMatrixZ> lu;
    double shift = sigma + sigma_nudge;
    bool factored = false;
    for (int attempt = 0; attempt < 4 && !factored; ++attempt) {
        SparseMatrixZ B = A - Complex(shift, 0.0) * M;
        B.makeCompressed();
        lu.compute(B);
        factored = lu.info() == Eigen::Success;
        if (!factored) shift = sigma + (attempt + 1) * 1e-3 * std::max(1.0, std::abs(sigma));
    }
    if (!factored) {
        if (N <= 4000) return dense_pencil_eigs(A, M, sigma, count);
        throw SolverFailure("shift factorization failed at every trial shift");
    }

    MatrixXcd X = lcg_block(static_cast<std::size_t>(N), static_cast<std::size_t>(p));
    m_orthonormalize(X, M);
    double worst = 1e300;
    for (int iter = 0; iter < 800; ++iter) {
        MatrixXcd Y = lu.solve(M * X);
        if (!Y.allFinite()) break;
        m_orthonormalize(Y, M);
        MatrixXcd Ap = Y.adjoint() * (A * Y);
        Ap = 0.5 * (Ap + Ap.adjoint()).eval();
        MatrixXcd Mp = Y.adjoint() * (M * Y);
        Mp = 0.5 * (Mp + Mp.adjoint()).eval();
        Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXcd> ges(Ap, Mp);
        if (ges.info() != Eigen::Success) break;
        X = Y * ges.eigenvectors();
        const Eigen::VectorXd& ritz = ges.eigenvalues();

        std::vector<int> idx(static_cast<std::size_t>(p));
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            const double da = std::abs(ritz(a) - sigma), db = std::abs(ritz(b) - sigma);
            return da != db ? da < db : ritz(a) < ritz(b);
        });
        worst = 0.0;
        for (int k = 0; k < count; ++k) {
            const int c = idx[static_cast<std::size_t>(k)];
            const Eigen::VectorXcd x = X.col(c);
            const double res = (A * x - Complex(ritz(c), 0.0) * (M * x)).norm();
            const double mn = std::sqrt(std::abs((x.adjoint() * (M * x))(0, 0).real()));
            worst = std::max(worst, res / std::max(mn, 1e-300));
        }
        if (worst <= 1e-8) {
            std::vector<double> out;
            for (int k = 0; k < count; ++k) out.push_back(ritz(idx[static_cast<std::size_t>(k)]));
            std::sort(out.begin(), out.end());
            return out;
        }
    }
    if (N <= 4000) return dense_pencil_eigs(A, M, sigma, count);
    throw SolverFailure("subspace iteration stalled, residual " + std::to_string(worst));
}

double eig_scale(const Mesh& mesh) {
    const double det = std::abs(cross(mesh.lattice.a1, mesh.lattice.a2));
    const double g11 = norm2(mesh.lattice.a2) / (det * det);
    const double g22 = norm2(mesh.lattice.a1) / (det * det);
    return 4.0 * kPi * kPi * std::max(g11, g22);
}

}  // namespace

std::vector<double> fiber_eigs(const FiberProblem& problem, int count) {
    if (count < 1) throw InvalidInput("fiber_eigs: count must be >= 1");
    const FiberMatrices fm = assemble_fiber(problem);
    double sigma = -0.05 * eig_scale(*problem.mesh);
    if (problem.kind == FiberKind::AUX && problem.aux_lambda > 0.0)
        sigma -= 1.05 * problem.aux_lambda * problem.mesh->contrast;
    return shift_invert_eigs(fm.A, fm.M, sigma, count, 0.0);
}

std::vector<double> fiber_eigs_near(const FiberProblem& problem, double sigma, int count) {
    if (count < 1) throw InvalidInput("fiber_eigs_near: count must be >= 1");
    const FiberMatrices fm = assemble_fiber(problem);
    // fixed nudge keeps the factorization away from an exact eigenvalue
    const double nudge = 1e-4 * std::max(1.0, std::abs(sigma));
    return shift_invert_eigs(fm.A, fm.M, sigma, count, nudge);
}

BandSet band_set(const geometry::CrystalSpec& spec, double r, FiberKind kind,
                 int grid_m, int n_bands, int mesh_n, int jobs, double aux_lambda) {
    if (grid_m < 1) throw InvalidInput("band_set: grid must be >= 1");
    if (n_bands < 1) throw InvalidInput("band_set: need at least one band");
    if (mesh_n < 8 || mesh_n % 2 != 0)
        throw InvalidInput("band_set: mesh must be even and >= 8");
    const auto fine = build_mesh(spec, r, mesh_n);
    // the companion half mesh only feeds the Richardson error estimate, so
    // the 8-cell resolution gate is not applied to it
    const auto coarse = build_mesh_impl(spec, r, mesh_n / 2, false);

    const std::vector<Vec2> thetas = geometry::brillouin_grid(spec.lattice, grid_m);
    BandSet set;
    set.kind = kind;
    set.aux_lambda = aux_lambda;
    set.grid_m = grid_m;
    set.mesh_n = mesh_n;
    set.samples.resize(thetas.size());

    parallel::parallel_for(thetas.size(), jobs, [&](std::size_t t) {
        const int k1 = static_cast<int>(t) / grid_m;
        const int k2 = static_cast<int>(t) % grid_m;
        ThetaSample sample;
        sample.index = static_cast<int>(t);
        sample.s1 = -0.5 + (k1 + 0.5) / grid_m;
        sample.s2 = -0.5 + (k2 + 0.5) / grid_m;
        FiberProblem pf{kind, aux_lambda, thetas[t], fine};
        FiberProblem pc{kind, aux_lambda, thetas[t], coarse};
        sample.values = fiber_eigs(pf, n_bands);
        const std::vector<double> vc = fiber_eigs(pc, n_bands);
        sample.errs.resize(sample.values.size());
        for (std::size_t b = 0; b < sample.values.size(); ++b)
            sample.errs[b] = std::abs(sample.values[b] - vc[b]) / 3.0;
        set.samples[t] = std::move(sample);
    });

    set.bands.resize(static_cast<std::size_t>(n_bands));
    for (std::size_t b = 0; b < set.bands.size(); ++b) {
        BandInterval band;
        band.lo = 1e300;
        band.hi = -1e300;
        for (const ThetaSample& s : set.samples) {
            band.lo = std::min(band.lo, s.values[b]);
            band.hi = std::max(band.hi, s.values[b]);
            band.err = std::max(band.err, s.errs[b]);
        }
        set.bands[b] = band;
    }
    return set;
}

std::vector<GapInterval> find_gaps(const BandSet& bands, double lo, double hi,
                                   double min_width) {
    if (!(lo < hi)) throw InvalidInput("find_gaps: window must satisfy lo < hi");
    if (min_width < 0.0) min_width = 1e-9 * (hi - lo);
    std::vector<std::pair<double, double>> blocks;
    for (const BandInterval& b : bands.bands)
        blocks.emplace_back(b.lo - b.err, b.hi + b.err);
    std::sort(blocks.begin(), blocks.end());
    std::vector<GapInterval> gaps;
    double cur = lo;
    for (const auto& [blo, bhi] : blocks) {
        if (bhi <= cur) continue;
        if (blo >= hi) break;
        if (blo - cur > min_width) gaps.push_back(GapInterval{cur, std::min(blo, hi)});
        cur = std::max(cur, bhi);
        if (cur >= hi) break;
    }
    if (hi - cur > min_width) gaps.push_back(GapInterval{cur, hi});
    return gaps;
}

TMCertificate tm_gap_report(const geometry::CrystalSpec& spec, double r,
                            std::size_t lambda_index, int grid_m, int mesh_n, int jobs) {
    if (lambda_index >= spec.lambdas.size())
        throw InvalidInput("certificate: lambda index out of range");
    TMCertificate cert;
    cert.lambda = spec.lambdas[lambda_index];
    cert.r = r;
    cert.grid_m = grid_m;
    cert.mesh_n = mesh_n;
    const double area = spec.shape.area();
    cert.eta = 2.0 * kPi / area + 1.0;
    cert.tm_required = spec.lambdas.front() * r * r * std::abs(std::log(r));

    // (i) distance from lambda to the inflated TM bands
    int n_bands = 12;
    BandSet tm;
    for (;;) {
        tm = band_set(spec, r, FiberKind::TM, grid_m, n_bands, mesh_n, jobs);
        if (tm.bands.back().hi + tm.bands.back().err >= cert.lambda || n_bands >= 24) break;
        n_bands += 6;  // widen coverage until the bands reach past lambda
    }
    const double top = tm.bands.back().hi + tm.bands.back().err;
    cert.tm_distance = 1e300;
    for (const BandInterval& b : tm.bands) {
        const double blo = b.lo - b.err, bhi = b.hi + b.err;
        const double d = cert.lambda < blo   ? blo - cert.lambda
                         : cert.lambda > bhi ? cert.lambda - bhi
                                             : 0.0;
        cert.tm_distance = std::min(cert.tm_distance, d);
    }
    if (top < cert.lambda) cert.tm_distance = 0.0;  // bands never reached lambda
    for (const GapInterval& g : find_gaps(tm, 0.0, std::max(top, cert.lambda + 1.0)))
        if (g.lo < cert.lambda && cert.lambda < g.hi) cert.tm_gap = g;
    cert.tm_pass = cert.tm_distance >= cert.tm_required && top >= cert.lambda;

    // (ii) distance from lambda to the AUX(lambda) fiber eigenvalues
    const auto fine = build_mesh(spec, r, mesh_n);
    const auto coarse = build_mesh_impl(spec, r, mesh_n / 2, false);
    const std::vector<Vec2> thetas = geometry::brillouin_grid(spec.lattice, grid_m);
    std::vector<double> dist_f(thetas.size()), dist_c(thetas.size());
    parallel::parallel_for(thetas.size(), jobs, [&](std::size_t t) {
        FiberProblem pf{FiberKind::AUX, cert.lambda, thetas[t], fine};
        FiberProblem pc{FiberKind::AUX, cert.lambda, thetas[t], coarse};
        auto nearest = [&](const FiberProblem& p) {
            double best = 1e300;
            for (double v : fiber_eigs_near(p, cert.lambda, 6))
                best = std::min(best, std::abs(v - cert.lambda));
            return best;
        };
        dist_f[t] = nearest(pf);
        dist_c[t] = nearest(pc);
    });
    cert.aux_distance = 1e300;
    cert.aux_error = 0.0;
    for (std::size_t t = 0; t < thetas.size(); ++t) {
        cert.aux_distance = std::min(cert.aux_distance, dist_f[t]);
        cert.aux_error = std::max(cert.aux_error, std::abs(dist_f[t] - dist_c[t]) / 3.0);
    }
    cert.aux_margin = cert.aux_distance - cert.aux_error;
    cert.aux_required = cert.eta - cert.aux_error;
    cert.aux_pass = cert.aux_distance >= cert.aux_required;
    return cert;
}

TMCertificate tm_gap_certificate(const geometry::CrystalSpec& spec, double r,
                                 std::size_t lambda_index, int grid_m, int mesh_n,
                                 int jobs) {
    const TMCertificate cert = tm_gap_report(spec, r, lambda_index, grid_m, mesh_n, jobs);
    if (!cert.tm_pass || !cert.aux_pass) {
        std::string msg = "certificate failed:";
        if (!cert.tm_pass)
            msg += " TM distance " + std::to_string(cert.tm_distance) + " < required " +
                   std::to_string(cert.tm_required) + ";";
        if (!cert.aux_pass)
            msg += " AUX distance " + std::to_string(cert.aux_distance) + " < required " +
                   std::to_string(cert.aux_required) + ";";
        throw CertificateFailed(msg);
    }
    return cert;
}

TEOverlapReport te_overlap_check(const geometry::CrystalSpec& spec, double r, int n0,
                                 int grid_m, int mesh_n, int jobs) {
    if (n0 < 1) throw InvalidInput("te_overlap_check: n0 must be >= 1");
    TEOverlapReport report;
    report.bands = band_set(spec, r, FiberKind::TE, grid_m, n0, mesh_n, jobs);
    report.all_overlap = true;
    for (int n = 0; n + 1 < n0; ++n) {
        const BandInterval& b = report.bands.bands[static_cast<std::size_t>(n)];
        const BandInterval& a = report.bands.bands[static_cast<std::size_t>(n) + 1];
        const double overlap = (b.hi - b.err) - (a.lo + a.err);
        report.overlap.push_back(overlap);
        report.all_overlap = report.all_overlap && overlap > 0.0;
    }
    const BandInterval& top = report.bands.bands[static_cast<std::size_t>(n0) - 1];
    report.covered_hi = top.hi - top.err;
    return report;
}

}  // namespace bandgap::bloch

#pragma once

// Exact resolvent machinery for finitely many inclusions: the factorized
// form R0 + A (1 - F C)^{-1} F E on node values over the inclusion set, the
// finite point-interaction resolvent through the Q matrix, the rank-one
// limit scalar q(y, nu, lambda)/|Omega|^2, and the |ln r|^{-1} convergence
// study comparing the two.

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "bandgap/geometry.hpp"

namespace bandgap::approx {

using Complex = std::complex<double>;

struct FiniteCrystal {
    std::vector<Vec2> centers;
    std::vector<std::size_t> classes;  // per center: index into lambdas/coefficients
    std::vector<double> lambdas;
    std::vector<double> coefficients;
    geometry::InclusionShape shape;
    double r = 0.1;
};

// m_side x m_side block of lattice translates of the target's center
// (single class); m_side = 1, 3, 5 give M = 1, 9, 25
FiniteCrystal finite_crystal(const geometry::CrystalSpec& spec, std::size_t target,
                             int m_side);

// pairwise separation > 2 r R_Omega; throws InvalidInput otherwise
void validate_finite_crystal(const FiniteCrystal& fc);

struct Gaussian {
    Vec2 center{0.0, 0.0};
    double sigma = 0.25;  // unit mass: (2 pi sigma^2)^{-1} exp(-|x-c|^2/(2 sigma^2))
};

double gaussian_value(const Gaussian& f, Vec2 x);

// (R0(nu) f)(x) for the Gaussian, by radial Hankel quadrature
Complex gaussian_resolvent(const Gaussian& f, Complex nu, Vec2 x);

struct Quadrature {
    std::vector<Vec2> nodes;     // on the reference shape Omega
    std::vector<double> weights; // positive, sum = |Omega|
};

// disk: polar tensor Gauss (order radial points); polygon: fan triangles
// dyadically refined to a comparable node count
Quadrature shape_quadrature(const geometry::InclusionShape& shape, int order);

struct BSOperators {
    FiniteCrystal fc;
    Complex nu;
    Quadrature quad;            // shared by every center
    std::vector<double> mu;     // mu(r, y) = mu_n(1/|ln r|) per center
    Eigen::MatrixXcd B;         // block diagonal, log-singular diagonal treated
    Eigen::MatrixXcd C;         // zero diagonal blocks
};

// Nystrom assembly; the log part of the diagonal kernel is integrated
// exactly through the interior log potential of Omega
BSOperators assemble_bs(const FiniteCrystal& fc, Complex nu, int order);

// F_r(nu, lambda) = lambda (1 - lambda B)^{-1} D on node values
Eigen::MatrixXcd f_r_matrix(const BSOperators& ops, double lambda);

// operator norm on (+)L^2(Omega) approximated with the quadrature inner
// product: ||W^{1/2} T W^{-1/2}||_2 by power iteration
double op_norm(const Eigen::MatrixXcd& T, const BSOperators& ops);

// (H_{r,lambda} - nu)^{-1} f at eval_pts via the factorized resolvent;
// throws NotContractive when ||F C|| >= 1
std::vector<Complex> bs_resolvent_apply(const BSOperators& ops, double lambda,
                                        const Gaussian& f,
                                        const std::vector<Vec2>& eval_pts);

// independent route: R0 + lambda R0 v (1 - lambda u R0 v)^{-1} u R0 with
// u = v = sqrt(w-1) on the physical inclusions (factorization cross-check)
std::vector<Complex> direct_bs_apply(const FiniteCrystal& fc, Complex nu, double lambda,
                                     const Gaussian& f, const std::vector<Vec2>& eval_pts,
                                     int order);

// q(y, nu, lambda)/|Omega|^2 for a center of class cls; 0 when lambda is
// not the class target; NearResonance when the denominator vanishes
Complex f_limit(std::size_t cls, Complex nu, double lambda, const FiniteCrystal& fc);

// finite point-interaction resolvent: R0 f + sum_{ml} [Q^{-1}]_{ml}
// (R0 f)(y_l) G_nu(. - y_m); cond (1-norm estimate) reported if requested
std::vector<Complex> pi_resolvent_apply(const std::vector<Vec2>& centers,
                                        const std::vector<double>& alphas, Complex nu,
                                        const Gaussian& f,
                                        const std::vector<Vec2>& eval_pts,
                                        double* cond = nullptr);

struct ConvergenceRow {
    double r = 0.0;
    double inv_log_r = 0.0;       // 1/|ln r|
    double resolvent_error = 0.0; // ||bs - pi|| over the evaluation grid
    double F_error = 0.0;         // ||F_r - F|| on the quadrature basis
    double C_error = 0.0;         // ||C_r - C_0||
};

struct ConvergenceStudy {
    std::vector<ConvergenceRow> rows;  // in r_list order
    double kappa = 0.0;           // e(r) ~ kappa / |ln r| least squares
    double residual_log = 0.0;    // rms residual of the 1/|ln r| fit
    double residual_r = 0.0;      // ... of a kappa*r fit
    double residual_sqrt = 0.0;   // ... of a kappa*sqrt(r) fit
};

// r_list decreasing, all < r_max; single-class M = m_side^2 crystal
ConvergenceStudy convergence_study(const geometry::CrystalSpec& spec, std::size_t target,
                                   Complex nu, const std::vector<double>& r_list,
                                   const Gaussian& f, int m_side, int order, int jobs);

}  // namespace bandgap::approx

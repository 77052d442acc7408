#pragma once

// Regularized dual-lattice Green's function
//   g(E, theta) = lim_{R->inf} (1/4pi^2) [ sum_{|x+theta|<=R} |BZ| / (|x+theta|^2 - E)
//                                          - 2 pi ln R ],
// its E-derivative, and the point-interaction Q matrix over a truncated
// center set. The slowly convergent sum is split with a Gaussian factor
// exp(-a(|x+theta|^2-E)) into a fast dual sum, a fast direct-lattice sum of
// heat-kernel tails, and an explicit exponential-integral remainder; both
// tails decay like exp(-c R^2), so full double precision is reached with a
// few dozen terms per lattice.

#include <complex>

#include <Eigen/Dense>

#include "bandgap/geometry.hpp"
#include "bandgap/specfun.hpp"

namespace bandgap::latticesum {

using specfun::Complex;

struct GFunEvaluator {
    geometry::Lattice lattice;
    double tolerance = 1e-12;   // absolute, on g (floor: the split is ~machine precision)
    double max_radius = 4096.0; // cap on the dual enumeration radius

    explicit GFunEvaluator(geometry::Lattice lat, double tol = 1e-12,
                           double cap = 4096.0);
};

double g_lattice(double E, Vec2 theta, const GFunEvaluator& ev);
double dg_dE(double E, Vec2 theta, const GFunEvaluator& ev);

struct GPair {
    double g;
    double dg;
};
// one enumeration for both values
GPair g_with_derivative(double E, Vec2 theta, const GFunEvaluator& ev);

struct QMatrix {
    double alpha = 0.0;
    geometry::Lattice lattice;
    Complex nu;
    int truncation_index = 0;        // centers y_p, |p1|,|p2| <= M
    Eigen::MatrixXcd entries;        // (2M+1)^2 square, symmetric
};

// Entries (alpha - (1/2pi)(gamma - ln(sqrt(nu)/2i))) delta_ml - G~_nu(y_m - y_l)
// over the truncated lattice centered at 0. Requires Im nu != 0.
QMatrix q_matrix(double alpha, const geometry::Lattice& lattice,
                 const specfun::SpectralParameter& nu, int M);

// Truncation index from the kernel decay e^{-Re mu |y|}: smallest M whose
// dropped coupling block has (estimated) norm below tol.
int q_truncation_index(const geometry::Lattice& lattice,
                       const specfun::SpectralParameter& nu, double tol);

}  // namespace bandgap::latticesum

#pragma once

// Inverse design: from target values lambda_1..lambda_N to a crystal whose
// point-interaction limit has all targets inside one spectral gap. Also the
// log self-energy C = int_Omega int_Omega ln|x-z|, the coupling coefficients
// c_n, the contrast profile mu_n, and the weight w_r.

#include <optional>
#include <vector>

#include "bandgap/geometry.hpp"
#include "bandgap/pointspec.hpp"

namespace bandgap::design {

// C(Omega) to absolute accuracy tol. Disks in closed form,
// C(B_R) = pi^2 R^4 (ln R - 1/4); polygons by the exact boundary-integral
// inner potential and adaptive quadrature outside.
double log_self_energy(const geometry::InclusionShape& shape, double tol = 1e-8);

// interior log potential psi(z) = int_Omega ln|x-z| dx (exact up to rounding
// for polygons and disks; used by the self-energy quadrature and tests)
double log_potential(const geometry::InclusionShape& shape, Vec2 z);

// c_n = (4 pi^2)/(lambda_n |Omega|) (C/(2 pi |Omega|^2) - alpha)
std::vector<double> coupling_constants(const std::vector<double>& targets,
                                       const geometry::InclusionShape& shape,
                                       double alpha, double tol = 1e-8);

// inverse of coupling_constants for one entry:
// alpha_n = -c_n lambda_n |Omega| / (4 pi^2) + C/(2 pi |Omega|^2)
double alpha_from_coupling(double c, double lambda, const geometry::InclusionShape& shape,
                           double tol = 1e-8);

// mu_n(x) = 2 pi x / (lambda_n |Omega|) + c_n x^2
double mu_eval(std::size_t n, double x, const geometry::CrystalSpec& spec);

// w_r(x) = 1 + r^{-2} sum_n mu_n(1/|ln r|) [x in Lambda + y_n + r Omega].
// Lattice periodic; 1 in vacuum. Sets *negative_contrast when some
// mu_n(1/|ln r|) <= 0 (r beyond r_max; value still returned).
double weight_eval(Vec2 x, const geometry::CrystalSpec& spec,
                   bool* negative_contrast = nullptr);

// Largest r <= 1/2 with mu_n(1/|ln r'|) > 0 for all n and r' <= r, also
// capped by inclusion disjointness (center distance > 2 r R_Omega).
double r_max(const geometry::CrystalSpec& spec);

struct DesignInputs {
    std::vector<double> targets;                 // lambda_1 < ... < lambda_N, positive
    geometry::InclusionShape shape = geometry::InclusionShape::disk(1.0);
    geometry::Lattice lattice0 = geometry::Lattice::square();
    std::optional<double> alpha0;                // default: threshold - 1
    std::optional<double> margin;                // default: 0.1 * lambda_1
    std::optional<double> r;                     // default: min(0.1, r_max/2)
    std::optional<std::vector<Vec2>> centers;    // lattice coords in [0,1)^2
};

struct DesignReport {
    double k = 1.0;
    double alpha0 = 0.0;
    double alpha_k = 0.0;
    double eta = 0.0;     // 2 pi / |Omega| + 1
    double margin = 0.0;
    double window_lo = 0.0, window_hi = 0.0;  // [lambda_1 - eta - 2a, lambda_N + eta + 2a]
    pointspec::EdgeSet edges;                 // of the scaled model
    double threshold = 0.0;                   // alpha threshold of the base lattice
    double r_max = 0.0;
    double self_energy = 0.0;
};

struct DesignResult {
    geometry::CrystalSpec spec;
    DesignReport report;
};

DesignResult design_crystal(const DesignInputs& inputs, double tol = 1e-10);

}  // namespace bandgap::design

#pragma once

// Spectra of lattice point-interaction Hamiltonians. Band edges come from
// the zeros of E -> g(E, theta) + (gamma + ln 2)/(2 pi) - alpha at theta = 0
// (edges E0 and E_tilde) and theta = theta0 = -(b1+b2)/2 (edge E1); the
// spectrum is [E0, E1] u [E2, inf) with E2 = min(E_tilde, |b_minus|^2/4),
// merging to a single ray when E2 <= E1.

#include <limits>
#include <vector>

#include "bandgap/geometry.hpp"
#include "bandgap/latticesum.hpp"

namespace bandgap::pointspec {

struct PointInteractionModel {
    double alpha = 0.0;
    geometry::Lattice lattice;
    Vec2 shift{0.0, 0.0};  // spectrum is translation invariant; kept for bookkeeping
};

struct EdgeSet {
    double E0 = 0.0;
    double E1 = 0.0;
    double E_tilde = 0.0;
    double E2 = 0.0;
};

// (gamma + ln 2)/(2 pi), the constant in the edge equations
double edge_constant();

// alpha threshold for E1 < 0: g(0, theta0) + (gamma + ln 2)/(2 pi)
double threshold_alpha(const geometry::Lattice& lattice, double tol = 1e-12);

EdgeSet band_edges(const PointInteractionModel& model, double tol = 1e-12);

struct Interval {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
};

struct Spectrum {
    std::vector<Interval> bands;  // disjoint, sorted
    bool contains(double E) const;
    // distance from E to the band union (0 when inside)
    double distance(double E) const;
};

Spectrum spectrum_pi(const PointInteractionModel& model, double tol = 1e-12);

// (alpha - ln k / 2pi, Lambda / k, y / k); spectra scale by k^2
PointInteractionModel scale_model(const PointInteractionModel& model, double k);

struct GapPlacement {
    double k = 1.0;
    PointInteractionModel model;
};

// Smallest k on the 1% geometric grid with k^2 E1 < a and k^2 E2 > b.
GapPlacement place_gap(double a, double b, const PointInteractionModel& base,
                       double tol = 1e-12);

}  // namespace bandgap::pointspec

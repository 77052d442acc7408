#pragma once

// Floquet-Bloch fibers of the TM operator -w^{-1} Delta, the TE operator
// -div(w^{-1} grad), and the auxiliary family -Delta - lambda (w - 1), all
// reduced to generalized eigenproblems (A, M) with quasi-periodic boundary
// identification. Bands, gaps, and the two desk-scale certificates.

#include <complex>
#include <memory>
#include <vector>

#include <Eigen/SparseCore>

#include "bandgap/geometry.hpp"

namespace bandgap::bloch {

using SparseMatrixZ = Eigen::SparseMatrix<std::complex<double>>;

enum class FiberKind { TM, TE, AUX };

// Cell-averaged coefficient fields of w on an n x n grid over the
// fundamental cell (lattice coordinates). Cut cells carry the exact
// inclusion overlap area, so integrals of w and 1/w per cell are exact.
struct Mesh {
    int n = 0;
    geometry::Lattice lattice;
    std::vector<double> wm1;   // cell average of (w - 1), size n*n
    std::vector<double> winv;  // cell average of 1/w
    double contrast = 0.0;     // max over inclusions of (w - 1)
};

// r = 0 or an empty center list gives the vacuum w = 1. Requires the grid
// to put >= 8 cells across each inclusion diameter; throws MeshTooCoarse.
std::shared_ptr<const Mesh> build_mesh(const geometry::CrystalSpec& spec, double r, int n);

struct FiberProblem {
    FiberKind kind = FiberKind::TM;
    double aux_lambda = 0.0;  // AUX only: the lambda in -Delta - lambda (w-1)
    Vec2 theta{0.0, 0.0};
    std::shared_ptr<const Mesh> mesh;
};

struct FiberMatrices {
    SparseMatrixZ A;  // Hermitian
    SparseMatrixZ M;  // Hermitian positive definite
};

// A = stiffness(1) for TM/AUX or stiffness(1/w) for TE; M = mass(w) for TM
// or mass(1) for TE/AUX; AUX subtracts aux_lambda * mass(w-1) from A. The
// quasi-periodic phases e^{i theta . a_j} sit on wrapped couplings.
FiberMatrices assemble_fiber(const FiberProblem& problem);

// smallest `count` generalized eigenvalues, ascending, residuals
// ||A u - lambda M u|| <= 1e-8 ||u||_M
std::vector<double> fiber_eigs(const FiberProblem& problem, int count);

// the `count` eigenvalues nearest sigma (AUX distance checks), ascending
std::vector<double> fiber_eigs_near(const FiberProblem& problem, double sigma, int count);

struct BandInterval {
    double lo = 0.0;
    double hi = 0.0;
    double err = 0.0;  // Richardson estimate from mesh halving, max over grid
};

struct ThetaSample {
    int index = 0;
    double s1 = 0.0, s2 = 0.0;  // theta = s1 b1 + s2 b2
    std::vector<double> values;
    std::vector<double> errs;
};

struct BandSet {
    FiberKind kind = FiberKind::TM;
    double aux_lambda = 0.0;
    int grid_m = 0;
    int mesh_n = 0;
    std::vector<BandInterval> bands;
    std::vector<ThetaSample> samples;
};

// Sweep brillouin_grid(m); band n is [min, max] over the grid of the n-th
// fiber eigenvalue, with the coarse-mesh Richardson error attached.
// Deterministic for fixed inputs regardless of jobs.
BandSet band_set(const geometry::CrystalSpec& spec, double r, FiberKind kind,
                 int grid_m, int n_bands, int mesh_n, int jobs,
                 double aux_lambda = 0.0);

struct GapInterval {
    double lo = 0.0;
    double hi = 0.0;
};

// maximal open subintervals of [lo, hi] disjoint from every inflated band
// [a - err, b + err]; slivers below min_width (default 1e-9 (hi-lo)) dropped
std::vector<GapInterval> find_gaps(const BandSet& bands, double lo, double hi,
                                   double min_width = -1.0);

struct TMCertificate {
    double lambda = 0.0;
    double r = 0.0;
    // (i) TM band distance vs the gap half-width lambda_1 r^2 |ln r|
    double tm_distance = 0.0;   // distance to inflated TM bands
    double tm_required = 0.0;   // lambda_1 r^2 |ln r|
    bool tm_pass = false;
    GapInterval tm_gap;         // the inflated-band gap containing lambda
    // (ii) auxiliary family: distance from lambda to the AUX(lambda) fiber
    // eigenvalues over the grid must stay near the design margin eta
    double aux_distance = 0.0;  // raw minimal distance
    double aux_error = 0.0;     // error bar at the minimizing sample
    double aux_margin = 0.0;    // aux_distance - aux_error
    double aux_required = 0.0;  // eta - aux_error
    double eta = 0.0;
    bool aux_pass = false;
    int grid_m = 0;
    int mesh_n = 0;
};

// Both checks, non-throwing; tm_gap_certificate wraps it and throws
// CertificateFailed when either check fails.
TMCertificate tm_gap_report(const geometry::CrystalSpec& spec, double r,
                            std::size_t lambda_index, int grid_m, int mesh_n, int jobs);
TMCertificate tm_gap_certificate(const geometry::CrystalSpec& spec, double r,
                                 std::size_t lambda_index, int grid_m, int mesh_n,
                                 int jobs);

struct TEOverlapReport {
    std::vector<double> overlap;  // (b_n - err_n) - (a_{n+1} + err_{n+1}), n = 1..n0-1
    bool all_overlap = false;
    double covered_hi = 0.0;  // deflated b_{n0}: [0, covered_hi] in the spectrum
    BandSet bands;
};

// b_{r,n} > a_{r,n+1} within error bars for n = 1..n0-1; report-style
TEOverlapReport te_overlap_check(const geometry::CrystalSpec& spec, double r, int n0,
                                 int grid_m, int mesh_n, int jobs);

}  // namespace bandgap::bloch

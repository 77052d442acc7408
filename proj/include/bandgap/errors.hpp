#pragma once

#include <stdexcept>
#include <string>

namespace bandgap {

// Base for everything thrown by the library. CLI maps subclasses to exit codes:
// input/validation problems -> 2, feasibility/certification failures -> 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
    using Error::Error;
};

struct DegenerateLattice : InvalidInput {
    using InvalidInput::InvalidInput;
};

struct InvalidShape : InvalidInput {
    using InvalidInput::InvalidInput;
};

struct InvalidScale : InvalidInput {
    using InvalidInput::InvalidInput;
};

// Spectral parameter sits on the positive real axis (or too close to a lattice
// resolvent pole) where the kernels are not defined.
struct NearPole : InvalidInput {
    using InvalidInput::InvalidInput;
};

// Kernel evaluated where it has a genuine singularity (x = 0 and the like).
struct SingularArgument : InvalidInput {
    using InvalidInput::InvalidInput;
};

// Sign-change bracket for a root could not be established.
struct BracketFailure : Error {
    using Error::Error;
};

// Base coupling fails the gap-existence criterion (threshold test).
struct BadBaseCoupling : InvalidInput {
    using InvalidInput::InvalidInput;
};

struct MeshTooCoarse : InvalidInput {
    using InvalidInput::InvalidInput;
};

struct SolverFailure : Error {
    using Error::Error;
};

// ||F_r C_r|| >= 1: the resolvent series is not contractive at this nu.
struct NotContractive : Error {
    using Error::Error;
};

// Denominator of the limit scalar q(y, nu, lambda) vanishes.
struct NearResonance : Error {
    using Error::Error;
};

struct SingularQ : Error {
    using Error::Error;
};

struct CertificateFailed : Error {
    using Error::Error;
};

// A requested design cannot be satisfied: no spectral gap to scale, or the
// target window admits no admissible scale factor.
struct NoGapToScale : Error {
    using Error::Error;
};

struct Infeasible : Error {
    using Error::Error;
};

// Iterative procedure hit its budget before reaching the requested tolerance.
struct NoConvergence : Error {
    NoConvergence(const std::string& what, double best, double residual)
        : Error(what), best_value(best), best_residual(residual) {}
    double best_value;
    double best_residual;
};

}  // namespace bandgap

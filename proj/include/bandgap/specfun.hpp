#pragma once

// Free-space 2D Helmholtz/Laplace kernels: the outgoing Green's function
// G_nu(x) = (i/4) H0^(1)(sqrt(nu)|x|) = (1/2pi) K0(mu |x|),  mu = -i sqrt(nu),
// its regularized variant (log singularity removed at x=0) and the small-
// argument limit constant. The sqrt branch is fixed by Im sqrt(nu) > 0, so
// Re mu > 0 and K0 decays.

#include <complex>

#include "bandgap/vec2.hpp"

namespace bandgap::specfun {

using Complex = std::complex<double>;

inline constexpr double euler_gamma = 0.5772156649015328606065120900824024310;

// Principal square root reflected into the closed upper half plane.
Complex sqrt_upper(Complex nu);

// Energy parameter with its branch-fixed square root. Rejects nu on [0, inf),
// where the free resolvent kernel is not defined.
struct SpectralParameter {
    Complex nu;
    Complex sqrt_nu;  // Im >= 0, > 0 unless nu is real negative

    explicit SpectralParameter(Complex nu_in);

    // mu = -i sqrt(nu); Re mu > 0 unless nu is real negative (then mu > 0 real).
    Complex mu() const { return {sqrt_nu.imag(), -sqrt_nu.real()}; }

    bool real_negative() const { return nu.imag() == 0.0 && nu.real() < 0.0; }
};

// Value plus an accuracy flag: false when the argument left the range where
// the stated 1e-12 relative accuracy is guaranteed (value still usable).
struct KernelValue {
    Complex value;
    bool in_accuracy_range = true;
};

// Modified Bessel K0, real positive argument.
double k0_real(double x);

// Modified Bessel K0 for complex z with Re z > 0. Ascending series for
// |z| <= 2, trapezoidal evaluation of int_0^inf exp(-z cosh t) dt for
// 2 < |z| <= 16, asymptotic expansion beyond.
KernelValue k0_complex(Complex z);

// ln(sqrt(nu)/(2i)) with the Im sqrt(nu) > 0 branch; the argument of the log
// lies in the right half plane, so the principal log is safe.
Complex log_sqrtnu_over_2i(const SpectralParameter& nu);

// G_nu(x); throws SingularArgument at x = 0.
Complex green_free(Vec2 x, const SpectralParameter& nu);
KernelValue green_free_checked(Vec2 x, const SpectralParameter& nu);

// G_nu(x) for x != 0, exactly 0 at x = 0.
Complex green_regularized(Vec2 x, const SpectralParameter& nu);

// lim_{|x|->0} [ G_nu(x) + ln|x|/(2pi) ] = -(gamma + ln(sqrt(nu)/2i))/(2pi)
// = (ln 2 - gamma - ln mu)/(2pi) with mu = -i sqrt(nu).
Complex green_limit(const SpectralParameter& nu);

}  // namespace bandgap::specfun

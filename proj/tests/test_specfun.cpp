#include <doctest.h>

#include <cmath>
#include <complex>

#include "bandgap/errors.hpp"
#include "bandgap/specfun.hpp"

using namespace bandgap;
using specfun::Complex;

namespace {
constexpr double pi = 3.14159265358979323846;
}

TEST_CASE("euler gamma constant") {
    CHECK(specfun::euler_gamma == doctest::Approx(0.57721566490153286061).epsilon(1e-15));
}

TEST_CASE("real Bessel K0 at 1") {
    // A&S 9.8: K0(1) = 0.42102 44382 40708 34
    CHECK(specfun::k0_real(1.0) == doctest::Approx(0.42102443824070834).epsilon(1e-13));
}

TEST_CASE("spectral parameter branch: Im sqrt(nu) > 0") {
    const specfun::SpectralParameter p(Complex(0.0, 2.0));
    CHECK(p.sqrt_nu.imag() > 0.0);
    // sqrt(2i) = 1 + i
    CHECK(p.sqrt_nu.real() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p.sqrt_nu.imag() == doctest::Approx(1.0).epsilon(1e-14));
    // mu = -i sqrt(nu) has positive real part (kernel decay)
    CHECK(p.mu().real() > 0.0);

    const specfun::SpectralParameter q(Complex(-4.0, 0.0));
    CHECK(q.sqrt_nu.real() == doctest::Approx(0.0));
    CHECK(q.sqrt_nu.imag() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("free Green's function at nu = 2i, |x| = 0.7") {
    // mpmath: (1/2pi) K0(mu |x|), mu = -i sqrt(2i)
    const specfun::SpectralParameter p(Complex(0.0, 2.0));
    const Complex g = specfun::green_free(Vec2{0.7, 0.0}, p);
    CHECK(g.real() == doctest::Approx(0.0467514132536540249).epsilon(1e-13));
    CHECK(g.imag() == doctest::Approx(0.0793450101438287774).epsilon(1e-13));
    // rotation invariance
    const Complex g2 = specfun::green_free(Vec2{0.7 / std::sqrt(2.0), -0.7 / std::sqrt(2.0)}, p);
    CHECK(std::abs(g - g2) < 1e-14);
}

TEST_CASE("free Green's function conjugation symmetry") {
    const specfun::SpectralParameter p(Complex(-1.0, 0.7));
    const specfun::SpectralParameter pc(Complex(-1.0, -0.7));
    const Vec2 x{0.31, -0.44};
    const Complex g = specfun::green_free(x, p);
    const Complex gc = specfun::green_free(x, pc);
    CHECK(std::abs(gc - std::conj(g)) < 1e-14);
}

TEST_CASE("small-argument law: G_nu(x) + ln|x|/2pi -> green_limit") {
    const specfun::SpectralParameter p(Complex(0.0, 2.0));
    const Complex limit = specfun::green_limit(p);
    // K0(mu|x|) = -ln(mu|x|/2) - gamma + O(..), mu = sqrt(2) e^{-i pi/4}, so the
    // constant is (ln 2 / 2 - gamma + i pi/4) / (2 pi); value frozen from mpmath
    const Complex expected{-0.036707826260991092, 0.125};
    CHECK(std::abs(limit - expected) < 1e-15);

    // values at |x| = 1e-3, 1e-5, 1e-7 with Richardson-style extrapolation;
    // the remainder is O(|x|^2 ln|x|), so the 1e-3 term already sits at ~1e-5
    Complex v[3];
    const double xs[3] = {1e-3, 1e-5, 1e-7};
    for (int i = 0; i < 3; ++i)
        v[i] = specfun::green_free(Vec2{xs[i], 0.0}, p) + std::log(xs[i]) / (2.0 * pi);
    CHECK(std::abs(v[2] - limit) < 1e-6);
    // extrapolation: successive differences shrink by ~1e-4 each decade pair
    CHECK(std::abs(v[1] - limit) < 1e-2 * std::abs(v[0] - limit) + 1e-14);
}

TEST_CASE("branch arithmetic: ln(sqrt(i)/2i) = -ln 2 - i pi/4") {
    const specfun::SpectralParameter p(Complex(0.0, 1.0));
    const Complex v = specfun::log_sqrtnu_over_2i(p);
    CHECK(v.real() == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
    CHECK(v.imag() == doctest::Approx(-pi / 4.0).epsilon(1e-14));
}

TEST_CASE("green_free throws at the singular point") {
    const specfun::SpectralParameter p(Complex(0.0, 1.0));
    CHECK_THROWS_AS((void)specfun::green_free(Vec2{0.0, 0.0}, p), SingularArgument);
    CHECK(specfun::green_regularized(Vec2{0.0, 0.0}, p) == Complex(0.0, 0.0));
    CHECK(std::abs(specfun::green_regularized(Vec2{0.3, 0.1}, p) -
                   specfun::green_free(Vec2{0.3, 0.1}, p)) == 0.0);
}

TEST_CASE("green_free_checked matches green_free away from 0") {
    const specfun::SpectralParameter p(Complex(-2.0, 0.5));
    const Vec2 x{1.2, -0.4};
    const specfun::KernelValue kv = specfun::green_free_checked(x, p);
    CHECK(std::abs(kv.value - specfun::green_free(x, p)) == 0.0);
    CHECK(kv.in_accuracy_range);
}

TEST_CASE("complex K0 against the real-axis implementation and mpmath") {
    for (double t : {0.2, 1.0, 3.5, 7.0}) {
        const specfun::KernelValue z = specfun::k0_complex(Complex(t, 0.0));
        CHECK(z.value.real() == doctest::Approx(specfun::k0_real(t)).epsilon(1e-12));
        CHECK(std::abs(z.value.imag()) < 1e-14 * std::abs(z.value.real()) + 1e-300);
    }
    // mpmath besselk(0, 1+i) and besselk(0, 0.3-0.8i)
    const Complex v = specfun::k0_complex(Complex(1.0, 1.0)).value;
    CHECK(v.real() == doctest::Approx(0.080197726946517818727).epsilon(1e-11));
    CHECK(v.imag() == doctest::Approx(-0.35727745928533025061).epsilon(1e-11));
    const Complex w = specfun::k0_complex(Complex(0.3, -0.8)).value;
    CHECK(w.real() == doctest::Approx(0.23601299521603495874).epsilon(1e-11));
    CHECK(w.imag() == doctest::Approx(0.90838703747772450537).epsilon(1e-11));
}

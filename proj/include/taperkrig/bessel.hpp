#pragma once

namespace taperkrig {

// Modified Bessel function of the second kind K_nu(x) for nu >= 0, x > 0.
// Temme's series for x <= 2 and a Steed-type continued fraction for x > 2,
// with upward recurrence in the order. Relative error is below 1e-12 over
// the parameter ranges used by the Matern family here (nu <= ~10, x <= ~700).
// Returns 0 once e^-x underflows (x > ~705).
double bessel_k(double nu, double x);

}  // namespace taperkrig

#include "taperkrig/bessel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace taperkrig {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 20000;
constexpr double kPi = 3.141592653589793238462643383279;

// gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu), continuous at mu = 0
// where it equals minus the Euler-Mascheroni constant. The series branch
// below the cancellation threshold keeps full precision.
void temme_gammas(double mu, double& gam1, double& gam2, double& gampl, double& gammi) {
  gampl = 1.0 / std::tgamma(1.0 + mu);
  gammi = 1.0 / std::tgamma(1.0 - mu);
  if (std::fabs(mu) < 1e-4) {
    // 1/Gamma(1+z) = 1 + g z + a2 z^2 + a3 z^3 + ...  (g = Euler gamma),
    // so the difference above equals -2 (g mu + a3 mu^3 + ...).
    constexpr double g = 0.57721566490153286060651209008240;
    constexpr double a3 = -0.04200263503409523552900393488;  // g^3/6 - g pi^2/12 + zeta(3)/3
    gam1 = -(g + a3 * mu * mu);
  } else {
    gam1 = (gammi - gampl) / (2.0 * mu);
  }
  gam2 = 0.5 * (gammi + gampl);
}

// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, 0 < x <= 2 (Temme 1975).
void bessel_k_small(double mu, double x, double& kmu, double& kmu1) {
  const double x2 = 0.5 * x;
  const double pimu = kPi * mu;
  const double fact = (std::fabs(pimu) < kEps) ? 1.0 : pimu / std::sin(pimu);
  const double d = -std::log(x2);
  const double e = mu * d;
  const double fact2 = (std::fabs(e) < kEps) ? 1.0 : std::sinh(e) / e;

  double gam1, gam2, gampl, gammi;
  temme_gammas(mu, gam1, gam2, gampl, gammi);

  double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
  double sum = ff;
  const double ee = std::exp(e);
  double p = 0.5 * ee / gampl;
  double q = 0.5 / (ee * gammi);
  double c = 1.0;
  const double d2 = x2 * x2;
  double sum1 = p;

  for (int i = 1; i <= kMaxIter; ++i) {
    ff = (i * ff + p + q) / (i * i - mu * mu);
    c *= d2 / i;
    p /= (i - mu);
    q /= (i + mu);
    const double del = c * ff;
    sum += del;
    sum1 += c * (p - i * ff);
    if (std::fabs(del) < std::fabs(sum) * kEps) break;
  }
  kmu = sum;
  kmu1 = sum1 * (2.0 / x);
}

// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, x > 2, via the CF2 continued
// fraction (Thompson & Barnett / Numerical Recipes scheme).
void bessel_k_large(double mu, double x, double& kmu, double& kmu1) {
  const double mu2 = mu * mu;
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25 - mu2;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;

  for (int i = 2; i <= kMaxIter; ++i) {
    a -= 2 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::fabs(dels / s) < kEps) break;
  }
  h = a1 * h;
  kmu = std::sqrt(kPi / (2.0 * x)) * std::exp(-x) / s;
  kmu1 = kmu * (mu + x + 0.5 - h) / x;
}

}  // namespace

double bessel_k(double nu, double x) {
  if (!(x > 0.0) || !(nu >= 0.0)) {
    throw std::domain_error("bessel_k: requires x > 0 and nu >= 0");
  }
  if (x > 705.0) return 0.0;  // K_nu ~ sqrt(pi/2x) e^-x; underflows

  const int nl = static_cast<int>(nu + 0.5);
  const double mu = nu - nl;  // |mu| <= 1/2

  double kmu, kmu1;
  if (x <= 2.0) {
    bessel_k_small(mu, x, kmu, kmu1);
  } else {
    bessel_k_large(mu, x, kmu, kmu1);
  }

  // Upward recurrence K_{m+1} = K_{m-1} + 2 m / x K_m; stable for K.
  // After i steps kprev = K_{mu+i}, so nl steps land on K_nu.
  double kprev = kmu;
  double kcur = kmu1;
  for (int i = 1; i <= nl; ++i) {
    const double knext = kprev + (2.0 * (mu + i) / x) * kcur;
    kprev = kcur;
    kcur = knext;
    if (!std::isfinite(kprev)) return std::numeric_limits<double>::infinity();
  }
  return kprev;
}

}  // namespace taperkrig

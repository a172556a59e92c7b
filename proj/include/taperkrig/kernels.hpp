#pragma once

#include <optional>
#include <string>

namespace taperkrig {

// Marginal structure of an isotropic covariance model. Units: sill and
// nugget in squared field units, range in coordinate units.
struct CovarianceParams {
  double sill = 1.0;
  double range = 1.0;
  double smoothness = 0.5;
  double nugget = 0.0;

  // Throws std::domain_error unless sill > 0, range > 0, smoothness > 0,
  // nugget >= 0 and everything is finite.
  void validate() const;
};

enum class TaperFamily { Spherical, Wendland1, Wendland2 };

std::string to_string(TaperFamily family);
TaperFamily taper_family_from_string(const std::string& name);

// Compactly supported taper: exactly zero at distances >= range.
struct TaperSpec {
  TaperFamily family = TaperFamily::Spherical;
  double range = 1.0;  // theta

  void validate() const;
};

enum class ModelKind { Matern, TaperedMatern, Wendland };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Matern correlation rho(h) = 2^(1-nu)/Gamma(nu) (h/beta)^nu K_nu(h/beta).
// Half-integer nu in {1/2, 3/2, 5/2} short-circuits to the closed forms
// e^-t, (1+t)e^-t, (1+t+t^2/3)e^-t with t = h/beta.
double matern_corr(double h, double range, double smoothness);

// General Bessel-K route without the half-integer short-circuit; kept
// callable so both routes can be checked against each other.
double matern_corr_bessel(double h, double range, double smoothness);

// Spherical correlation 1 - 1.5 r + 0.5 r^3 on r = h/theta < 1, else 0.
double spherical(double h, double theta);

// Wendland polynomial psi_k(h/theta) for k in {1,2,3} (valid in dimension
// <= 3): psi1 = (1-r)^4 (1+4r), psi2 = (1-r)^6 (1+6r+35r^2/3),
// psi3 = (1-r)^8 (1+8r+25r^2+32r^3); exactly zero for r >= 1.
double wendland(int k, double h, double theta);

// Taper value T(h; spec); exactly zero beyond the taper range.
double taper_value(const TaperSpec& spec, double h);

// Taper family for a Matern smoothness following the bracket rule:
// (0, 0.5] spherical, (0.5, 1.5] Wendland1, (1.5, 2.5] Wendland2.
// Throws std::domain_error outside (0, 2.5].
TaperFamily select_taper(double smoothness);

struct CovarianceModel {
  ModelKind kind = ModelKind::Matern;
  int wendland_order = 1;  // used when kind == Wendland
  CovarianceParams params;
  std::optional<TaperSpec> taper;  // required iff kind == TaperedMatern

  void validate() const;

  // Correlation at distance h (nugget excluded); value(0) = 1.
  double correlation(double h) const;

  // Covariance at distance h: sill * correlation + nugget at h == 0 only.
  double value(double h) const;

  // Distance beyond which the covariance is exactly zero; +infinity for a
  // plain Matern model.
  double support_radius() const;
};

double evaluate_model(const CovarianceModel& model, double h);

// Smallest h with correlation(h) <= 0.05, found by bisection to relative
// tolerance 1e-8. For compact-support models the result is below the
// support radius.
double effective_range(const CovarianceModel& model);

// Effective range of a unit-range Matern with the given smoothness; the
// ratio converts between effective-range guesses and the range parameter.
double matern_effective_range_factor(double smoothness);

}  // namespace taperkrig

#include "taperkrig/kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "taperkrig/bessel.hpp"
#include "taperkrig/errors.hpp"

namespace taperkrig {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const char* msg) {
  if (!ok) throw std::domain_error(msg);
}

}  // namespace

void CovarianceParams::validate() const {
  require(std::isfinite(sill) && sill > 0.0, "CovarianceParams: sill must be positive and finite");
  require(std::isfinite(range) && range > 0.0, "CovarianceParams: range must be positive and finite");
  require(std::isfinite(smoothness) && smoothness > 0.0,
          "CovarianceParams: smoothness must be positive and finite");
  require(std::isfinite(nugget) && nugget >= 0.0,
          "CovarianceParams: nugget must be nonnegative and finite");
}

void TaperSpec::validate() const {
  require(std::isfinite(range) && range > 0.0, "TaperSpec: taper range must be positive and finite");
}

std::string to_string(TaperFamily family) {
  switch (family) {
    case TaperFamily::Spherical: return "spherical";
    case TaperFamily::Wendland1: return "wendland1";
    case TaperFamily::Wendland2: return "wendland2";
  }
  throw std::logic_error("unreachable taper family");
}

TaperFamily taper_family_from_string(const std::string& name) {
  if (name == "spherical") return TaperFamily::Spherical;
  if (name == "wendland1") return TaperFamily::Wendland1;
  if (name == "wendland2") return TaperFamily::Wendland2;
  throw ConfigError("unknown taper family: " + name);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Matern: return "matern";
    case ModelKind::TaperedMatern: return "tapered_matern";
    case ModelKind::Wendland: return "wendland";
  }
  throw std::logic_error("unreachable model kind");
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "matern") return ModelKind::Matern;
  if (name == "tapered_matern") return ModelKind::TaperedMatern;
  if (name == "wendland") return ModelKind::Wendland;
  throw ConfigError("unknown model kind: " + name);
}

double matern_corr_bessel(double h, double range, double smoothness) {
  require(std::isfinite(h) && h >= 0.0, "matern_corr: distance must be nonnegative and finite");
  require(std::isfinite(range) && range > 0.0, "matern_corr: range must be positive and finite");
  require(std::isfinite(smoothness) && smoothness > 0.0,
          "matern_corr: smoothness must be positive and finite");

  const double t = h / range;
  // rho(t) -> 1 - O(t^min(2 nu, 2)); below this threshold the difference
  // from 1 is under double precision for every nu >= 0.05 used here.
  if (t < 1e-10) return 1.0;
  if (t > 690.0) return 0.0;  // e^-t dominates; correlation underflows

  const double nu = smoothness;
  const double log_coeff = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(t);
  const double k = bessel_k(nu, t);
  if (k <= 0.0) return 0.0;
  const double rho = std::exp(log_coeff) * k;
  // Clamp roundoff just above 1 near the origin.
  return rho > 1.0 ? 1.0 : rho;
}

double matern_corr(double h, double range, double smoothness) {
  if (smoothness == 0.5 || smoothness == 1.5 || smoothness == 2.5) {
    require(std::isfinite(h) && h >= 0.0, "matern_corr: distance must be nonnegative and finite");
    require(std::isfinite(range) && range > 0.0, "matern_corr: range must be positive and finite");
    const double t = h / range;
    if (t > 690.0) return 0.0;
    const double e = std::exp(-t);
    if (smoothness == 0.5) return e;
    if (smoothness == 1.5) return (1.0 + t) * e;
    return (1.0 + t + t * t / 3.0) * e;
  }
  return matern_corr_bessel(h, range, smoothness);
}

double spherical(double h, double theta) {
  require(std::isfinite(h) && h >= 0.0, "spherical: distance must be nonnegative and finite");
  require(std::isfinite(theta) && theta > 0.0, "spherical: theta must be positive and finite");
  const double r = h / theta;
  if (r >= 1.0) return 0.0;
  return 1.0 - 1.5 * r + 0.5 * r * r * r;
}

double wendland(int k, double h, double theta) {
  require(std::isfinite(h) && h >= 0.0, "wendland: distance must be nonnegative and finite");
  require(std::isfinite(theta) && theta > 0.0, "wendland: theta must be positive and finite");
  if (k < 1 || k > 3) throw std::domain_error("wendland: order must be 1, 2 or 3");
  const double r = h / theta;
  if (r >= 1.0) return 0.0;
  const double u = 1.0 - r;
  const double u2 = u * u;
  const double u4 = u2 * u2;
  switch (k) {
    case 1:
      return u4 * (1.0 + 4.0 * r);
    case 2:
      return u4 * u2 * (1.0 + 6.0 * r + (35.0 / 3.0) * r * r);
    default:
      return u4 * u4 * (1.0 + 8.0 * r + 25.0 * r * r + 32.0 * r * r * r);
  }
}

double taper_value(const TaperSpec& spec, double h) {
  switch (spec.family) {
    case TaperFamily::Spherical: return spherical(h, spec.range);
    case TaperFamily::Wendland1: return wendland(1, h, spec.range);
    case TaperFamily::Wendland2: return wendland(2, h, spec.range);
  }
  throw std::logic_error("unreachable taper family");
}

TaperFamily select_taper(double smoothness) {
  if (!(smoothness > 0.0) || !(smoothness <= 2.5) || !std::isfinite(smoothness)) {
    throw std::domain_error("select_taper: rule covers smoothness in (0, 2.5] only");
  }
  if (smoothness <= 0.5) return TaperFamily::Spherical;
  if (smoothness <= 1.5) return TaperFamily::Wendland1;
  return TaperFamily::Wendland2;
}

void CovarianceModel::validate() const {
  params.validate();
  switch (kind) {
    case ModelKind::Matern:
      break;
    case ModelKind::TaperedMatern:
      if (!taper) throw ConfigError("TaperedMatern model requires a taper specification");
      taper->validate();
      break;
    case ModelKind::Wendland:
      if (wendland_order < 1 || wendland_order > 3) {
        throw std::domain_error("Wendland model order must be 1, 2 or 3");
      }
      break;
  }
}

double CovarianceModel::correlation(double h) const {
  switch (kind) {
    case ModelKind::Matern:
      return matern_corr(h, params.range, params.smoothness);
    case ModelKind::TaperedMatern: {
      if (!taper) throw ConfigError("TaperedMatern model requires a taper specification");
      const double t = taper_value(*taper, h);
      if (t == 0.0) return 0.0;
      return matern_corr(h, params.range, params.smoothness) * t;
    }
    case ModelKind::Wendland:
      return wendland(wendland_order, h, params.range);
  }
  throw std::logic_error("unreachable model kind");
}

double CovarianceModel::value(double h) const {
  const double c = params.sill * correlation(h);
  return h == 0.0 ? c + params.nugget : c;
}

double CovarianceModel::support_radius() const {
  switch (kind) {
    case ModelKind::Matern:
      return kInf;
    case ModelKind::TaperedMatern:
      if (!taper) throw ConfigError("TaperedMatern model requires a taper specification");
      return taper->range;
    case ModelKind::Wendland:
      return params.range;
  }
  throw std::logic_error("unreachable model kind");
}

double evaluate_model(const CovarianceModel& model, double h) {
  return model.value(h);
}

double effective_range(const CovarianceModel& model) {
  model.validate();
  constexpr double kThreshold = 0.05;

  double hi;
  const double support = model.support_radius();
  if (std::isfinite(support)) {
    hi = support;
  } else {
    hi = model.params.range;
    int guard = 0;
    while (model.correlation(hi) > kThreshold) {
      hi *= 2.0;
      if (++guard > 1100) throw NumericalError("effective_range: no crossing found");
    }
  }

  double lo = 0.0;
  while (hi - lo > 1e-8 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (model.correlation(mid) <= kThreshold) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double matern_effective_range_factor(double smoothness) {
  CovarianceModel unit;
  unit.kind = ModelKind::Matern;
  unit.params = CovarianceParams{1.0, 1.0, smoothness, 0.0};
  return effective_range(unit);
}

}  // namespace taperkrig

#pragma once

namespace rpie {

/// Standard normal density.
double normal_pdf(double x);

/// Standard normal CDF, computed from erfc for accuracy in both tails.
double normal_cdf(double x);

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error about 1.15e-9) followed by
/// one Halley correction step against erfc, which brings the absolute error
/// down to a few ulps on (1e-300, 1 - 1e-16). Throws InvalidParameter outside
/// the open unit interval.
double normal_quantile(double p);

}  // namespace rpie

#pragma once

#include <functional>
#include <limits>

#include "nbfts/rng.hpp"

namespace nbfts {

// Negative-binomial parameters in (dispersion, log-mean) form. The success
// probability is exp(theta) / (r + exp(theta)), so the mean is exp(theta).
struct NBParams {
  double r = 1.0;      // dispersion, > 0
  double theta = 0.0;  // log-mean

  void validate() const;
  double success_prob() const;
};

double nb_log_pmf(long long z, const NBParams& p);
double nb_pmf(long long z, const NBParams& p);

struct NBMoments {
  double mean;
  double variance;
};
NBMoments nb_moments(const NBParams& p);

// Gamma-mixture-of-Poisson draw; exact for all r > 0.
long long sample_nb(const NBParams& p, Rng& rng);

// Strategy knobs for the Polya-Gamma sampler. Defaults: exact Devroye draws
// summed for the integer part up to 64, the fractional part (and shapes in
// the 64..170 band) drawn from the 200-term gamma-convolution series with an
// analytic tail-mean shift, and a moment-matched Gaussian above 170 where
// the CLT error is negligible.
struct PgTuning {
  double gauss_threshold = 170.0;
  int max_exact = 64;
  int series_terms = 200;
};

double pg_mean(double b, double c);
double pg_variance(double b, double c);

// One draw from PG(b, c), b >= 1e-3.
double sample_polya_gamma(double b, double c, Rng& rng,
                          const PgTuning& tuning = PgTuning{});

// One stepping-out/shrinkage slice-sampling transition (Neal 2003) leaving
// the target with log-density `logdensity` invariant on (lo, hi). The
// default support is (0, inf). `width` is the initial bracket size;
// expansion is capped at max_steps total step-outs with a randomized split
// between the two sides.
double slice_sample(const std::function<double(double)>& logdensity, double x0,
                    double width, Rng& rng, double lo = 0.0,
                    double hi = std::numeric_limits<double>::infinity(),
                    int max_steps = 50);

}  // namespace nbfts

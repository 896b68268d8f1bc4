#include "nbfts/count_core.hpp"

#include <cmath>

#include "nbfts/error.hpp"

namespace nbfts {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kPiSq = kPi * kPi;
constexpr double kTwoOverPi = 2.0 / kPi;
constexpr double kLogPi = 1.14472988584940017414342735135306;
constexpr double kLog2OverPi = -0.45158270528945486472619522989488;

inline double logaddexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

}  // namespace

void NBParams::validate() const {
  if (!(r > 0.0) || !std::isfinite(r))
    throw InvalidParameterError("NBParams: dispersion r must be finite and positive");
  if (!std::isfinite(theta))
    throw InvalidParameterError("NBParams: log-mean theta must be finite");
}

double NBParams::success_prob() const {
  return std::exp(theta - logaddexp(theta, std::log(r)));
}

double nb_log_pmf(long long z, const NBParams& p) {
  p.validate();
  if (z < 0) throw InvalidParameterError("nb_log_pmf: count must be nonnegative");
  const double zd = static_cast<double>(z);
  const double log_r = std::log(p.r);
  const double lse = logaddexp(p.theta, log_r);
  return std::lgamma(p.r + zd) - std::lgamma(p.r) - std::lgamma(zd + 1.0) +
         zd * (p.theta - lse) + p.r * (log_r - lse);
}

double nb_pmf(long long z, const NBParams& p) { return std::exp(nb_log_pmf(z, p)); }

NBMoments nb_moments(const NBParams& p) {
  p.validate();
  const double mean = std::exp(p.theta);
  return NBMoments{mean, mean * (1.0 + mean / p.r)};
}

long long sample_nb(const NBParams& p, Rng& rng) {
  p.validate();
  // Z | lambda ~ Poisson(lambda), lambda ~ Gamma(r, rate r e^{-theta}) gives
  // the NB marginal with mean exp(theta).
  const double g = rng.gamma(p.r, 1.0);
  const double lambda = std::exp(p.theta + std::log(g) - std::log(p.r));
  if (!std::isfinite(lambda))
    throw InvalidStateError("sample_nb: Poisson mean overflowed");
  return rng.poisson(lambda);
}

namespace {

// --- exact PG(1, c) sampler, Polson-Scott-Windle / Devroye scheme ---

// Piecewise coefficients a_n(x) of the alternating series for the J*(1)
// density (Windle 2013, eqs. 2.14-2.15).
double pg_aterm(int n, double x, double t) {
  const double h = n + 0.5;
  double f;
  if (x <= t)
    f = kLogPi + std::log(h) + 1.5 * (kLog2OverPi - std::log(x)) - 2.0 * h * h / x;
  else
    f = kLogPi + std::log(h) - 0.5 * x * kPiSq * h * h;
  return std::exp(f);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Sample from a gamma-type envelope restricted to [pi/2, inf).
double pg_truncgamma(Rng& rng) {
  const double c = kPi / 2.0;
  for (;;) {
    const double x = 2.0 * rng.exponential() + c;
    const double g = std::sqrt(kPi / (2.0 * x));
    if (rng.uniform() <= g) return x;
  }
}

double pg_randinvg(double mu, Rng& rng) {
  const double u = rng.normal();
  const double v = u * u;
  double out = mu + 0.5 * mu * (mu * v - std::sqrt(4.0 * mu * v + mu * mu * v * v));
  if (rng.uniform() > mu / (mu + out)) out = mu * mu / out;
  return out;
}

// Inverse-Gaussian(1/z) truncated to (0, t].
double pg_tinvgauss(double z, double t, Rng& rng) {
  const double mu = 1.0 / z;
  if (!(mu <= t)) {
    // covers z == 0 (mu infinite)
    for (;;) {
      const double x = 1.0 / pg_truncgamma(rng);
      if (std::log(rng.uniform_pos()) < -0.5 * z * z * x) return x;
    }
  }
  double x = t + 1.0;
  while (x >= t) x = pg_randinvg(mu, rng);
  return x;
}

double pg_draw_exact_1(double c, Rng& rng) {
  const double z = 0.5 * std::fabs(c);
  const double t = kTwoOverPi;
  const double big_k = 0.5 * z * z + kPiSq / 8.0;
  // mixture weight of the truncated-exponential piece of the envelope
  const double log_a = std::log(4.0) - kLogPi - z;
  const double kt = big_k * t;
  const double w = std::sqrt(kPi / 2.0);
  const double f1 = std::exp(log_a + kt) * big_k * std_normal_cdf(w * (t * z - 1.0));
  const double f2 = std::exp(log_a + 2.0 * z + kt) * big_k * std_normal_cdf(-w * (t * z + 1.0));
  const double ratio = 1.0 / (1.0 + f1 + f2);

  for (;;) {
    double x;
    if (rng.uniform() < ratio)
      x = t + rng.exponential() / big_k;
    else
      x = pg_tinvgauss(z, t, rng);

    double sn = pg_aterm(0, x, t);
    const double u = rng.uniform() * sn;
    int n = 1;
    double sign = -1.0;
    bool even = false;
    for (;;) {
      sn += sign * pg_aterm(n, x, t);
      if (!even && u <= sn) return 0.25 * x;
      if (even && u > sn) break;
      even = !even;
      sign = -sign;
      ++n;
    }
  }
}

// Truncated convolution-of-gammas representation
//   PG(s, c) = (1 / 2 pi^2) sum_k Gamma(s, 1) / ((k - 1/2)^2 + c^2 / 4 pi^2)
// with the truncated tail replaced by its mean.
double pg_draw_series(double shape, double c, int terms, Rng& rng) {
  const double a = c * c / (4.0 * kPiSq);
  double sum = 0.0;
  for (int k = 1; k <= terms; ++k) {
    const double h = k - 0.5;
    sum += rng.gamma(shape, 1.0) / (h * h + a);
  }
  double tail;
  if (a > 1e-12)
    tail = (kPi / 2.0 - std::atan(terms / std::sqrt(a))) / std::sqrt(a);
  else
    tail = 1.0 / terms;
  return (sum + shape * tail) / (2.0 * kPiSq);
}

}  // namespace

double pg_mean(double b, double c) {
  const double ac = std::fabs(c);
  if (ac < 1e-4) return 0.25 * b * (1.0 - c * c / 12.0);
  return 0.5 * b * std::tanh(0.5 * c) / c;
}

double pg_variance(double b, double c) {
  const double ac = std::fabs(c);
  if (ac < 1e-3) return b / 24.0 * (1.0 - 0.2 * c * c);
  const double h = 0.5 * ac;
  const double th = std::tanh(h);
  return b * (th - h * (1.0 - th * th)) / (2.0 * ac * ac * ac);
}

double sample_polya_gamma(double b, double c, Rng& rng, const PgTuning& tuning) {
  if (!(b >= 1e-3) || !std::isfinite(b) || !std::isfinite(c))
    throw InvalidParameterError("sample_polya_gamma: need finite c and b >= 1e-3");
  if (b > tuning.gauss_threshold) {
    const double draw = rng.normal(pg_mean(b, c), std::sqrt(pg_variance(b, c)));
    return draw > 0.0 ? draw : std::numeric_limits<double>::min();
  }
  const int n_exact = static_cast<int>(std::floor(b));
  if (n_exact > tuning.max_exact) return pg_draw_series(b, c, tuning.series_terms, rng);
  double sum = 0.0;
  for (int i = 0; i < n_exact; ++i) sum += pg_draw_exact_1(c, rng);
  const double frac = b - n_exact;
  if (frac > 1e-12) sum += pg_draw_series(frac, c, tuning.series_terms, rng);
  return sum;
}

double slice_sample(const std::function<double(double)>& logdensity, double x0,
                    double width, Rng& rng, double lo, double hi, int max_steps) {
  if (!(width > 0.0)) throw InvalidParameterError("slice_sample: width must be positive");
  if (!(x0 > lo && x0 < hi))
    throw InvalidStateError("slice_sample: x0 outside the support interval");
  auto eval = [&](double x) {
    if (x <= lo || x >= hi) return -std::numeric_limits<double>::infinity();
    return logdensity(x);
  };
  const double f0 = eval(x0);
  if (!std::isfinite(f0))
    throw InvalidStateError("slice_sample: log-density not finite at x0");
  const double logy = f0 + std::log(rng.uniform_pos());

  double left = x0 - rng.uniform() * width;
  double right = left + width;
  int j = static_cast<int>(std::floor(max_steps * rng.uniform()));
  int k = max_steps - 1 - j;
  while (j-- > 0 && eval(left) > logy) left -= width;
  while (k-- > 0 && eval(right) > logy) right += width;
  if (left < lo) left = lo;
  if (right > hi) right = hi;

  for (int iter = 0; iter < 1000; ++iter) {
    const double x1 = left + rng.uniform() * (right - left);
    if (eval(x1) > logy) return x1;
    if (x1 < x0)
      left = x1;
    else if (x1 > x0)
      right = x1;
    else
      return x0;
  }
  return x0;
}

}  // namespace nbfts

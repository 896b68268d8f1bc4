#pragma once

#include <cstdint>

namespace nbfts {

// Addressable random stream: identical (seed, stream) always reproduces the
// same draw sequence, and distinct streams are statistically independent, so
// per-cell work can be farmed out deterministically.
struct RngHandle {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// xoshiro256++ engine seeded through splitmix64 from an RngHandle. All
// distribution samplers are implemented in-house so that results are
// bit-identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(RngHandle h);
  Rng(std::uint64_t seed, std::uint64_t stream) : Rng(RngHandle{seed, stream}) {}

  // Derived stream for a child task; deterministic in (handle, child_id).
  Rng fork(std::uint64_t child_id) const;
  RngHandle handle() const { return handle_; }

  std::uint64_t next_u64();
  // Uniform on [0,1) and (0,1].
  double uniform();
  double uniform_pos();
  double uniform(double lo, double hi);
  // Uniform integer in [0, bound), bound >= 1.
  std::uint64_t uniform_below(std::uint64_t bound);

  double normal();                       // standard normal, Marsaglia polar
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double exponential();                  // rate 1
  double gamma(double shape, double rate);
  double inverse_gamma(double shape, double scale) {
    return scale > 0 ? 1.0 / gamma(shape, scale) : 0.0;
  }
  double beta(double a, double b);
  double chisq(double df) { return gamma(0.5 * df, 0.5); }
  long long poisson(double mean);

 private:
  std::uint64_t s_[4];
  RngHandle handle_;
};

}  // namespace nbfts

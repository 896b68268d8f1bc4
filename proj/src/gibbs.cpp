#include "nbfts/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "nbfts/error.hpp"

namespace nbfts {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::NB: return "nb";
    case Variant::Pois: return "pois";
    case Variant::Gauss: return "gauss";
  }
  return "nb";
}

Variant variant_from_name(const std::string& name) {
  if (name == "nb") return Variant::NB;
  if (name == "pois") return Variant::Pois;
  if (name == "gauss") return Variant::Gauss;
  throw InvalidInputError("unknown variant '" + name + "' (nb|pois|gauss)");
}

void FitConfig::validate() const {
  if (K < 1) throw InvalidParameterError("FitConfig: K must be >= 1");
  if (iterations <= 0 || burn_in < 0 || burn_in >= iterations)
    throw InvalidParameterError("FitConfig: need 0 <= burn_in < iterations");
  if (thin < 1) throw InvalidParameterError("FitConfig: thin must be >= 1");
  if (stored_draws() < 1)
    throw InvalidParameterError("FitConfig: no draws survive burn-in/thinning");
  if (r_fixed && !(*r_fixed > 0.0))
    throw InvalidParameterError("FitConfig: r_fixed must be positive");
  if (L_m != 0 && L_m < 4) throw InvalidParameterError("FitConfig: L_m must be >= 4");
  if (!(r_prior_scale > 0.0) || !(r_init > 0.0))
    throw InvalidParameterError("FitConfig: dispersion scale/init must be positive");
}

std::optional<double> FitConfig::effective_r_fixed() const {
  if (variant == Variant::Pois) return r_fixed ? r_fixed : std::optional<double>(1000.0);
  return r_fixed;
}

Eigen::MatrixXd gauss_input_surface(const CountPanel& panel) {
  Eigen::MatrixXd y(panel.n(), panel.m());
  for (int i = 0; i < panel.n(); ++i)
    for (int j = 0; j < panel.m(); ++j)
      y(i, j) = panel.is_observed(i, j)
                    ? std::sqrt(panel.counts(i, j) / panel.offsets(i, j))
                    : std::numeric_limits<double>::quiet_NaN();
  return y;
}

namespace {

int resolve_threads(int requested, int n_rows) {
  int t = requested;
  if (t <= 0) {
    if (const char* env = std::getenv("NBFTS_THREADS")) t = std::atoi(env);
    if (t <= 0) t = 1;
  }
  return std::max(1, std::min(t, n_rows));
}

// Stream ids for per-cell blocks: deterministic in (iteration, block, row)
// and independent of the thread count. The master chain uses stream 0.
std::uint64_t row_stream(int iter, int block, int row) {
  return (static_cast<std::uint64_t>(iter) + 1) << 22 |
         static_cast<std::uint64_t>(block) << 18 | static_cast<std::uint64_t>(row);
}

template <typename Fn>
void for_each_row(int n_rows, int threads, std::uint64_t seed, int iter, int block,
                  Fn&& fn) {
  if (threads <= 1) {
    for (int i = 0; i < n_rows; ++i) {
      Rng rng(seed, row_stream(iter, block, i));
      fn(i, rng);
    }
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      for (int i = t; i < n_rows; i += threads) {
        Rng rng(seed, row_stream(iter, block, i));
        fn(i, rng);
      }
    });
  }
  for (auto& th : pool) th.join();
}

struct PanelChecks {
  int n, m;
};

PanelChecks check_panel(const CountPanel& panel) {
  panel.validate();
  const int n = panel.n(), m = panel.m();
  int rows_with_data = 0;
  for (int i = 0; i < n; ++i) {
    bool any = false;
    for (int j = 0; j < m; ++j) any = any || panel.is_observed(i, j);
    rows_with_data += any ? 1 : 0;
  }
  if (rows_with_data < 2)
    throw InvalidInputError("fit: need at least 2 rows with observations");
  for (int j = 0; j < m; ++j) {
    bool any = false;
    for (int i = 0; i < n; ++i) any = any || panel.is_observed(i, j);
    if (!any)
      throw InvalidInputError("fit: column " + std::to_string(j + 1) +
                              " has no observed cells");
  }
  return PanelChecks{n, m};
}

// Column means over observed entries; used to fill missing cells at warm start.
void fill_missing_with_col_means(Eigen::MatrixXd& mat, const MaskMatrix& observed) {
  const int n = static_cast<int>(mat.rows());
  const int m = static_cast<int>(mat.cols());
  for (int j = 0; j < m; ++j) {
    double sum = 0.0;
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      if (observed(i, j)) {
        sum += mat(i, j);
        ++cnt;
      }
    const double mean = cnt > 0 ? sum / cnt : 0.0;
    for (int i = 0; i < n; ++i)
      if (!observed(i, j)) mat(i, j) = mean;
  }
}

struct ChainState {
  SplineBasis basis;
  FactorState factors;
  DynamicCoefficients dyn;
  std::optional<RegressionBlock> reg;
  double sigma_eps = 1.0;
  double r = 5.0;
};

// Moment-based warm start shared by all variants: SVD factors + projection.
void init_factors_and_dyn(const Eigen::MatrixXd& latent, const FitConfig& cfg,
                          ChainState& st) {
  const int kk = cfg.K;
  Eigen::MatrixXd centered = latent;
  const Eigen::RowVectorXd col_means = centered.colwise().mean();
  centered.rowwise() -= col_means;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  Eigen::MatrixXd f_raw = svd.matrixV().leftCols(kk);
  if (f_raw.cols() < kk) throw InvalidInputError("fit: K exceeds panel rank");
  st.factors.F = orthonormalize(f_raw);
  st.factors.Psi =
      st.basis.B.colPivHouseholderQr().solve(st.factors.F);
  st.factors.lambda_f = Eigen::VectorXd::Ones(kk);

  st.dyn = DynamicCoefficients::make(static_cast<int>(latent.rows()), kk);
  st.dyn.beta = latent * st.factors.F;
  st.dyn.mu = st.dyn.beta.colwise().mean();
  st.dyn.nu_eta = 10.0;
  // start the white-noise scale at the warm-start residual level; starting
  // it far too high lets the Gaussian layer swallow the count overdispersion
  // and strands the dispersion parameter at the Poisson limit
  const Eigen::MatrixXd resid = latent - st.dyn.beta * st.factors.F.transpose();
  const double resid_sd =
      std::sqrt(resid.squaredNorm() / std::max<int>(1, resid.size() - 1));
  st.sigma_eps = std::min(1.0, std::max(0.05, resid_sd));
  if (cfg.regression_design) {
    if (cfg.regression_design->rows() != latent.rows())
      throw InvalidInputError("fit: regression design rows must match panel rows");
    st.reg = RegressionBlock::make(*cfg.regression_design, kk);
  }
}

void gaussian_block(const Eigen::MatrixXd& latent, const FitConfig& cfg,
                    ChainState& st, Rng& rng) {
  backfit_factors(latent, st.dyn.beta, st.basis, st.factors, st.sigma_eps, rng,
                  cfg.lambda_f_prior_shape, cfg.lambda_f_prior_rate);
  const Eigen::MatrixXd projected = latent * st.factors.F;
  ArUpdateOptions ar_opts;
  ar_opts.phi_prior_a = cfg.phi_prior_a;
  ar_opts.phi_prior_b = cfg.phi_prior_b;
  if (st.reg) {
    update_regression(projected, *st.reg, st.dyn, st.sigma_eps, rng);
    update_ar_params(st.dyn.beta - st.reg->X * st.reg->alpha, st.dyn, rng, ar_opts);
  } else {
    st.dyn.beta = ffbs_coefficients(projected, st.dyn, st.sigma_eps, rng);
    update_ar_params(st.dyn.beta, st.dyn, rng, ar_opts);
  }
  const double sse = (latent - st.dyn.beta * st.factors.F.transpose()).squaredNorm();
  const double n_cells = static_cast<double>(latent.size());
  const double s2 = rng.inverse_gamma(cfg.sigma_eps_prior_shape + 0.5 * n_cells,
                                      cfg.sigma_eps_prior_rate + 0.5 * sse);
  st.sigma_eps = std::sqrt(s2);
}

StoredDraw snapshot_state(const ChainState& st, bool gauss) {
  StoredDraw d;
  d.F = st.factors.F;
  d.beta = st.dyn.beta;
  d.mu = st.dyn.mu;
  d.phi = st.dyn.phi;
  d.sigma_eta = st.dyn.sigma_eta_sq().cwiseSqrt();
  d.lambda_f = st.factors.lambda_f;
  d.sigma_eps = st.sigma_eps;
  d.r = gauss ? std::numeric_limits<double>::quiet_NaN() : st.r;
  if (st.reg) d.alpha = st.reg->alpha;
  return d;
}

DrawStore fit_count_variant(const CountPanel& panel, const FitConfig& cfg) {
  const auto [n, m] = check_panel(panel);
  const int threads = resolve_threads(cfg.threads, n);
  const std::optional<double> r_fixed = cfg.effective_r_fixed();

  ChainState st;
  st.basis = build_spline_basis(
      Eigen::VectorXd::LinSpaced(m, 0.0, static_cast<double>(m - 1)),
      cfg.L_m > 0 ? cfg.L_m : default_basis_size(m));
  st.r = r_fixed ? *r_fixed : cfg.r_init;
  st.sigma_eps = 1.0;

  const Eigen::MatrixXd offsets_log = panel.offsets.array().log().matrix();

  // warm start: theta = log(Z+1) scaled by the offset, missing at col means
  Eigen::MatrixXd latent0(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      latent0(i, j) = panel.is_observed(i, j)
                          ? std::log((panel.counts(i, j) + 1.0) / panel.offsets(i, j))
                          : 0.0;
  fill_missing_with_col_means(latent0, panel.observed);
  init_factors_and_dyn(latent0, cfg, st);

  Eigen::MatrixXd theta = offsets_log + latent0;
  Eigen::MatrixXd xi = Eigen::MatrixXd::Ones(n, m);
  CountMatrix z = panel.counts;

  Rng master(cfg.seed, 0);
  // iteration-0 imputation from the warm-start theta
  for_each_row(n, threads, cfg.seed, 0, 0, [&](int i, Rng& rng) {
    for (int j = 0; j < m; ++j)
      if (!panel.is_observed(i, j))
        z(i, j) = sample_nb(NBParams{st.r, theta(i, j)}, rng);
  });

  DrawStore store;
  store.variant = cfg.variant;
  store.n = n;
  store.m = m;
  store.K = cfg.K;
  store.seed = cfg.seed;
  store.iterations = cfg.iterations;
  store.burn_in = cfg.burn_in;
  store.thin = cfg.thin;
  store.observed = panel.observed;
  store.states.reserve(cfg.stored_draws());
  store.predictive.reserve(cfg.stored_draws());
  store.mean_exp_theta = Eigen::MatrixXd::Zero(n, m);
  store.mean_cond_formula = Eigen::MatrixXd::Zero(n, m);

  std::vector<double> trace_r, trace_sigma;
  Eigen::MatrixXd lgamma_z1(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) lgamma_z1(i, j) = std::lgamma(z(i, j) + 1.0);

  const bool update_r = cfg.variant == Variant::NB && !r_fixed;
  const double n_cells = static_cast<double>(n) * m;

  for (int it = 0; it < cfg.iterations; ++it) {
    // 1. imputation of unobserved cells at the current (r, theta)
    if (it > 0) {
      for_each_row(n, threads, cfg.seed, it, 0, [&](int i, Rng& rng) {
        for (int j = 0; j < m; ++j)
          if (!panel.is_observed(i, j)) {
            z(i, j) = sample_nb(NBParams{st.r, theta(i, j)}, rng);
            lgamma_z1(i, j) = std::lgamma(z(i, j) + 1.0);
          }
      });
    }

    // 2. dispersion slice step under the half-Cauchy prior
    if (update_r) {
      Eigen::MatrixXd exp_theta = theta.array().exp().matrix();
      auto loglik = [&](double lr) {
        const double r = std::exp(lr);
        double ll = n_cells * (r * lr - std::lgamma(r));
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) {
            const double zv = static_cast<double>(z(i, j));
            ll += std::lgamma(r + zv) - lgamma_z1(i, j);
            ll -= (zv + r) * std::log(r + exp_theta(i, j));
            ll += zv * theta(i, j);
          }
        // half-Cauchy(0, scale) prior plus the log-scale Jacobian
        ll += -std::log1p((r / cfg.r_prior_scale) * (r / cfg.r_prior_scale)) + lr;
        return ll;
      };
      // support capped at 1e8: beyond that the model is numerically Poisson
      // and the lgamma differences in the likelihood lose precision
      const double lr = slice_sample(loglik, std::log(st.r), 1.0, master,
                                     std::log(1e-3), std::log(1e8));
      st.r = std::exp(lr);
    }

    // 3. Polya-Gamma parameter expansion
    for_each_row(n, threads, cfg.seed, it, 1, [&](int i, Rng& rng) {
      for (int j = 0; j < m; ++j)
        xi(i, j) = update_xi(static_cast<double>(z(i, j)), st.r, theta(i, j), rng,
                             cfg.pg);
    });

    // 4. latent process update
    const Eigen::MatrixXd mu_surface =
        st.dyn.beta * st.factors.F.transpose();
    for_each_row(n, threads, cfg.seed, it, 2, [&](int i, Rng& rng) {
      for (int j = 0; j < m; ++j) {
        ThetaCell cell{static_cast<double>(z(i, j)), st.r, xi(i, j),
                       mu_surface(i, j), offsets_log(i, j)};
        theta(i, j) = update_theta(cell, st.sigma_eps, rng);
      }
    });

    // 5. Gaussian functional-data block on theta - log E
    const Eigen::MatrixXd latent = theta - offsets_log;
    gaussian_block(latent, cfg, st, master);

    if (it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0) {
      store.states.push_back(snapshot_state(st, false));
      CountMatrix pred = z;
      for_each_row(n, threads, cfg.seed, it, 3, [&](int i, Rng& rng) {
        for (int j = 0; j < m; ++j)
          if (!panel.is_observed(i, j))
            pred(i, j) = sample_nb(NBParams{st.r, theta(i, j)}, rng);
      });
      store.predictive.push_back(std::move(pred));

      store.mean_exp_theta += theta.array().exp().matrix();
      const Eigen::MatrixXd fitted = st.dyn.beta * st.factors.F.transpose();
      store.mean_cond_formula +=
          ((offsets_log + fitted).array() + 0.5 * st.sigma_eps * st.sigma_eps)
              .exp()
              .matrix();
      trace_r.push_back(st.r);
      trace_sigma.push_back(st.sigma_eps);
    }
  }

  const double stored = static_cast<double>(store.stored());
  store.mean_exp_theta /= stored;
  store.mean_cond_formula /= stored;
  store.ess_r = effective_sample_size(trace_r);
  store.ess_sigma_eps = effective_sample_size(trace_sigma);
  return store;
}

DrawStore fit_gauss_variant(const CountPanel& panel, const FitConfig& cfg) {
  const auto [n, m] = check_panel(panel);
  const int threads = resolve_threads(cfg.threads, n);

  ChainState st;
  st.basis = build_spline_basis(
      Eigen::VectorXd::LinSpaced(m, 0.0, static_cast<double>(m - 1)),
      cfg.L_m > 0 ? cfg.L_m : default_basis_size(m));
  st.sigma_eps = 1.0;

  Eigen::MatrixXd y(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      y(i, j) = panel.is_observed(i, j)
                    ? std::sqrt(panel.counts(i, j) / panel.offsets(i, j))
                    : 0.0;
  fill_missing_with_col_means(y, panel.observed);
  init_factors_and_dyn(y, cfg, st);

  DrawStore store;
  store.variant = Variant::Gauss;
  store.n = n;
  store.m = m;
  store.K = cfg.K;
  store.seed = cfg.seed;
  store.iterations = cfg.iterations;
  store.burn_in = cfg.burn_in;
  store.thin = cfg.thin;
  store.observed = panel.observed;
  store.states.reserve(cfg.stored_draws());
  store.predictive.reserve(cfg.stored_draws());

  Rng master(cfg.seed, 0);
  std::vector<double> trace_sigma;

  for (int it = 0; it < cfg.iterations; ++it) {
    // conjugate imputation of missing surface values
    const Eigen::MatrixXd mu_surface = st.dyn.beta * st.factors.F.transpose();
    for_each_row(n, threads, cfg.seed, it, 0, [&](int i, Rng& rng) {
      for (int j = 0; j < m; ++j)
        if (!panel.is_observed(i, j))
          y(i, j) = rng.normal(mu_surface(i, j), st.sigma_eps);
    });

    gaussian_block(y, cfg, st, master);

    if (it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0) {
      store.states.push_back(snapshot_state(st, true));
      // predictive counts from the posterior draw of the smooth surface,
      // floored at zero before squaring
      CountMatrix pred = panel.counts;
      const Eigen::MatrixXd fitted = st.dyn.beta * st.factors.F.transpose();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          if (!panel.is_observed(i, j)) {
            const double y = std::max(fitted(i, j), 0.0);
            pred(i, j) = std::llround(panel.offsets(i, j) * y * y);
          }
      store.predictive.push_back(std::move(pred));
      trace_sigma.push_back(st.sigma_eps);
    }
  }
  store.ess_sigma_eps = effective_sample_size(trace_sigma);
  store.ess_r = std::numeric_limits<double>::quiet_NaN();
  return store;
}

}  // namespace

DrawStore fit(const CountPanel& panel, const FitConfig& cfg) {
  cfg.validate();
  if (cfg.variant == Variant::Gauss) return fit_gauss_variant(panel, cfg);
  return fit_count_variant(panel, cfg);
}

DrawStore fit_gauss(const CountPanel& panel, FitConfig cfg) {
  cfg.variant = Variant::Gauss;
  return fit(panel, cfg);
}

std::vector<std::vector<long long>> posterior_predictive_cells(
    const DrawStore& store, const std::vector<std::pair<int, int>>& cells) {
  std::vector<std::vector<long long>> out;
  out.reserve(cells.size());
  for (const auto& [i, j] : cells) {
    if (i < 0 || j < 0 || i >= store.n || j >= store.m)
      throw OutOfBoundsError("posterior_predictive_cells: cell out of bounds");
    std::vector<long long> draws;
    draws.reserve(store.predictive.size());
    for (const auto& pred : store.predictive) draws.push_back(pred(i, j));
    out.push_back(std::move(draws));
  }
  return out;
}

double quantile_interpolated(std::vector<double> values, double q) {
  if (values.empty())
    throw InvalidInputError("quantile_interpolated: empty input");
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * q;
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= values.size()) return values.back();
  return values[i] + (h - i) * (values[i + 1] - values[i]);
}

PredictiveSummary predictive_summary(const std::vector<long long>& draws,
                                     double level) {
  if (draws.empty()) throw InvalidInputError("predictive_summary: empty draws");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidParameterError("predictive_summary: level must be in (0,1)");
  std::vector<double> vals(draws.begin(), draws.end());
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= vals.size();
  const double lo = quantile_interpolated(vals, 0.5 * (1.0 - level));
  const double hi = quantile_interpolated(vals, 1.0 - 0.5 * (1.0 - level));
  return PredictiveSummary{mean, static_cast<long long>(std::floor(lo)),
                           static_cast<long long>(std::ceil(hi))};
}

double effective_sample_size(const std::vector<double>& chain) {
  const int n = static_cast<int>(chain.size());
  if (n < 4) return n;
  double mean = 0.0;
  for (double v : chain) mean += v;
  mean /= n;
  double c0 = 0.0;
  for (double v : chain) c0 += (v - mean) * (v - mean);
  c0 /= n;
  if (!(c0 > 0.0)) return n;
  auto autocov = [&](int t) {
    double c = 0.0;
    for (int i = 0; i + t < n; ++i) c += (chain[i] - mean) * (chain[i + t] - mean);
    return c / n;
  };
  double rho_sum = 0.0;
  for (int t = 1; t + 1 < n; t += 2) {
    const double pair = autocov(t) + autocov(t + 1);
    if (pair <= 0.0) break;
    rho_sum += pair / c0;
  }
  const double ess = n / (1.0 + 2.0 * rho_sum);
  return std::min(ess, static_cast<double>(n));
}

}  // namespace nbfts

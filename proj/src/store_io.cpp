#include "nbfts/store_io.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "nbfts/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "DrawStore binary tables are little-endian");

namespace nbfts {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct TableSpec {
  std::string name;
  std::string dtype;  // "f64" | "i64"
  std::int64_t rows;
  std::int64_t row_length;
};

void write_doubles(std::ofstream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

void write_ints(std::ofstream& out, const long long* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(long long)));
}

// row-major flattening of an Eigen matrix
template <typename Mat>
std::vector<double> flatten_f64(const Mat& mat) {
  std::vector<double> out;
  out.reserve(mat.size());
  for (int i = 0; i < mat.rows(); ++i)
    for (int j = 0; j < mat.cols(); ++j) out.push_back(static_cast<double>(mat(i, j)));
  return out;
}

void save_table_f64(const fs::path& dir, const std::string& name,
                    const std::vector<std::vector<double>>& rows,
                    std::vector<TableSpec>& specs) {
  std::ofstream out(dir / (name + ".bin"), std::ios::binary);
  if (!out) throw IoError("cannot write table " + name);
  std::int64_t row_length = rows.empty() ? 0 : static_cast<std::int64_t>(rows[0].size());
  for (const auto& row : rows) write_doubles(out, row.data(), row.size());
  if (!out) throw IoError("failed writing table " + name);
  specs.push_back({name, "f64", static_cast<std::int64_t>(rows.size()), row_length});
}

void save_table_i64(const fs::path& dir, const std::string& name,
                    const std::vector<std::vector<long long>>& rows,
                    std::vector<TableSpec>& specs) {
  std::ofstream out(dir / (name + ".bin"), std::ios::binary);
  if (!out) throw IoError("cannot write table " + name);
  std::int64_t row_length = rows.empty() ? 0 : static_cast<std::int64_t>(rows[0].size());
  for (const auto& row : rows) write_ints(out, row.data(), row.size());
  if (!out) throw IoError("failed writing table " + name);
  specs.push_back({name, "i64", static_cast<std::int64_t>(rows.size()), row_length});
}

std::vector<double> load_f64(const fs::path& file, std::size_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open table " + file.string());
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
    throw InvalidInputError("table " + file.string() + " is truncated");
  return data;
}

std::vector<long long> load_i64(const fs::path& file, std::size_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open table " + file.string());
  std::vector<long long> data(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * sizeof(long long)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(long long))
    throw InvalidInputError("table " + file.string() + " is truncated");
  return data;
}

ordered_json read_metadata(const fs::path& dir) {
  std::ifstream in(dir / "metadata.json");
  if (!in) throw IoError("cannot open metadata.json in " + dir.string());
  ordered_json meta;
  try {
    in >> meta;
  } catch (const std::exception& e) {
    throw InvalidInputError(std::string("metadata.json parse error: ") + e.what());
  }
  return meta;
}

}  // namespace

void save_drawstore(const DrawStore& store, const std::string& dir_in) {
  const fs::path dir(dir_in);
  fs::create_directories(dir);
  const int stored = store.stored();
  const int p = stored > 0 ? static_cast<int>(store.states[0].alpha.rows()) : 0;

  std::vector<TableSpec> specs;
  auto per_state_f64 = [&](const std::string& name, auto&& extract) {
    std::vector<std::vector<double>> rows;
    rows.reserve(stored);
    for (const auto& st : store.states) rows.push_back(extract(st));
    save_table_f64(dir, name, rows, specs);
  };

  per_state_f64("F", [](const StoredDraw& s) { return flatten_f64(s.F); });
  per_state_f64("beta", [](const StoredDraw& s) { return flatten_f64(s.beta); });
  per_state_f64("mu", [](const StoredDraw& s) { return flatten_f64(s.mu); });
  per_state_f64("phi", [](const StoredDraw& s) { return flatten_f64(s.phi); });
  per_state_f64("sigma_eta",
                [](const StoredDraw& s) { return flatten_f64(s.sigma_eta); });
  per_state_f64("lambda_f",
                [](const StoredDraw& s) { return flatten_f64(s.lambda_f); });
  per_state_f64("sigma_eps", [](const StoredDraw& s) {
    return std::vector<double>{s.sigma_eps};
  });
  per_state_f64("r", [](const StoredDraw& s) { return std::vector<double>{s.r}; });
  if (p > 0)
    per_state_f64("alpha", [](const StoredDraw& s) { return flatten_f64(s.alpha); });

  {
    std::vector<std::vector<long long>> rows;
    rows.reserve(stored);
    for (const auto& pred : store.predictive) {
      std::vector<long long> row;
      row.reserve(pred.size());
      for (int i = 0; i < pred.rows(); ++i)
        for (int j = 0; j < pred.cols(); ++j) row.push_back(pred(i, j));
      rows.push_back(std::move(row));
    }
    save_table_i64(dir, "predictive", rows, specs);
  }
  {
    std::vector<std::vector<long long>> rows(1);
    rows[0].reserve(store.observed.size());
    for (int i = 0; i < store.observed.rows(); ++i)
      for (int j = 0; j < store.observed.cols(); ++j)
        rows[0].push_back(store.observed(i, j));
    save_table_i64(dir, "observed", rows, specs);
  }
  save_table_f64(dir, "mean_exp_theta", {flatten_f64(store.mean_exp_theta)}, specs);
  save_table_f64(dir, "mean_cond_formula", {flatten_f64(store.mean_cond_formula)},
                 specs);

  ordered_json meta;
  meta["format_version"] = 1;
  meta["byte_order"] = "little";
  meta["variant"] = variant_name(store.variant);
  meta["n"] = store.n;
  meta["m"] = store.m;
  meta["K"] = store.K;
  meta["seed"] = store.seed;
  meta["iterations"] = store.iterations;
  meta["burn_in"] = store.burn_in;
  meta["thin"] = store.thin;
  meta["stored"] = stored;
  meta["regression_predictors"] = p;
  meta["ess_r"] = std::isnan(store.ess_r) ? -1.0 : store.ess_r;
  meta["ess_sigma_eps"] =
      std::isnan(store.ess_sigma_eps) ? -1.0 : store.ess_sigma_eps;
  ordered_json tables = ordered_json::array();
  for (const auto& spec : specs) {
    ordered_json t;
    t["name"] = spec.name;
    t["dtype"] = spec.dtype;
    t["rows"] = spec.rows;
    t["row_length"] = spec.row_length;
    tables.push_back(t);
  }
  meta["tables"] = tables;

  std::ofstream out(dir / "metadata.json");
  if (!out) throw IoError("cannot write metadata.json in " + dir.string());
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("failed writing metadata.json");
}

void validate_drawstore(const std::string& dir_in) {
  const fs::path dir(dir_in);
  const ordered_json meta = read_metadata(dir);
  for (const char* key :
       {"format_version", "byte_order", "variant", "n", "m", "K", "seed",
        "iterations", "burn_in", "thin", "stored", "tables"})
    if (!meta.contains(key))
      throw InvalidInputError(std::string("metadata.json missing key ") + key);
  if (meta["byte_order"] != "little")
    throw InvalidInputError("DrawStore byte order must be little-endian");
  for (const auto& t : meta["tables"]) {
    const std::string name = t["name"];
    const std::string dtype = t["dtype"];
    const std::int64_t rows = t["rows"];
    const std::int64_t row_length = t["row_length"];
    if (dtype != "f64" && dtype != "i64")
      throw InvalidInputError("unknown dtype for table " + name);
    const fs::path file = dir / (name + ".bin");
    if (!fs::exists(file)) throw InvalidInputError("missing table file " + name);
    const std::uintmax_t expected =
        static_cast<std::uintmax_t>(rows) * row_length * 8;
    if (fs::file_size(file) != expected)
      throw InvalidInputError("table " + name + " has wrong size");
  }
}

DrawStore load_drawstore(const std::string& dir_in) {
  validate_drawstore(dir_in);
  const fs::path dir(dir_in);
  const ordered_json meta = read_metadata(dir);

  DrawStore store;
  store.variant = variant_from_name(meta["variant"].get<std::string>());
  store.n = meta["n"];
  store.m = meta["m"];
  store.K = meta["K"];
  store.seed = meta["seed"];
  store.iterations = meta["iterations"];
  store.burn_in = meta["burn_in"];
  store.thin = meta["thin"];
  const int stored = meta["stored"];
  const int p = meta.value("regression_predictors", 0);
  store.ess_r = meta.value("ess_r", -1.0);
  store.ess_sigma_eps = meta.value("ess_sigma_eps", -1.0);

  const int n = store.n, m = store.m, k = store.K;
  auto table_f64 = [&](const std::string& name, std::size_t per_row) {
    return load_f64(dir / (name + ".bin"), per_row * stored);
  };
  const auto f_all = table_f64("F", static_cast<std::size_t>(m) * k);
  const auto beta_all = table_f64("beta", static_cast<std::size_t>(n) * k);
  const auto mu_all = table_f64("mu", k);
  const auto phi_all = table_f64("phi", k);
  const auto seta_all = table_f64("sigma_eta", k);
  const auto lf_all = table_f64("lambda_f", k);
  const auto seps_all = table_f64("sigma_eps", 1);
  const auto r_all = table_f64("r", 1);
  std::vector<double> alpha_all;
  if (p > 0) alpha_all = table_f64("alpha", static_cast<std::size_t>(p) * k);
  const auto pred_all =
      load_i64(dir / "predictive.bin",
               static_cast<std::size_t>(stored) * n * m);
  const auto obs = load_i64(dir / "observed.bin", static_cast<std::size_t>(n) * m);
  const auto met = load_f64(dir / "mean_exp_theta.bin", static_cast<std::size_t>(n) * m);
  const auto mcf =
      load_f64(dir / "mean_cond_formula.bin", static_cast<std::size_t>(n) * m);

  store.states.resize(stored);
  store.predictive.resize(stored);
  for (int s = 0; s < stored; ++s) {
    StoredDraw& d = store.states[s];
    d.F.resize(m, k);
    d.beta.resize(n, k);
    d.mu.resize(k);
    d.phi.resize(k);
    d.sigma_eta.resize(k);
    d.lambda_f.resize(k);
    std::size_t off = static_cast<std::size_t>(s) * m * k;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) d.F(i, j) = f_all[off + i * k + j];
    off = static_cast<std::size_t>(s) * n * k;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) d.beta(i, j) = beta_all[off + i * k + j];
    for (int j = 0; j < k; ++j) {
      d.mu[j] = mu_all[static_cast<std::size_t>(s) * k + j];
      d.phi[j] = phi_all[static_cast<std::size_t>(s) * k + j];
      d.sigma_eta[j] = seta_all[static_cast<std::size_t>(s) * k + j];
      d.lambda_f[j] = lf_all[static_cast<std::size_t>(s) * k + j];
    }
    d.sigma_eps = seps_all[s];
    d.r = r_all[s];
    if (p > 0) {
      d.alpha.resize(p, k);
      off = static_cast<std::size_t>(s) * p * k;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < k; ++j) d.alpha(i, j) = alpha_all[off + i * k + j];
    }
    store.predictive[s].resize(n, m);
    off = static_cast<std::size_t>(s) * n * m;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) store.predictive[s](i, j) = pred_all[off + i * m + j];
  }
  store.observed.resize(n, m);
  store.mean_exp_theta.resize(n, m);
  store.mean_cond_formula.resize(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      store.observed(i, j) =
          static_cast<std::uint8_t>(obs[static_cast<std::size_t>(i) * m + j]);
      store.mean_exp_theta(i, j) = met[static_cast<std::size_t>(i) * m + j];
      store.mean_cond_formula(i, j) = mcf[static_cast<std::size_t>(i) * m + j];
    }
  return store;
}

}  // namespace nbfts

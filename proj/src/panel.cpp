#include "nbfts/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "nbfts/error.hpp"

namespace nbfts {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

long long parse_int(const std::string& s, const std::string& what, int line_no) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InvalidInputError(what + " is not an integer at line " +
                            std::to_string(line_no) + ": '" + s + "'");
  return v;
}

double parse_real(const std::string& s, const std::string& what, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInputError(what + " is not a number at line " +
                            std::to_string(line_no) + ": '" + s + "'");
  }
}

}  // namespace

void CountPanel::validate() const {
  if (counts.rows() != observed.rows() || counts.cols() != observed.cols() ||
      counts.rows() != offsets.rows() || counts.cols() != offsets.cols())
    throw InvalidInputError("CountPanel: matrix dimensions disagree");
  for (int i = 0; i < n(); ++i)
    for (int j = 0; j < m(); ++j) {
      if (!(offsets(i, j) > 0.0))
        throw InvalidInputError("CountPanel: offsets must be positive everywhere");
      if (is_observed(i, j) && counts(i, j) < 0)
        throw InvalidInputError("CountPanel: observed counts must be nonnegative");
    }
}

CountPanel CountPanel::make(int n, int m) {
  CountPanel p;
  p.counts = CountMatrix::Zero(n, m);
  p.observed = MaskMatrix::Constant(n, m, 1);
  p.offsets = Eigen::MatrixXd::Ones(n, m);
  p.year_labels.resize(n);
  p.week_labels.resize(m);
  for (int i = 0; i < n; ++i) p.year_labels[i] = std::to_string(i + 1);
  for (int j = 0; j < m; ++j) p.week_labels[j] = std::to_string(j + 1);
  return p;
}

CountPanel read_counts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open counts file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError("counts file is empty: " + path);
  {
    auto header = split_csv(line);
    if (header.size() != 3 || header[0] != "year" || header[1] != "week" ||
        header[2] != "count")
      throw InvalidInputError("counts header must be 'year,week,count' in " + path);
  }

  struct Cell {
    bool observed;
    long long value;
    int line_no;
  };
  std::map<std::pair<long long, int>, Cell> cells;
  int max_week = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 3)
      throw InvalidInputError("malformed row (expected 3 fields) at line " +
                              std::to_string(line_no));
    const long long year = parse_int(fields[0], "year", line_no);
    const long long week = parse_int(fields[1], "week", line_no);
    if (week < 1 || week > 53)
      throw InvalidInputError("week out of range 1..53 at line " +
                              std::to_string(line_no));
    Cell cell{false, 0, line_no};
    if (!fields[2].empty()) {
      cell.value = parse_int(fields[2], "count", line_no);
      if (cell.value < 0)
        throw InvalidInputError("negative count at line " + std::to_string(line_no));
      cell.observed = true;
    }
    const auto key = std::make_pair(year, static_cast<int>(week));
    const auto [it, inserted] = cells.emplace(key, cell);
    if (!inserted)
      throw InvalidInputError("duplicate (year,week) = (" + std::to_string(year) +
                              "," + std::to_string(week) + ") at lines " +
                              std::to_string(it->second.line_no) + " and " +
                              std::to_string(line_no));
    max_week = std::max(max_week, static_cast<int>(std::min<long long>(week, 52)));
  }
  if (cells.empty()) throw InvalidInputError("counts file has no data rows: " + path);

  // fold week 53 into week 52: sum of whichever of the two is observed
  std::vector<long long> years;
  for (const auto& [key, cell] : cells)
    if (years.empty() || years.back() != key.first) years.push_back(key.first);

  const int m = max_week;
  const int n = static_cast<int>(years.size());
  CountPanel panel = CountPanel::make(n, m);
  panel.observed.setZero();
  for (int i = 0; i < n; ++i) panel.year_labels[i] = std::to_string(years[i]);

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      long long sum = 0;
      bool any = false;
      for (int w : {j + 1, (j + 1 == 52) ? 53 : 0}) {
        if (w == 0) continue;
        auto it = cells.find({years[i], w});
        if (it != cells.end() && it->second.observed) {
          sum += it->second.value;
          any = true;
        }
      }
      if (any) {
        panel.counts(i, j) = sum;
        panel.observed(i, j) = 1;
      }
    }
  }
  return panel;
}

void read_offsets(const std::string& path, CountPanel& panel) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open offsets file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError("offsets file is empty: " + path);
  {
    auto header = split_csv(line);
    if (header.size() != 2 || header[0] != "year" || header[1] != "population")
      throw InvalidInputError("offsets header must be 'year,population' in " + path);
  }
  std::map<std::string, double> pop;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 2)
      throw InvalidInputError("malformed offsets row at line " + std::to_string(line_no));
    const long long year = parse_int(fields[0], "year", line_no);
    const double value = parse_real(fields[1], "population", line_no);
    if (!(value > 0.0))
      throw InvalidInputError("population must be positive at line " +
                              std::to_string(line_no));
    pop[std::to_string(year)] = value;
  }
  for (int i = 0; i < panel.n(); ++i) {
    auto it = pop.find(panel.year_labels[i]);
    if (it == pop.end())
      throw InvalidInputError("offsets file is missing year " + panel.year_labels[i]);
    panel.offsets.row(i).setConstant(it->second);
  }
}

void write_counts(const CountPanel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write counts file: " + path);
  out << "year,week,count\n";
  for (int i = 0; i < panel.n(); ++i)
    for (int j = 0; j < panel.m(); ++j) {
      out << panel.year_labels[i] << ',' << (j + 1) << ',';
      if (panel.is_observed(i, j)) out << panel.counts(i, j);
      out << '\n';
    }
  if (!out) throw IoError("failed writing counts file: " + path);
}

void write_offsets(const CountPanel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write offsets file: " + path);
  out << "year,population\n";
  char buf[64];
  for (int i = 0; i < panel.n(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", panel.offsets(i, 0));
    out << panel.year_labels[i] << ',' << buf << '\n';
  }
}

void write_matrix_csv(const Eigen::MatrixXd& mat, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write matrix file: " + path);
  for (int j = 0; j < mat.cols(); ++j)
    out << (j ? "," : "") << "column_" << (j + 1);
  out << '\n';
  char buf[64];
  for (int i = 0; i < mat.rows(); ++i) {
    for (int j = 0; j < mat.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", mat(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError("matrix file is empty: " + path);
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_real(f, "value", line_no));
    if (!rows.empty() && rows.front().size() != row.size())
      throw InvalidInputError("ragged matrix row at line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd mat(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (int i = 0; i < mat.rows(); ++i)
    for (int j = 0; j < mat.cols(); ++j) mat(i, j) = rows[i][j];
  return mat;
}

}  // namespace nbfts

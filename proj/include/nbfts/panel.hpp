#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace nbfts {

using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Integer-valued functional time series: one curve per year over m within-
// year points, with a missingness mask and per-cell positive offsets.
struct CountPanel {
  CountMatrix counts;    // n x m, valid where observed
  MaskMatrix observed;   // n x m, 1 = observed
  Eigen::MatrixXd offsets;  // n x m, > 0 everywhere
  std::vector<std::string> year_labels;  // n
  std::vector<std::string> week_labels;  // m

  int n() const { return static_cast<int>(counts.rows()); }
  int m() const { return static_cast<int>(counts.cols()); }
  bool is_observed(int i, int j) const { return observed(i, j) != 0; }
  void validate() const;

  static CountPanel make(int n, int m);
};

// Long-format `year,week,count` reader; an empty count field marks a missing
// cell, week 53 is folded into week 52. Offsets default to 1.
CountPanel read_counts(const std::string& path);

// `year,population` reader; broadcasts each year's population to all weeks.
void read_offsets(const std::string& path, CountPanel& panel);

void write_counts(const CountPanel& panel, const std::string& path);
void write_offsets(const CountPanel& panel, const std::string& path);

// Plain numeric matrix as CSV with a generated header (column_1, ...).
void write_matrix_csv(const Eigen::MatrixXd& mat, const std::string& path);
Eigen::MatrixXd read_matrix_csv(const std::string& path);

}  // namespace nbfts

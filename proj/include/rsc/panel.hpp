#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsc {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using BoolVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Panel of donor observations plus the treated unit's series.
/// Unobserved cells hold exactly 0; `mask` / `treated_mask` say which cells
/// were actually observed. `t0` counts the pre-intervention periods, so
/// columns [0, t0) are pre and [t0, T) are post.
struct PanelMatrix {
  Eigen::MatrixXd donors;   // (N-1) x T
  BoolMatrix mask;          // same shape as donors
  Eigen::VectorXd treated;  // length T
  BoolVector treated_mask;  // length T; pre-intervention entries must be true
  Eigen::Index t0 = 1;
  std::vector<std::string> unit_labels;  // donor labels, row order
  std::vector<std::string> time_labels;
  std::string treated_label;

  Eigen::Index num_donors() const { return donors.rows(); }
  Eigen::Index num_periods() const { return donors.cols(); }
  Eigen::Index num_units() const { return donors.rows() + 1; }
};

inline void validate_panel(const PanelMatrix& p) {
  const Eigen::Index n_donors = p.donors.rows();
  const Eigen::Index horizon = p.donors.cols();
  if (n_donors < 1 || horizon < 2)
    throw std::invalid_argument("panel requires at least 2 units and 2 time periods");
  if (p.mask.rows() != n_donors || p.mask.cols() != horizon)
    throw std::invalid_argument("mask shape does not match donors");
  if (p.treated.size() != horizon || p.treated_mask.size() != horizon)
    throw std::invalid_argument("treated length does not match donor columns");
  if (p.t0 < 1 || p.t0 >= horizon)
    throw std::invalid_argument("t0 must satisfy 1 <= t0 < T");
  for (Eigen::Index i = 0; i < n_donors; ++i)
    for (Eigen::Index t = 0; t < horizon; ++t)
      if (!p.mask(i, t) && p.donors(i, t) != 0.0)
        throw std::invalid_argument("unobserved donor cells must hold 0");
  for (Eigen::Index t = 0; t < p.t0; ++t)
    if (!p.treated_mask(t))
      throw std::invalid_argument("treated unit must be observed at every pre-intervention period");
  for (Eigen::Index t = 0; t < horizon; ++t)
    if (!p.treated_mask(t) && p.treated(t) != 0.0)
      throw std::invalid_argument("unobserved treated cells must hold 0");
  if (!p.unit_labels.empty() && static_cast<Eigen::Index>(p.unit_labels.size()) != n_donors)
    throw std::invalid_argument("unit label count does not match donor rows");
  if (!p.time_labels.empty() && static_cast<Eigen::Index>(p.time_labels.size()) != horizon)
    throw std::invalid_argument("time label count does not match columns");
}

/// Affine map sending [a, b] onto [-1, 1] and back.
struct BoundsTransform {
  double a = -1.0;
  double b = 1.0;

  double mid() const { return 0.5 * (a + b); }
  double half() const { return 0.5 * (b - a); }
  double forward(double x) const { return (x - mid()) / half(); }
  double inverse(double y) const { return y * half() + mid(); }
};

enum class MapDirection { Forward, Inverse };

/// Range of all observed entries, donors and treated alike. A constant panel
/// (a == b) widens to [a-1, a+1] so the forward map stays defined.
inline BoundsTransform fit_bounds(const PanelMatrix& panel) {
  double lo = 0.0, hi = 0.0;
  bool seen = false;
  for (Eigen::Index i = 0; i < panel.donors.rows(); ++i)
    for (Eigen::Index t = 0; t < panel.donors.cols(); ++t)
      if (panel.mask(i, t)) {
        const double v = panel.donors(i, t);
        lo = seen ? std::min(lo, v) : v;
        hi = seen ? std::max(hi, v) : v;
        seen = true;
      }
  for (Eigen::Index t = 0; t < panel.treated.size(); ++t)
    if (panel.treated_mask(t)) {
      const double v = panel.treated(t);
      lo = seen ? std::min(lo, v) : v;
      hi = seen ? std::max(hi, v) : v;
      seen = true;
    }
  if (!seen) throw std::invalid_argument("fit_bounds: panel has no observed entries");
  if (lo == hi) return BoundsTransform{lo - 1.0, hi + 1.0};
  return BoundsTransform{lo, hi};
}

/// Maps observed cells through the transform; unobserved cells stay 0.
inline PanelMatrix apply_bounds(const PanelMatrix& panel, const BoundsTransform& t,
                                MapDirection direction) {
  PanelMatrix out = panel;
  const auto map = [&](double x) {
    return direction == MapDirection::Forward ? t.forward(x) : t.inverse(x);
  };
  for (Eigen::Index i = 0; i < out.donors.rows(); ++i)
    for (Eigen::Index c = 0; c < out.donors.cols(); ++c)
      if (out.mask(i, c)) out.donors(i, c) = map(out.donors(i, c));
  for (Eigen::Index c = 0; c < out.treated.size(); ++c)
    if (out.treated_mask(c)) out.treated(c) = map(out.treated(c));
  return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline bool is_missing_token(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower = cell;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "nan";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) cells.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("non-numeric cell at " + where + ": '" + cell + "'");
  }
  if (used != cell.size())
    throw std::invalid_argument("non-numeric cell at " + where + ": '" + cell + "'");
  return v;
}

inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Reads a unit-by-time CSV: first column unit labels, header row time
/// labels, blank or NaN cells missing. `t0_label` names the last
/// pre-intervention period.
inline PanelMatrix load_csv(const std::string& path, const std::string& treated_label,
                            const std::string& t0_label) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open panel file: " + path);

  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split_csv_line(line));
  }
  if (rows.size() < 3) throw std::invalid_argument("panel needs a header and at least 2 unit rows");

  const std::vector<std::string>& header = rows.front();
  if (header.size() < 3) throw std::invalid_argument("panel needs at least 2 time columns");
  std::vector<std::string> time_labels(header.begin() + 1, header.end());

  Eigen::Index t0 = -1;
  for (std::size_t j = 0; j < time_labels.size(); ++j) {
    if (time_labels[j] == t0_label) {
      if (t0 >= 0) throw std::invalid_argument("duplicate time label: " + t0_label);
      t0 = static_cast<Eigen::Index>(j) + 1;
    }
  }
  if (t0 < 0) throw std::invalid_argument("t0 label not found in header: " + t0_label);
  const auto horizon = static_cast<Eigen::Index>(time_labels.size());
  if (t0 >= horizon)
    throw std::invalid_argument("t0 label must leave at least one post-intervention period");

  PanelMatrix p;
  p.time_labels = std::move(time_labels);
  p.t0 = t0;
  p.treated_label = treated_label;

  std::vector<std::string> donor_labels;
  std::vector<std::vector<std::string>> donor_cells;
  const std::vector<std::string>* treated_cells = nullptr;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.empty()) continue;
    if (static_cast<Eigen::Index>(cells.size()) != horizon + 1)
      throw std::invalid_argument("row '" + cells[0] + "' has wrong cell count");
    for (std::size_t q = 1; q < rows.size(); ++q)
      if (q != r && !rows[q].empty() && rows[q][0] == cells[0])
        throw std::invalid_argument("duplicate unit label: " + cells[0]);
    if (cells[0] == treated_label) {
      treated_cells = &cells;
    } else {
      donor_labels.push_back(cells[0]);
      donor_cells.push_back(cells);
    }
  }
  if (treated_cells == nullptr)
    throw std::invalid_argument("treated label not found: " + treated_label);
  if (donor_cells.empty()) throw std::invalid_argument("panel has no donor units");

  const auto n_donors = static_cast<Eigen::Index>(donor_cells.size());
  p.donors = Eigen::MatrixXd::Zero(n_donors, horizon);
  p.mask = BoolMatrix::Constant(n_donors, horizon, false);
  p.treated = Eigen::VectorXd::Zero(horizon);
  p.treated_mask = BoolVector::Constant(horizon, false);
  p.unit_labels = std::move(donor_labels);

  for (Eigen::Index i = 0; i < n_donors; ++i) {
    for (Eigen::Index t = 0; t < horizon; ++t) {
      const std::string& cell = donor_cells[i][t + 1];
      if (detail::is_missing_token(cell)) continue;
      p.donors(i, t) = detail::parse_cell(cell, p.unit_labels[i] + "/" + p.time_labels[t]);
      p.mask(i, t) = true;
    }
  }
  for (Eigen::Index t = 0; t < horizon; ++t) {
    const std::string& cell = (*treated_cells)[t + 1];
    if (detail::is_missing_token(cell)) {
      if (t < p.t0)
        throw std::invalid_argument("treated unit missing at pre-intervention period " +
                                    p.time_labels[t]);
      continue;
    }
    p.treated(t) = detail::parse_cell(cell, treated_label + "/" + p.time_labels[t]);
    p.treated_mask(t) = true;
  }

  validate_panel(p);
  return p;
}

/// Inverse of load_csv: treated row first, donors in row order, blanks for
/// unobserved cells.
inline void write_csv(const PanelMatrix& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write panel file: " + path);
  out << "unit";
  for (const auto& t : panel.time_labels) out << ',' << t;
  out << '\n';
  out << panel.treated_label;
  for (Eigen::Index t = 0; t < panel.treated.size(); ++t) {
    out << ',';
    if (panel.treated_mask(t)) out << detail::format_value(panel.treated(t));
  }
  out << '\n';
  for (Eigen::Index i = 0; i < panel.donors.rows(); ++i) {
    out << panel.unit_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index t = 0; t < panel.donors.cols(); ++t) {
      out << ',';
      if (panel.mask(i, t)) out << detail::format_value(panel.donors(i, t));
    }
    out << '\n';
  }
}

/// Plain labelled matrix dump, same layout as the panel CSV but dense.
inline void write_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& row_labels,
                             const std::vector<std::string>& col_labels, const std::string& path) {
  if (static_cast<Eigen::Index>(row_labels.size()) != m.rows() ||
      static_cast<Eigen::Index>(col_labels.size()) != m.cols())
    throw std::invalid_argument("write_matrix_csv: label counts do not match matrix shape");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "unit";
  for (const auto& c : col_labels) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << row_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << detail::format_value(m(i, j));
    out << '\n';
  }
}

}  // namespace rsc

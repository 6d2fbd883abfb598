#pragma once

// Test-only utilities and independent oracles. The oracles deliberately take
// different numerical routes than the library (eigendecompositions, gradient
// descent) so the two sides check each other.

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <string>

#include "rsc/panel.hpp"
#include "rsc/rng.hpp"

namespace testutil {

inline rsc::PanelMatrix make_panel(const Eigen::MatrixXd& donors, const Eigen::VectorXd& treated,
                                   Eigen::Index t0) {
  rsc::PanelMatrix p;
  p.donors = donors;
  p.mask = rsc::BoolMatrix::Constant(donors.rows(), donors.cols(), true);
  p.treated = treated;
  p.treated_mask = rsc::BoolVector::Constant(treated.size(), true);
  p.t0 = t0;
  for (Eigen::Index i = 0; i < donors.rows(); ++i)
    p.unit_labels.push_back("d" + std::to_string(i + 1));
  for (Eigen::Index t = 0; t < donors.cols(); ++t)
    p.time_labels.push_back("t" + std::to_string(t + 1));
  p.treated_label = "treated";
  return p;
}

inline Eigen::MatrixXd random_matrix(rsc::Sampler& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline Eigen::VectorXd random_vector(rsc::Sampler& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

/// Hard-threshold reconstruction through the eigendecomposition of Y^T Y:
/// sum over kept components of Y v v^T / p. Never touches an SVD routine.
inline Eigen::MatrixXd svt_oracle(const Eigen::MatrixXd& y, double mu, double p_hat) {
  const Eigen::MatrixXd gram = y.transpose() * y;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double s = std::sqrt(std::max(es.eigenvalues()(i), 0.0));
    if (s < mu) continue;
    const Eigen::VectorXd v = es.eigenvectors().col(i);
    out.noalias() += (y * v) * v.transpose() / p_hat;
  }
  return out;
}

/// Gradient descent on ||y - A^T v||^2 + eta ||v||^2 with a safe fixed step.
inline Eigen::VectorXd ridge_gd_oracle(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                       double eta, int max_iters = 2000000,
                                       double grad_tol = 1e-12) {
  const double s1 = a.operatorNorm();
  const double step = 1.0 / (2.0 * (s1 * s1 + eta) + 1e-12);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(a.rows());
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd grad = 2.0 * (a * (a.transpose() * v - y)) + 2.0 * eta * v;
    if (grad.norm() < grad_tol) break;
    v -= step * grad;
  }
  return v;
}

inline double soft_threshold(double x, double lambda) {
  if (x > lambda) return x - lambda;
  if (x < -lambda) return x + lambda;
  return 0.0;
}

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
  std::string str() const { return path.string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

}  // namespace testutil

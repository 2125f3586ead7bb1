#pragma once

#include "borderlab/dgp.hpp"
#include "borderlab/panel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace borderlab::testing {

struct DenseFit {
  Eigen::VectorXd slopes;
  Eigen::VectorXd se;
};

/// Least squares with explicit dummies for every fixed-effect group (first
/// level of each dimension after the first dropped) and a dense cluster
/// sandwich. The small-sample factor counts slope columns only.
inline DenseFit dense_dummy_fit(const panel::DesignMatrix& d) {
  const Eigen::Index n = d.n();
  const Eigen::Index k = d.k();
  Eigen::Index extra = 0;
  std::vector<int> counts;
  for (std::size_t g = 0; g < d.fe_groups.size(); ++g) {
    const int c = *std::max_element(d.fe_groups[g].begin(), d.fe_groups[g].end()) + 1;
    counts.push_back(c);
    extra += g == 0 ? c : c - 1;
  }
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, k + extra);
  X.leftCols(k) = d.regressors;
  Eigen::Index offset = k;
  for (std::size_t g = 0; g < d.fe_groups.size(); ++g) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const int level = d.fe_groups[g][static_cast<std::size_t>(i)];
      if (g == 0) X(i, offset + level) = 1.0;
      else if (level > 0) X(i, offset + level - 1) = 1.0;
    }
    offset += g == 0 ? counts[g] : counts[g] - 1;
  }
  const Eigen::VectorXd sw = d.weights.array().sqrt();
  const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  const Eigen::VectorXd yw = sw.asDiagonal() * d.outcome;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  const Eigen::VectorXd beta = qr.solve(yw);
  const Eigen::VectorXd e = d.outcome - X * beta;

  const Eigen::MatrixXd bread = (X.transpose() * d.weights.asDiagonal() * X).inverse();
  std::map<int, Eigen::VectorXd> scores;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& s = scores[d.clusters[static_cast<std::size_t>(i)]];
    if (s.size() == 0) s = Eigen::VectorXd::Zero(X.cols());
    s += X.row(i).transpose() * (d.weights(i) * e(i));
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (const auto& [c, s] : scores) meat += s * s.transpose();
  const double G = static_cast<double>(scores.size());
  const double nn = static_cast<double>(n);
  const double factor = G / (G - 1.0) * (nn - 1.0) / (nn - static_cast<double>(k));
  const Eigen::MatrixXd V = factor * bread * meat * bread;
  DenseFit out;
  out.slopes = beta.head(k);
  out.se = V.diagonal().head(k).array().sqrt();
  return out;
}

/// Small default-shaped simulation.
inline dgp::DgpConfig small_config(std::uint64_t seed, int treated = 20, int control = 30) {
  dgp::DgpConfig c;
  c.n_workers_treated = treated;
  c.n_workers_control = control;
  c.treated_municipalities = 4;
  c.control_states = {{"AP", 3, 0.1}, {"AC", 4, -0.1}};
  c.seed = seed;
  return c;
}

inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace borderlab::testing

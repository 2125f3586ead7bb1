#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace borderlab::numerics {

// ---------------------------------------------------------------------------
// Weighted least squares
// ---------------------------------------------------------------------------

struct WlsProblem {
  Eigen::MatrixXd regressors;  // n x k
  Eigen::VectorXd outcome;     // n
  Eigen::VectorXd weights;     // n, >= 0

  void validate() const;
};

struct WlsSolution {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;  // outcome - regressors * coefficients (unweighted)
  Eigen::Index rank = 0;
};

/// Minimizes sum_i w_i (y_i - x_i'b)^2 with a column-pivoted Householder QR of
/// diag(sqrt(w)) X. Throws CollinearityError naming the first column that is
/// (numerically) spanned by the columns before it.
WlsSolution wls_solve(const WlsProblem& problem);

/// Relative pivot threshold used by the rank check in wls_solve.
inline constexpr double kRankThreshold = 1e-10;

// ---------------------------------------------------------------------------
// Logistic regression by IRLS / Newton
// ---------------------------------------------------------------------------

struct LogitOptions {
  double tol = 1e-10;
  int max_iter = 100;
  double hessian_floor = 1e-10;  // floor on the weighted Hessian diagonal
};

struct LogitFit {
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;  // ||X'(z - p)||_2 at the returned coefficients
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_path;  // one entry per accepted iterate, starting at theta = 0
};

double logistic(double eta);

/// Bernoulli log-likelihood of z under p = logistic(X theta).
double logit_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& theta);

/// Score vector X'(z - p).
Eigen::VectorXd logit_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& z,
                               const Eigen::VectorXd& theta);

Eigen::VectorXd logit_predict(const Eigen::MatrixXd& X, const Eigen::VectorXd& theta);

/// Maximum-likelihood logistic fit with step-halving Newton updates.
/// Throws SeparationError when the outcome is constant or the linear predictor
/// diverges, ConvergenceError when max_iter is exhausted.
LogitFit logit_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& z, const LogitOptions& options = {});

// ---------------------------------------------------------------------------
// Least squares on the probability simplex
// ---------------------------------------------------------------------------

struct SimplexQpProblem {
  Eigen::VectorXd target;  // X1, length K
  Eigen::MatrixXd donors;  // X0, K x J

  void validate() const;
};

struct SimplexQpOptions {
  double tol = 1e-10;
  int max_iter = 200000;
};

struct SimplexQpSolution {
  Eigen::VectorXd weights;
  double loss = 0.0;           // ||X1 - X0 W||^2
  double kkt_residual = 0.0;   // projected-gradient norm, scaled by the step
  int iterations = 0;
  bool polished = false;       // active-set refinement accepted
};

/// Euclidean projection onto {w >= 0, sum w = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

/// argmin_W ||X1 - X0 W||^2 subject to W >= 0, sum W = 1.
///
/// Accelerated projected gradient from the barycenter, followed by an
/// active-set polish that solves the equality-constrained problem exactly on
/// the support. Among optimal points on that support the minimum-norm one is
/// returned, which makes identical donors share weight equally.
SimplexQpSolution simplex_qp_solve(const SimplexQpProblem& problem, const SimplexQpOptions& options = {});

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

/// Bisection on [lo, hi]; stops when the bracket is narrower than
/// tol * max(1, |mid|). Requires f(lo) * f(hi) < 0 (or an endpoint root).
double bisect_root(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12,
                   int max_iter = 4000);

}  // namespace borderlab::numerics

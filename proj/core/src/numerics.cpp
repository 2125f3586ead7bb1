#include "borderlab/numerics.hpp"

#include "borderlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace borderlab::numerics {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// WLS
// ---------------------------------------------------------------------------

void WlsProblem::validate() const {
  const Index n = regressors.rows();
  const Index k = regressors.cols();
  if (k < 1) throw DomainError("wls: at least one regressor column is required");
  if (outcome.size() != n || weights.size() != n)
    throw DomainError("wls: regressors, outcome and weights must have the same number of rows");
  if (n < k) throw DomainError("wls: fewer rows than regressors");
  if (!regressors.allFinite() || !outcome.allFinite() || !weights.allFinite())
    throw DomainError("wls: non-finite entries");
  if ((weights.array() < 0.0).any()) throw DomainError("wls: negative weight");
}

namespace {

Index qr_rank(const MatrixXd& a) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
  qr.setThreshold(kRankThreshold);
  return qr.rank();
}

}  // namespace

WlsSolution wls_solve(const WlsProblem& problem) {
  problem.validate();
  const Index k = problem.regressors.cols();
  const VectorXd sw = problem.weights.cwiseSqrt();
  MatrixXd a = sw.asDiagonal() * problem.regressors;
  const VectorXd b = sw.cwiseProduct(problem.outcome);

  // Equilibrate columns so the relative pivot threshold is scale free.
  VectorXd scale = a.colwise().norm().transpose();
  for (Index j = 0; j < k; ++j) {
    if (scale(j) == 0.0)
      throw CollinearityError("wls: column " + std::to_string(j) + " is identically zero", static_cast<std::size_t>(j));
    a.col(j) /= scale(j);
  }

  Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < k) {
    for (Index j = 1; j < k; ++j) {
      if (qr_rank(a.leftCols(j + 1)) < j + 1)
        throw CollinearityError("wls: column " + std::to_string(j) + " is collinear with preceding columns",
                                static_cast<std::size_t>(j));
    }
    throw CollinearityError("wls: design is rank deficient", static_cast<std::size_t>(k - 1));
  }

  WlsSolution out;
  out.coefficients = qr.solve(b).cwiseQuotient(scale);
  out.residuals = problem.outcome - problem.regressors * out.coefficients;
  out.rank = qr.rank();
  return out;
}

// ---------------------------------------------------------------------------
// Logit
// ---------------------------------------------------------------------------

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(x)) without overflow.
double log1pexp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void check_binary(const VectorXd& z) {
  for (Index i = 0; i < z.size(); ++i)
    if (z(i) != 0.0 && z(i) != 1.0) throw DomainError("logit: outcome must be 0/1");
}

// Linear predictors beyond this put fitted probabilities at 0 or 1 in double precision.
constexpr double kSeparationEta = 36.0;

}  // namespace

double logit_log_likelihood(const MatrixXd& X, const VectorXd& z, const VectorXd& theta) {
  const VectorXd eta = X * theta;
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) ll += z(i) * eta(i) - log1pexp(eta(i));
  return ll;
}

VectorXd logit_predict(const MatrixXd& X, const VectorXd& theta) {
  VectorXd p = X * theta;
  for (Index i = 0; i < p.size(); ++i) p(i) = logistic(p(i));
  return p;
}

VectorXd logit_gradient(const MatrixXd& X, const VectorXd& z, const VectorXd& theta) {
  return X.transpose() * (z - logit_predict(X, theta));
}

LogitFit logit_fit(const MatrixXd& X_raw, const VectorXd& z, const LogitOptions& options) {
  const Index n = X_raw.rows();
  const Index k = X_raw.cols();
  if (z.size() != n) throw DomainError("logit: X and z row counts differ");
  if (k < 1 || n < k) throw DomainError("logit: need n >= k >= 1");
  check_binary(z);
  const double mean = z.mean();
  if (mean == 0.0 || mean == 1.0) throw SeparationError("logit: outcome has a single class; perfect separation");

  // Iterate on columns scaled to unit max-abs; coefficients are mapped back at the end.
  VectorXd scale = X_raw.cwiseAbs().colwise().maxCoeff().transpose();
  for (Index j = 0; j < k; ++j)
    if (!(scale(j) > 0.0)) scale(j) = 1.0;
  const MatrixXd X = X_raw * scale.cwiseInverse().asDiagonal();

  LogitFit fit;
  VectorXd theta = VectorXd::Zero(k);
  double ll = logit_log_likelihood(X, z, theta);
  fit.log_likelihood_path.push_back(ll);
  const double grad_tol = options.tol * std::max(1.0, std::sqrt(static_cast<double>(n)));

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const VectorXd p = logit_predict(X, theta);
    const VectorXd grad = X.transpose() * (z - p);
    if (grad.lpNorm<Eigen::Infinity>() == 0.0) {
      fit.converged = true;
      fit.iterations = iter - 1;
      break;
    }
    const VectorXd w = p.cwiseProduct(VectorXd::Ones(n) - p);
    MatrixXd hessian = X.transpose() * w.asDiagonal() * X;
    for (Index j = 0; j < k; ++j) hessian(j, j) = std::max(hessian(j, j), options.hessian_floor);
    const VectorXd step = hessian.ldlt().solve(grad);
    if (!step.allFinite()) throw ConvergenceError("logit: Newton step is not finite");
    if (step.lpNorm<Eigen::Infinity>() <= options.tol * (1.0 + theta.lpNorm<Eigen::Infinity>())) {
      // Quadratic convergence: the last tiny step lands on the optimum to rounding.
      theta += step;
      ll = logit_log_likelihood(X, z, theta);
      fit.log_likelihood_path.push_back(ll);
      fit.iterations = iter;
      fit.converged = true;
      break;
    }

    // Step halving keeps the log-likelihood path nondecreasing up to rounding.
    const double slack = 1e-12 * (1.0 + std::abs(ll));
    double t = 1.0;
    VectorXd candidate = theta + step;
    double ll_new = logit_log_likelihood(X, z, candidate);
    for (int halving = 0; halving < 40 && !(ll_new >= ll - slack); ++halving) {
      t *= 0.5;
      candidate = theta + t * step;
      ll_new = logit_log_likelihood(X, z, candidate);
    }
    if (!(ll_new >= ll - slack)) {
      candidate = theta;
      ll_new = ll;
    }
    const double moved = (candidate - theta).lpNorm<Eigen::Infinity>();
    theta = candidate;
    ll = ll_new;
    fit.log_likelihood_path.push_back(ll);
    fit.iterations = iter;

    if ((X * theta).cwiseAbs().maxCoeff() > kSeparationEta)
      throw SeparationError("logit: fitted probabilities reached 0 or 1; (quasi-)separation detected");

    if (moved <= options.tol * (1.0 + theta.lpNorm<Eigen::Infinity>())) {
      const VectorXd g = logit_gradient(X, z, theta);
      fit.converged = g.lpNorm<Eigen::Infinity>() <= std::max(grad_tol, 1e-8);
      break;
    }
  }
  if (!fit.converged) {
    const VectorXd g = logit_gradient(X, z, theta);
    if (g.lpNorm<Eigen::Infinity>() <= grad_tol)
      fit.converged = true;
    else
      throw ConvergenceError("logit: no convergence after " + std::to_string(options.max_iter) + " iterations");
  }
  fit.coefficients = theta.cwiseQuotient(scale);
  fit.log_likelihood = ll;
  fit.gradient_norm = logit_gradient(X_raw, z, fit.coefficients).norm();
  return fit;
}

// ---------------------------------------------------------------------------
// Simplex-constrained least squares
// ---------------------------------------------------------------------------

void SimplexQpProblem::validate() const {
  if (donors.rows() < 1 || donors.cols() < 1) throw DomainError("simplex qp: need K >= 1 and J >= 1");
  if (target.size() != donors.rows()) throw DomainError("simplex qp: target length must equal donor rows");
  if (!donors.allFinite() || !target.allFinite()) throw DomainError("simplex qp: non-finite entries");
}

VectorXd project_to_simplex(const VectorXd& v) {
  const Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Index i = 0; i < n; ++i) {
    cumulative += u[static_cast<std::size_t>(i)];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).max(0.0).matrix();
}

namespace {

double simplex_loss(const SimplexQpProblem& p, const VectorXd& w) { return (p.target - p.donors * w).squaredNorm(); }

VectorXd simplex_gradient(const MatrixXd& gram, const VectorXd& linear, const VectorXd& w) {
  return 2.0 * (gram * w - linear);
}

double kkt_residual(const MatrixXd& gram, const VectorXd& linear, const VectorXd& w, double lipschitz) {
  const VectorXd g = simplex_gradient(gram, linear, w);
  return lipschitz * (w - project_to_simplex(w - g / lipschitz)).lpNorm<Eigen::Infinity>();
}

// Minimum-norm solution of min ||X1 - X0_S w||^2 s.t. 1'w = 1 on the support S.
VectorXd solve_on_support(const SimplexQpProblem& p, const std::vector<Index>& support) {
  const Index s = static_cast<Index>(support.size());
  MatrixXd xs(p.donors.rows(), s);
  for (Index j = 0; j < s; ++j) xs.col(j) = p.donors.col(support[static_cast<std::size_t>(j)]);
  const VectorXd center = VectorXd::Constant(s, 1.0 / static_cast<double>(s));
  if (s == 1) return center;
  // Orthonormal basis of the sum-zero subspace.
  Eigen::HouseholderQR<MatrixXd> qr(MatrixXd::Ones(s, 1));
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(s, s);
  const MatrixXd basis = q.rightCols(s - 1);
  const MatrixXd a = xs * basis;
  const VectorXd r = p.target - xs * center;
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(a);
  cod.setThreshold(1e-12);
  const VectorXd z = cod.solve(r);
  return center + basis * z;
}

}  // namespace

SimplexQpSolution simplex_qp_solve(const SimplexQpProblem& problem, const SimplexQpOptions& options) {
  problem.validate();
  const Index j_count = problem.donors.cols();
  const MatrixXd gram = problem.donors.transpose() * problem.donors;
  const VectorXd linear = problem.donors.transpose() * problem.target;
  const double scale = std::max({1.0, problem.target.squaredNorm(), gram.diagonal().maxCoeff()});

  SimplexQpSolution out;
  VectorXd w = VectorXd::Constant(j_count, 1.0 / static_cast<double>(j_count));
  const double top_eigen =
      j_count == 1 ? gram(0, 0) : Eigen::SelfAdjointEigenSolver<MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double lipschitz = std::max(2.0 * top_eigen, 1e-300);

  if (j_count > 1 && top_eigen > 0.0) {
    // FISTA with gradient-based restart.
    VectorXd y = w;
    double t = 1.0;
    int iter = 0;
    for (; iter < options.max_iter; ++iter) {
      const VectorXd w_next = project_to_simplex(y - simplex_gradient(gram, linear, y) / lipschitz);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      if ((y - w_next).dot(w_next - w) > 0.0) {
        y = w_next;  // restart momentum
        t = 1.0;
      } else {
        y = w_next + ((t - 1.0) / t_next) * (w_next - w);
        t = t_next;
      }
      w = w_next;
      if ((iter & 15) == 15 && kkt_residual(gram, linear, w, lipschitz) <= options.tol * scale) break;
    }
    out.iterations = iter;
  }

  // Active-set polish: exact solve on the support, adjusting the support until
  // primal feasibility and the KKT sign conditions hold.
  std::vector<Index> support;
  for (Index j = 0; j < j_count; ++j)
    if (w(j) > 1e-9) support.push_back(j);
  if (support.empty()) support.push_back(0);
  const double feas_tol = 1e-12;
  for (int round = 0; round < 4 * static_cast<int>(j_count) + 4; ++round) {
    const VectorXd ws = solve_on_support(problem, support);
    Index most_negative = -1;
    double lowest = -feas_tol;
    for (Index i = 0; i < ws.size(); ++i)
      if (ws(i) < lowest) {
        lowest = ws(i);
        most_negative = i;
      }
    if (most_negative >= 0) {
      support.erase(support.begin() + most_negative);
      if (support.empty()) break;
      continue;
    }
    VectorXd candidate = VectorXd::Zero(j_count);
    for (std::size_t i = 0; i < support.size(); ++i) candidate(support[i]) = std::max(0.0, ws(static_cast<Index>(i)));
    candidate /= candidate.sum();
    const VectorXd g = simplex_gradient(gram, linear, candidate);
    double multiplier = 0.0;
    for (Index s : support) multiplier += g(s);
    multiplier /= static_cast<double>(support.size());
    Index entering = -1;
    double worst = -options.tol * scale;
    for (Index j = 0; j < j_count; ++j) {
      if (std::find(support.begin(), support.end(), j) != support.end()) continue;
      const double reduced = g(j) - multiplier;
      if (reduced < worst) {
        worst = reduced;
        entering = j;
      }
    }
    if (entering >= 0) {
      support.push_back(entering);
      std::sort(support.begin(), support.end());
      continue;
    }
    if (simplex_loss(problem, candidate) <= simplex_loss(problem, w) + options.tol * scale) {
      w = candidate;
      out.polished = true;
    }
    break;
  }

  w = w.cwiseMax(0.0);
  w /= w.sum();
  out.kkt_residual = kkt_residual(gram, linear, w, lipschitz);
  if (out.kkt_residual > std::sqrt(options.tol) * scale)
    throw ConvergenceError("simplex qp: KKT residual " + std::to_string(out.kkt_residual) + " after " +
                           std::to_string(out.iterations) + " iterations");
  out.weights = std::move(w);
  out.loss = simplex_loss(problem, out.weights);
  return out;
}

// ---------------------------------------------------------------------------
// Bisection
// ---------------------------------------------------------------------------

double bisect_root(const std::function<double(double)>& f, double lo, double hi, double tol, int max_iter) {
  if (!(lo < hi)) throw DomainError("bisect: require lo < hi");
  double f_lo = f(lo);
  const double f_hi = f(hi);
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  if (!(f_lo * f_hi < 0.0)) throw DomainError("bisect: no sign change on the bracket");
  for (int i = 0; i < max_iter; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= tol * std::max(1.0, std::abs(mid))) return mid;
    const double f_mid = f(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  throw ConvergenceError("bisect: bracket did not shrink below tolerance");
}

}  // namespace borderlab::numerics

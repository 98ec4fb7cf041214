#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pim/errors.hpp"
#include "pim/fim.hpp"
#include "pim/info_matrix.hpp"
#include "pim/linalg.hpp"
#include "pim/moments.hpp"
#include "pim/pim.hpp"

namespace pim {

// Support of the maximum-entropy fit for a single scalar observation.
struct Support {
  enum class Kind { FinitePoints, RealLine, HalfLine };
  Kind kind = Kind::RealLine;
  std::vector<double> points;  // FinitePoints only

  static Support finite(std::vector<double> pts) {
    return Support{Kind::FinitePoints, std::move(pts)};
  }
  static Support real_line() { return Support{Kind::RealLine, {}}; }
  static Support half_line() { return Support{Kind::HalfLine, {}}; }
};

// Moment-matched exponential-family fit exp(lambda^T s(y) - lambda0).
// For N i.i.d. observations with averaged statistics the density
// factorizes, so lambda and lambda0 are N times their single-observation
// values.
struct MaxEntFit {
  VectorXd lambda;
  double lambda0 = 0.0;
  Support support;
  VectorXd target_mu;
  int n_obs = 1;
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();
  MatrixXd d_lambda;    // M x n, d lambda / d theta; empty until sensitivities run
  VectorXd d_lambda0;   // length n
};

namespace detail {

struct DualEval {
  double log_z;
  VectorXd mean;   // E_{p*}[s]
  MatrixXd cov;    // Cov_{p*}(s)
};

inline std::vector<int> monomial_degrees(const StatisticSet& set) {
  if (!set.all_monomial())
    throw InvalidParameter("continuous-support maxent requires monomial statistics");
  std::vector<int> d;
  for (Eigen::Index i = 0; i < set.size(); ++i) d.push_back(set.at(i).degree);
  return d;
}

inline bool normalizable(const VectorXd& lambda, const std::vector<int>& degrees,
                         Support::Kind kind) {
  if (kind == Support::Kind::FinitePoints) return true;
  int dmax = 0;
  double top = 0.0;
  for (std::size_t i = 0; i < degrees.size(); ++i)
    if (degrees[i] > dmax) {
      dmax = degrees[i];
      top = lambda[static_cast<Eigen::Index>(i)];
    }
  if (kind == Support::Kind::RealLine && dmax % 2 != 0) return false;
  return top < 0.0;
}

inline DualEval dual_eval_finite(const VectorXd& lambda, const StatisticSet& set,
                                 const std::vector<double>& points) {
  const Eigen::Index m = set.size();
  const Eigen::Index np = static_cast<Eigen::Index>(points.size());
  MatrixXd s(np, m);
  VectorXd a(np);
  VectorXd srow(m);
  for (Eigen::Index p = 0; p < np; ++p) {
    const double y = points[static_cast<std::size_t>(p)];
    set.eval_into(std::span<const double>(&y, 1), srow);
    s.row(p) = srow;
    a[p] = lambda.dot(srow);
  }
  const double amax = a.maxCoeff();
  const VectorXd w = (a.array() - amax).exp();
  const double z = w.sum();
  DualEval out;
  out.log_z = amax + std::log(z);
  const VectorXd prob = w / z;
  out.mean = s.transpose() * prob;
  MatrixXd centered = s.rowwise() - out.mean.transpose();
  out.cov = centered.transpose() * (prob.asDiagonal() * centered);
  return out;
}

// Log-partition and moments on the (half) real line via windowed composite
// trapezoid with node doubling. The integrand exp(q(y)) has a polynomial
// exponent with negative leading coefficient, so a finite window captures
// it to far below the 1e-12 stopping threshold.
inline DualEval dual_eval_continuous(const VectorXd& lambda,
                                     const std::vector<int>& degrees, bool half_line) {
  auto q = [&](double y) {
    double v = 0.0;
    for (std::size_t i = 0; i < degrees.size(); ++i)
      v += lambda[static_cast<Eigen::Index>(i)] * std::pow(y, degrees[i]);
    return v;
  };

  // Expand the window until the exponent at both edges is negligible
  // relative to the running maximum.
  const double drop = 80.0;
  double radius = 1.0;
  double lo = half_line ? 0.0 : -radius, hi = radius;
  double qmax = q(half_line ? 0.0 : 0.0);
  const int scan_n = 2048;
  for (int attempt = 0; attempt < 60; ++attempt) {
    lo = half_line ? 0.0 : -radius;
    hi = radius;
    qmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= scan_n; ++i) {
      const double y = lo + (hi - lo) * i / scan_n;
      qmax = std::max(qmax, q(y));
    }
    const bool lo_ok = half_line || q(lo) < qmax - drop;
    const bool hi_ok = q(hi) < qmax - drop;
    if (lo_ok && hi_ok) break;
    radius *= 2.0;
    if (attempt == 59)
      throw Infeasible("maxent exponent does not decay; non-normalizable lambda");
  }
  // Tighten to the region where the integrand is non-negligible.
  double tight_lo = hi, tight_hi = lo;
  const double cell = (hi - lo) / scan_n;
  for (int i = 0; i <= scan_n; ++i) {
    const double y = lo + cell * i;
    if (q(y) >= qmax - drop) {
      tight_lo = std::min(tight_lo, y);
      tight_hi = std::max(tight_hi, y);
    }
  }
  lo = std::max(lo, tight_lo - cell);
  hi = std::min(hi, tight_hi + cell);
  if (half_line) lo = std::max(lo, 0.0);

  int max_deg = 0;
  for (int d : degrees) max_deg = std::max(max_deg, d);
  const int n_pows = 2 * max_deg;  // raw moments needed for Cov(s)

  double prev_log_z = std::numeric_limits<double>::quiet_NaN();
  DualEval out;
  for (long nodes = 512; nodes <= (1L << 21); nodes *= 2) {
    const double h = (hi - lo) / static_cast<double>(nodes);
    // logsumexp over trapezoid nodes.
    double amax = -std::numeric_limits<double>::infinity();
    std::vector<double> qv(static_cast<std::size_t>(nodes) + 1);
    for (long i = 0; i <= nodes; ++i) {
      qv[static_cast<std::size_t>(i)] = q(lo + h * static_cast<double>(i));
      amax = std::max(amax, qv[static_cast<std::size_t>(i)]);
    }
    double z = 0.0;
    std::vector<double> raw(static_cast<std::size_t>(n_pows) + 1, 0.0);
    for (long i = 0; i <= nodes; ++i) {
      const double wq = ((i == 0 || i == nodes) ? 0.5 : 1.0) *
                        std::exp(qv[static_cast<std::size_t>(i)] - amax);
      z += wq;
      const double y = lo + h * static_cast<double>(i);
      double p = 1.0;
      raw[0] += wq;
      for (int d = 1; d <= n_pows; ++d) {
        p *= y;
        raw[static_cast<std::size_t>(d)] += wq * p;
      }
    }
    out.log_z = amax + std::log(z * h);
    for (auto& r : raw) r /= z;
    const Eigen::Index m = static_cast<Eigen::Index>(degrees.size());
    out.mean.resize(m);
    out.cov.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      out.mean[i] = raw[static_cast<std::size_t>(degrees[static_cast<std::size_t>(i)])];
      for (Eigen::Index j = 0; j < m; ++j)
        out.cov(i, j) = raw[static_cast<std::size_t>(
                            degrees[static_cast<std::size_t>(i)] +
                            degrees[static_cast<std::size_t>(j)])] -
                        out.mean[i] * raw[static_cast<std::size_t>(
                                         degrees[static_cast<std::size_t>(j)])];
    }
    if (std::abs(out.log_z - prev_log_z) < 1e-12) break;
    prev_log_z = out.log_z;
  }
  return out;
}

inline DualEval dual_eval(const VectorXd& lambda, const StatisticSet& set,
                          const Support& support) {
  if (support.kind == Support::Kind::FinitePoints)
    return dual_eval_finite(lambda, set, support.points);
  return dual_eval_continuous(lambda, monomial_degrees(set),
                              support.kind == Support::Kind::HalfLine);
}

}  // namespace detail

struct MaxEntOptions {
  int max_iter = 100;
  double tol = 1e-10;
};

// Damped Newton on the strictly convex dual lambda -> lambda0(lambda) -
// lambda^T mu. Gradient is E_{p*}[s] - mu, Hessian is Cov_{p*}(s).
inline MaxEntFit fit_maxent(const Support& support, const StatisticSet& set,
                            const VectorXd& target_mu, const MaxEntOptions& opts = {},
                            const std::optional<VectorXd>& warm_start = std::nullopt) {
  const Eigen::Index m = set.size();
  if (target_mu.size() != m)
    throw DimensionMismatch("target_mu length must match the statistic set");

  std::vector<int> degrees;
  if (support.kind != Support::Kind::FinitePoints)
    degrees = detail::monomial_degrees(set);

  if (support.kind == Support::Kind::FinitePoints) {
    // Interior-of-polytope necessary condition, component-wise.
    VectorXd srow(m);
    VectorXd smin = VectorXd::Constant(m, std::numeric_limits<double>::infinity());
    VectorXd smax = -smin;
    for (double p : support.points) {
      set.eval_into(std::span<const double>(&p, 1), srow);
      smin = smin.cwiseMin(srow);
      smax = smax.cwiseMax(srow);
    }
    for (Eigen::Index i = 0; i < m; ++i)
      if (!(target_mu[i] > smin[i] && target_mu[i] < smax[i]) &&
          !(smin[i] == smax[i] && target_mu[i] == smin[i]))
        throw Infeasible("target moment " + std::to_string(target_mu[i]) +
                         " outside the support's moment range");
  }

  VectorXd lambda;
  if (warm_start) {
    lambda = *warm_start;
  } else {
    lambda = VectorXd::Zero(m);
    if (support.kind != Support::Kind::FinitePoints) {
      int dmax = 0;
      Eigen::Index top = 0;
      for (std::size_t i = 0; i < degrees.size(); ++i)
        if (degrees[i] > dmax) {
          dmax = degrees[i];
          top = static_cast<Eigen::Index>(i);
        }
      lambda[top] = -1.0;
    }
  }
  if (support.kind != Support::Kind::FinitePoints &&
      !detail::normalizable(lambda, degrees, support.kind))
    throw Infeasible("initial lambda is not normalizable on this support");

  MaxEntFit fit;
  fit.support = support;
  fit.target_mu = target_mu;

  const double scale = std::max(1.0, target_mu.norm());
  detail::DualEval ev = detail::dual_eval(lambda, set, support);
  double dual_value = ev.log_z - lambda.dot(target_mu);
  const double lambda_ref = std::max(1.0, lambda.norm());

  for (int it = 0; it < opts.max_iter; ++it) {
    const VectorXd grad = ev.mean - target_mu;
    fit.residual = grad.norm();
    if (fit.residual <= opts.tol * scale) {
      fit.converged = true;
      break;
    }
    VectorXd step;
    try {
      step = -solve_spd(SymMatrix(ev.cov), grad);
    } catch (const NotPositiveDefinite&) {
      const double jitter = 1e-12 * std::max(1.0, ev.cov.trace());
      step = -solve_spd(
          SymMatrix(ev.cov + jitter * MatrixXd::Identity(m, m)), grad);
    }
    double alpha = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      const VectorXd cand = lambda + alpha * step;
      if (support.kind == Support::Kind::FinitePoints ||
          detail::normalizable(cand, degrees, support.kind)) {
        detail::DualEval cev = detail::dual_eval(cand, set, support);
        const double cval = cev.log_z - cand.dot(target_mu);
        if (cval <= dual_value + 1e-14 * std::abs(dual_value) + 1e-300 ||
            halving == 39) {
          lambda = cand;
          ev = cev;
          dual_value = cval;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    // Boundary moments drive the natural parameter to infinity.
    if (it >= 20 && lambda.norm() > 1e3 * lambda_ref &&
        fit.residual > opts.tol * scale)
      throw Infeasible("natural parameter diverging; target on the moment boundary");
  }
  fit.lambda = lambda;
  fit.lambda0 = ev.log_z;
  return fit;
}

// Fits the maxent distribution for a model's moment vector and fills the
// theta-sensitivities d lambda / d theta by central differences across
// warm-started refits. Statistics are averages over n_obs observations, so
// the joint-density natural parameters are n_obs times the per-observation
// fit.
inline MaxEntFit fit_maxent_model(const ModelSpec& model, const StatisticSet& set,
                                  const Support& support,
                                  MomentMethod method = MomentMethod::Analytic,
                                  const McOptions& mc = {}, double fd_step = 1e-5,
                                  const MaxEntOptions& opts = {}) {
  const ModelSpec single = model.with_n_obs(1);
  const VectorXd& th = model.theta();
  const MomentSummary center = moments_for(single, set, method, mc);
  MaxEntFit fit = fit_maxent(support, set, center.mu, opts);
  if (!fit.converged) return fit;

  const Eigen::Index n_par = th.size();
  fit.d_lambda.resize(set.size(), n_par);
  fit.d_lambda0.resize(n_par);
  for (Eigen::Index j = 0; j < n_par; ++j) {
    const double h = fd_step * std::max(1.0, std::abs(th[j]));
    VectorXd tp = th, tm = th;
    tp[j] += h;
    tm[j] -= h;
    const MomentSummary sp = moments_for(single.with_theta(tp), set, method, mc);
    const MomentSummary sm = moments_for(single.with_theta(tm), set, method, mc);
    const MaxEntFit fp = fit_maxent(support, set, sp.mu, opts, fit.lambda);
    const MaxEntFit fm = fit_maxent(support, set, sm.mu, opts, fit.lambda);
    if (!fp.converged || !fm.converged)
      throw NotConverged("sensitivity refit did not converge");
    fit.d_lambda.col(j) = (fp.lambda - fm.lambda) / (2.0 * h);
    fit.d_lambda0[j] = (fp.lambda0 - fm.lambda0) / (2.0 * h);
  }
  const double n_scale = static_cast<double>(model.n_obs());
  fit.lambda *= n_scale;
  fit.lambda0 *= n_scale;
  fit.d_lambda *= n_scale;
  fit.d_lambda0 *= n_scale;
  fit.n_obs = model.n_obs();
  return fit;
}

// F* = (d lambda/d theta)^T Sigma_true (d lambda/d theta), the outer
// product of the misspecified score under the true distribution.
inline InfoMatrix misspecified_fim(const MaxEntFit& fit, const SymMatrix& sigma_true) {
  if (!fit.converged) throw NotConverged("maxent fit did not converge");
  if (fit.d_lambda.size() == 0)
    throw InvalidParameter("fit has no theta-sensitivities; use fit_maxent_model");
  return InfoMatrix{SymMatrix(fit.d_lambda.transpose() * sigma_true.mat() * fit.d_lambda),
                    InfoMatrix::Kind::Misspecified, "maxent", VectorXd()};
}

struct CrossTerm {
  SymMatrix matrix;
  MatrixXd stderr_matrix;
};

// Monte Carlo estimate of the cross term
//   F~ = E[(score - m*) m*^T] + E[m* (score - m*)^T],
// where m* = (d lambda/d theta)^T (s - mu) is the misspecified score.
// Symmetric by construction of the two-term sum.
inline CrossTerm cross_term(const MaxEntFit& fit, const ModelSpec& model,
                            const StatisticSet& set, long k, std::uint64_t seed) {
  if (!fit.converged) throw NotConverged("maxent fit did not converge");
  if (!model.has(Capability::LogDensity))
    throw CapabilityMissing("cross_term needs the true model's score");
  const Eigen::Index n_par = model.theta().size();
  MatrixXd s1 = MatrixXd::Zero(n_par, n_par), s2 = MatrixXd::Zero(n_par, n_par);
  std::vector<double> y(static_cast<std::size_t>(model.n_obs()));
  VectorXd s(set.size());
  for (long t = 0; t < k; ++t) {
    model.sample_draw(seed, static_cast<std::uint64_t>(t), y);
    set.eval_into(y, s);
    const VectorXd sc = score(model, y);
    const VectorXd mstar = fit.d_lambda.transpose() * (s - fit.target_mu);
    const VectorXd diff = sc - mstar;
    const MatrixXd term = diff * mstar.transpose() + mstar * diff.transpose();
    s1 += term;
    s2 += term.cwiseProduct(term);
  }
  const MatrixXd mean = s1 / static_cast<double>(k);
  MatrixXd se(n_par, n_par);
  for (Eigen::Index i = 0; i < n_par; ++i)
    for (Eigen::Index j = 0; j < n_par; ++j) {
      const double var =
          std::max(0.0, s2(i, j) / static_cast<double>(k) - mean(i, j) * mean(i, j));
      se(i, j) = std::sqrt(var / static_cast<double>(k));
    }
  return CrossTerm{SymMatrix(mean), se};
}

// || d_lambda - Sigma^{-1} G ||_F, normalized: zero exactly when the fit
// meets the tightness condition.
inline double tight_condition_residual(const MaxEntFit& fit,
                                       const MomentSummary& summary) {
  if (!fit.converged) throw NotConverged("maxent fit did not converge");
  const MatrixXd opt = solve_spd(summary.sigma, summary.g);
  // Sensitivities were produced from the single-observation fit scaled by
  // N; Sigma carries a 1/N, so Sigma^{-1} G scales by N as well and the
  // two sides are directly comparable.
  return (fit.d_lambda - opt).norm() / std::max(1.0, opt.norm());
}

struct MisspecReport {
  InfoMatrix f_star;
  SymMatrix f_tilde;
  MatrixXd f_tilde_stderr;
  InfoMatrix pim;
  std::optional<InfoMatrix> fim;
  bool chain_holds = false;
  double chain_min_eig_lhs = 0.0;  // min eig of PIM - (F* + F~)
  double chain_min_eig_fim = 0.0;  // min eig of FIM - PIM, when FIM exists
  double gap_identity_residual = 0.0;
  double error_budget = 0.0;
  double tight_residual = 0.0;
};

struct ChainOptions {
  long mc_samples = 100000;
  std::uint64_t seed = 0;
  MomentMethod moment_method = MomentMethod::Analytic;
  McOptions moment_mc = {};
};

inline Support default_support(Family f) {
  switch (f) {
    case Family::BernoulliIid: return Support::finite({0.0, 1.0});
    case Family::ExponentialIid: return Support::half_line();
    default: return Support::real_line();
  }
}

// Assembles F*, F~, PIM, and (when the density exists) FIM, and checks the
// inequality chain F* + F~ <= PIM <= FIM along with the gap identity
//   F* + F~ = PIM - (Sigma^{-1} G - d_lambda)^T Sigma (Sigma^{-1} G - d_lambda).
inline MisspecReport bound_chain_check(const ModelSpec& model, const StatisticSet& set,
                                       const Support& support,
                                       const ChainOptions& opts = {}) {
  const MomentSummary summary =
      moments_for(model, set, opts.moment_method, opts.moment_mc);
  const MaxEntFit fit = fit_maxent_model(model, set, support, opts.moment_method,
                                         opts.moment_mc);
  if (!fit.converged) throw NotConverged("maxent fit did not converge");

  MisspecReport rep{misspecified_fim(fit, summary.sigma),
                    SymMatrix::zero(model.theta().size()),
                    MatrixXd(),
                    pim_bound(summary, model.theta()),
                    std::nullopt};
  const CrossTerm ct = cross_term(fit, model, set, opts.mc_samples, opts.seed);
  rep.f_tilde = ct.matrix;
  rep.f_tilde_stderr = ct.stderr_matrix;
  rep.tight_residual = tight_condition_residual(fit, summary);

  const SymMatrix lhs = rep.f_star.matrix + rep.f_tilde;
  const double tol_lhs =
      5.0 * ct.stderr_matrix.norm() + 1e-6 * std::max(1.0, rep.pim.matrix.frobenius());
  rep.chain_min_eig_lhs = min_eigenvalue(rep.pim.matrix - lhs);
  bool holds = rep.chain_min_eig_lhs >= -tol_lhs;

  if (model.has(Capability::AnalyticFim)) {
    rep.fim = analytic_fim(model);
    rep.chain_min_eig_fim = min_eigenvalue(rep.fim->matrix - rep.pim.matrix);
    holds = holds && rep.chain_min_eig_fim >=
                         -1e-8 * std::max(1.0, rep.fim->matrix.frobenius());
  } else if (model.has(Capability::LogDensity)) {
    const McFimResult f = mc_fim_with_stderr(model, opts.mc_samples, opts.seed + 1);
    rep.fim = f.info;
    rep.chain_min_eig_fim = min_eigenvalue(rep.fim->matrix - rep.pim.matrix);
    holds = holds && rep.chain_min_eig_fim >= -5.0 * f.stderr_matrix.norm();
  }
  rep.chain_holds = holds;

  const MatrixXd r = solve_spd(summary.sigma, summary.g) - fit.d_lambda;
  const SymMatrix gap(rep.pim.matrix.mat() -
                      r.transpose() * summary.sigma.mat() * r);
  rep.gap_identity_residual = (lhs - gap).frobenius();
  rep.error_budget = tol_lhs;
  return rep;
}

}  // namespace pim

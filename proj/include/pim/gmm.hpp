#pragma once
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pim/errors.hpp"
#include "pim/linalg.hpp"
#include "pim/moments.hpp"
#include "pim/pim.hpp"

namespace pim {

enum class WeightProvenance { IdentityFirstStep, EstimatedSigma, FixedWeight };

struct GmmResult {
  VectorXd theta_hat;
  int iterations = 0;
  bool converged = false;
  double final_cost = 0.0;
  WeightProvenance weight_provenance = WeightProvenance::EstimatedSigma;
  SymMatrix asymptotic_cov = SymMatrix::zero(1);
};

struct GmmOptions {
  int max_iter = 200;
  double tol = 1e-10;
  MomentMethod moment_method = MomentMethod::Analytic;
  McOptions moment_mc = {20000, 0, 1e-4};
  // When set, skips the two-step weighting and minimizes with this Sigma-hat.
  std::optional<SymMatrix> fixed_weight;
};

// V(theta) = 1/2 (s_obs - mu(theta))^T Sigma-hat^{-1} (s_obs - mu(theta)),
// evaluated by solve rather than inversion.
template <typename MomentFn>
double gmm_cost(const VectorXd& theta, const VectorXd& s_obs,
                const SymMatrix& sigma_hat, MomentFn&& mu_of_theta) {
  const VectorXd r = s_obs - mu_of_theta(theta);
  return 0.5 * r.dot(solve_spd(sigma_hat, r));
}

namespace detail {

// Moments of the averaged statistics at theta for a model with N
// observations. The Monte Carlo path simulates single observations (same
// seed every call, so the simulated moment surface is smooth in theta)
// and applies the exact 1/N covariance scaling.
inline MomentSummary gmm_moments(const ModelSpec& model, const StatisticSet& set,
                                 const VectorXd& theta, const GmmOptions& opts) {
  if (opts.moment_method == MomentMethod::Analytic)
    return analytic_moments(model.with_theta(theta), set);
  MomentSummary s = mc_moments(model.with_theta(theta).with_n_obs(1), set,
                               opts.moment_mc.samples, opts.moment_mc.seed,
                               opts.moment_mc.fd_step);
  s.sigma = s.sigma.scaled(1.0 / static_cast<double>(model.n_obs()));
  return s;
}

struct ScoringOutcome {
  VectorXd theta;
  int iterations = 0;
  bool converged = false;
  double cost = 0.0;
  SymMatrix f_star = SymMatrix::zero(1);
};

// Scoring iteration theta <- theta + F*^{-1} G^T W (s_obs - mu) with
// W = Sigma-hat^{-1} (or identity), step halving on domain exit or cost
// increase.
inline ScoringOutcome scoring_minimize(const ModelSpec& model, const StatisticSet& set,
                                       const VectorXd& s_obs, VectorXd theta,
                                       const std::optional<SymMatrix>& sigma_hat,
                                       const GmmOptions& opts) {
  auto weighted = [&](const MatrixXd& x) -> MatrixXd {
    return sigma_hat ? solve_spd(*sigma_hat, x) : x;
  };
  auto weighted_v = [&](const VectorXd& x) -> VectorXd {
    return sigma_hat ? solve_spd(*sigma_hat, x) : x;
  };
  ScoringOutcome out;
  MomentSummary mom = gmm_moments(model, set, theta, opts);
  VectorXd r = s_obs - mom.mu;
  double cost = 0.5 * r.dot(weighted_v(r));
  for (int it = 0; it < opts.max_iter; ++it) {
    out.iterations = it + 1;
    const MatrixXd wg = weighted(mom.g);
    const VectorXd grad = -mom.g.transpose() * weighted_v(r);
    SymMatrix f_star(mom.g.transpose() * wg);
    out.f_star = f_star;
    if (grad.norm() <= opts.tol) {
      out.converged = true;
      out.iterations = it;
      break;
    }
    VectorXd step;
    try {
      step = solve_spd(f_star, VectorXd(-grad));
    } catch (const NotPositiveDefinite& e) {
      throw SingularPim(std::string("theta not identified by the statistic set: ") +
                        e.what());
    }
    double alpha = 1.0;
    bool accepted = false;
    VectorXd cand;
    MomentSummary cand_mom = mom;
    double cand_cost = cost;
    for (int halving = 0; halving < 30; ++halving) {
      cand = theta + alpha * step;
      if (ModelSpec::in_domain(model.family(), cand, model.config())) {
        cand_mom = gmm_moments(model, set, cand, opts);
        const VectorXd cr = s_obs - cand_mom.mu;
        cand_cost = 0.5 * cr.dot(weighted_v(cr));
        if (cand_cost <= cost + 1e-14 * std::max(1.0, std::abs(cost))) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!ModelSpec::in_domain(model.family(), cand, model.config()))
        throw DomainExit("no feasible halved step from theta");
      // Cost cannot be reduced further; treat as a stationary point.
      out.converged = grad.norm() <= std::sqrt(opts.tol);
      break;
    }
    const double step_norm = (alpha * step).norm();
    theta = cand;
    mom = cand_mom;
    r = s_obs - mom.mu;
    cost = cand_cost;
    if (step_norm <= opts.tol * std::max(1.0, theta.norm())) {
      out.converged = true;
      break;
    }
  }
  out.theta = theta;
  out.cost = cost;
  return out;
}

}  // namespace detail

// Two-step optimally weighted GMM: an identity-weighted preliminary pass,
// then scoring with Sigma-hat evaluated at the preliminary estimate.
inline GmmResult estimate(const ModelSpec& model_at_init, const VectorXd& s_obs,
                          const StatisticSet& set, const GmmOptions& opts = {}) {
  if (set.size() < model_at_init.theta().size())
    throw InvalidParameter("GMM requires M >= n");
  GmmResult res;
  if (opts.fixed_weight) {
    const auto out = detail::scoring_minimize(model_at_init, set, s_obs,
                                              model_at_init.theta(),
                                              opts.fixed_weight, opts);
    if (!out.converged) throw NotConverged("GMM scoring did not converge");
    res.theta_hat = out.theta;
    res.iterations = out.iterations;
    res.converged = true;
    res.final_cost = out.cost;
    res.weight_provenance = WeightProvenance::FixedWeight;
    res.asymptotic_cov = SymMatrix(solve_spd(
        out.f_star, MatrixXd(MatrixXd::Identity(out.theta.size(), out.theta.size()))));
    return res;
  }

  const auto step1 = detail::scoring_minimize(model_at_init, set, s_obs,
                                              model_at_init.theta(), std::nullopt, opts);
  if (!step1.converged) throw NotConverged("identity-weighted first step did not converge");

  const SymMatrix sigma_hat =
      detail::gmm_moments(model_at_init, set, step1.theta, opts).sigma;
  const auto step2 = detail::scoring_minimize(model_at_init, set, s_obs, step1.theta,
                                              sigma_hat, opts);
  if (!step2.converged) throw NotConverged("optimally weighted second step did not converge");

  res.theta_hat = step2.theta;
  res.iterations = step1.iterations + step2.iterations;
  res.converged = true;
  res.final_cost = step2.cost;
  res.weight_provenance = WeightProvenance::EstimatedSigma;
  res.asymptotic_cov = SymMatrix(solve_spd(
      step2.f_star,
      MatrixXd(MatrixXd::Identity(step2.theta.size(), step2.theta.size()))));
  return res;
}

// Family-specific rough method-of-moments initialization from a dataset.
inline VectorXd default_init(Family family, std::span<const double> y,
                             const ModelConfig& cfg = {}) {
  const double n = static_cast<double>(y.size());
  double m1 = 0.0, m2 = 0.0;
  for (double v : y) {
    m1 += v;
    m2 += v * v;
  }
  m1 /= n;
  m2 /= n;
  const double var = std::max(m2 - m1 * m1, 1e-6);
  switch (family) {
    case Family::ExponentialIid:
      return VectorXd::Constant(1, 1.0 / std::max(m1, 1e-12));
    case Family::GaussianIid:
    case Family::TransformedGaussian: {
      VectorXd t(2);
      t << m1, var;
      return t;
    }
    case Family::LaplaceIid:
      return VectorXd::Constant(1, m1);
    case Family::BernoulliIid:
      return VectorXd::Constant(1, std::clamp(m1, 1e-3, 1.0 - 1e-3));
  }
  (void)cfg;
  return VectorXd();
}

struct StudyReport {
  long reps = 0;
  long failures = 0;
  SymMatrix empirical_cov = SymMatrix::zero(1);
  SymMatrix predicted_cov = SymMatrix::zero(1);  // inverse PIM at the true theta
  double max_relative_diagonal_error = 0.0;
  VectorXd bias;
  VectorXd bias_stderr;
  std::vector<VectorXd> estimates;
  std::vector<int> rep_iterations;
};

struct StudyOptions {
  GmmOptions gmm = {};
  // Source for the predicted covariance (PIM at the true theta).
  MomentMethod pim_method = MomentMethod::Analytic;
  McOptions pim_mc = {};
};

// Monte Carlo estimator study: reps independent datasets, a GMM fit on
// each, and the empirical estimator covariance compared against the
// inverse PIM prediction. Per-rep failures are tolerated up to 1%.
inline StudyReport mc_estimator_study(const ModelSpec& true_model,
                                      const StatisticSet& set, long reps,
                                      std::uint64_t seed,
                                      const StudyOptions& opts = {}) {
  if (reps < 100) throw InvalidParameter("mc_estimator_study needs reps >= 100");
  const VectorXd theta_true = true_model.theta();
  const Eigen::Index n_par = theta_true.size();

  MomentSummary pred_summary;
  if (opts.pim_method == MomentMethod::Analytic) {
    pred_summary = analytic_moments(true_model, set);
  } else {
    pred_summary = mc_moments(true_model.with_n_obs(1), set, opts.pim_mc.samples,
                              opts.pim_mc.seed, opts.pim_mc.fd_step);
    pred_summary.sigma =
        pred_summary.sigma.scaled(1.0 / static_cast<double>(true_model.n_obs()));
  }
  const InfoMatrix b = pim_bound(pred_summary, theta_true);
  SymMatrix predicted = SymMatrix::zero(n_par);
  try {
    predicted =
        SymMatrix(solve_spd(b.matrix, MatrixXd(MatrixXd::Identity(n_par, n_par))));
  } catch (const NotPositiveDefinite& e) {
    throw SingularPim(std::string("PIM at the true theta is singular: ") + e.what());
  }

  StudyReport rep;
  rep.reps = reps;
  rep.predicted_cov = predicted;
  std::vector<double> y(static_cast<std::size_t>(true_model.n_obs()));
  for (long r = 0; r < reps; ++r) {
    true_model.sample_draw(seed, static_cast<std::uint64_t>(r), y);
    try {
      const VectorXd init = default_init(true_model.family(), y, true_model.config());
      const VectorXd s_obs = set.eval(y);
      const GmmResult fit =
          estimate(true_model.with_theta(init), s_obs, set, opts.gmm);
      rep.estimates.push_back(fit.theta_hat);
      rep.rep_iterations.push_back(fit.iterations);
    } catch (const Error&) {
      ++rep.failures;
    }
  }
  if (rep.failures * 100 > reps)
    throw StudyFailed(std::to_string(rep.failures) + " of " + std::to_string(reps) +
                      " replicates failed");

  const long n_ok = static_cast<long>(rep.estimates.size());
  VectorXd mean = VectorXd::Zero(n_par);
  for (const auto& t : rep.estimates) mean += t;
  mean /= static_cast<double>(n_ok);
  MatrixXd cov = MatrixXd::Zero(n_par, n_par);
  for (const auto& t : rep.estimates) {
    const VectorXd d = t - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(n_ok - 1);
  rep.empirical_cov = SymMatrix(cov);
  rep.bias = mean - theta_true;
  rep.bias_stderr = (cov.diagonal() / static_cast<double>(n_ok)).cwiseSqrt();
  for (Eigen::Index i = 0; i < n_par; ++i)
    rep.max_relative_diagonal_error =
        std::max(rep.max_relative_diagonal_error,
                 std::abs(cov(i, i) - predicted(i, i)) / predicted(i, i));
  return rep;
}

}  // namespace pim

#pragma once
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pim/errors.hpp"
#include "pim/linalg.hpp"
#include "pim/models.hpp"
#include "pim/statistics.hpp"

namespace pim {

enum class MomentMethod { Analytic, MonteCarlo };

// The (mu, Sigma, G) triple for a (model, statistic set) pair, with
// provenance. G is M x n with G(i,j) = d mu_i / d theta_j.
struct MomentSummary {
  VectorXd mu;
  SymMatrix sigma = SymMatrix::zero(1);
  MatrixXd g;
  MomentMethod method = MomentMethod::Analytic;
  std::optional<VectorXd> mc_stderr_mu;
  std::optional<MatrixXd> mc_stderr_sigma;
  std::optional<MatrixXd> mc_stderr_g;
  std::optional<long> mc_samples;
  std::optional<std::uint64_t> seed;
  double fd_step = 0.0;
};

namespace detail {

// Raw single-observation moments m_0..m_K and their theta-derivatives.
struct RawMoments {
  VectorXd m;    // length K+1, m[0] = 1
  MatrixXd dm;   // (K+1) x n
};

inline int analytic_degree_cap(Family f) {
  switch (f) {
    case Family::GaussianIid: return 4;
    case Family::ExponentialIid:
    case Family::LaplaceIid:
    case Family::BernoulliIid: return 2;
    default: return 0;
  }
}

inline RawMoments raw_moments(const ModelSpec& model, int max_order) {
  const VectorXd& th = model.theta();
  RawMoments r;
  r.m = VectorXd::Zero(max_order + 1);
  r.dm = MatrixXd::Zero(max_order + 1, th.size());
  r.m[0] = 1.0;
  switch (model.family()) {
    case Family::GaussianIid: {
      const double mu = th[0], s2 = th[1];
      for (int k = 1; k <= max_order; ++k) {
        r.m[k] = mu * r.m[k - 1] + (k - 1) * s2 * (k >= 2 ? r.m[k - 2] : 0.0);
        r.dm(k, 0) = k * r.m[k - 1];
        r.dm(k, 1) = k >= 2 ? 0.5 * k * (k - 1) * r.m[k - 2] : 0.0;
      }
      break;
    }
    case Family::ExponentialIid: {
      const double rate = th[0];
      double fact = 1.0;
      for (int k = 1; k <= max_order; ++k) {
        fact *= k;
        r.m[k] = fact / std::pow(rate, k);
        r.dm(k, 0) = -k * r.m[k] / rate;
      }
      break;
    }
    case Family::LaplaceIid: {
      const double loc = th[0], b = model.config().laplace_scale;
      // Central moments of Laplace(0, b): c_{2j} = (2j)! b^{2j}, odd zero.
      std::vector<double> c(static_cast<std::size_t>(max_order) + 1, 0.0);
      c[0] = 1.0;
      double fact = 1.0;
      for (int k = 1; k <= max_order; ++k) {
        fact *= k;
        if (k % 2 == 0) c[static_cast<std::size_t>(k)] = fact * std::pow(b, k);
      }
      for (int k = 1; k <= max_order; ++k) {
        double mk = 0.0, binom = 1.0;
        for (int i = 0; i <= k; ++i) {
          mk += binom * std::pow(loc, k - i) * c[static_cast<std::size_t>(i)];
          binom = binom * (k - i) / (i + 1);
        }
        r.m[k] = mk;
        r.dm(k, 0) = k * r.m[k - 1];
      }
      break;
    }
    case Family::BernoulliIid: {
      for (int k = 1; k <= max_order; ++k) {
        r.m[k] = th[0];
        r.dm(k, 0) = 1.0;
      }
      break;
    }
    default:
      throw UnsupportedAnalytic(std::string(family_name(model.family())) +
                                " has no closed-form moments");
  }
  return r;
}

}  // namespace detail

// Exact moments from closed-form raw moments. Statistics are averages over
// the N i.i.d. observations, so mu is N-free and Sigma = Sigma_1 / N.
inline MomentSummary analytic_moments(const ModelSpec& model, const StatisticSet& set) {
  if (!model.has(Capability::AnalyticMoments))
    throw UnsupportedAnalytic(std::string(family_name(model.family())) +
                              " has no analytic moments");
  if (!set.all_monomial())
    throw UnsupportedAnalytic("analytic moments cover monomial statistics only");
  const int cap = detail::analytic_degree_cap(model.family());
  if (set.max_degree() > cap)
    throw UnsupportedAnalytic("degree " + std::to_string(set.max_degree()) +
                              " beyond the closed-form cap " + std::to_string(cap) +
                              " for " + family_name(model.family()));
  const Eigen::Index m_count = set.size();
  const auto raw = detail::raw_moments(model, 2 * set.max_degree());
  const double n_obs = static_cast<double>(model.n_obs());

  MomentSummary out{VectorXd(m_count), SymMatrix::zero(m_count),
                    MatrixXd(m_count, model.theta().size())};
  MatrixXd sigma1(m_count, m_count);
  for (Eigen::Index i = 0; i < m_count; ++i) {
    const int di = set.at(i).degree;
    out.mu[i] = raw.m[di];
    out.g.row(i) = raw.dm.row(di);
    for (Eigen::Index j = 0; j < m_count; ++j) {
      const int dj = set.at(j).degree;
      sigma1(i, j) = raw.m[di + dj] - raw.m[di] * raw.m[dj];
    }
  }
  out.sigma = SymMatrix(sigma1 / n_obs);
  out.method = MomentMethod::Analytic;
  return out;
}

// Monte Carlo moments with seeded substreams. G uses central finite
// differences with common random numbers: the same substreams are replayed
// at theta +/- h so most of the sampling noise cancels in the quotient.
inline MomentSummary mc_moments(const ModelSpec& model, const StatisticSet& set,
                                long k, std::uint64_t seed, double fd_step = 1e-4) {
  if (k < 2) throw InvalidParameter("mc_moments needs k >= 2");
  const Eigen::Index m_count = set.size();
  const Eigen::Index n_par = model.theta().size();
  const std::size_t n_obs = static_cast<std::size_t>(model.n_obs());

  MatrixXd stats(k, m_count);
  std::vector<double> y(n_obs);
  VectorXd row(m_count);
  for (long t = 0; t < k; ++t) {
    model.sample_draw(seed, static_cast<std::uint64_t>(t), y);
    set.eval_into(y, row);
    stats.row(t) = row;
  }
  const VectorXd mu = stats.colwise().mean();
  MatrixXd centered = stats.rowwise() - mu.transpose();
  MatrixXd sigma = (centered.transpose() * centered) / static_cast<double>(k - 1);

  VectorXd stderr_mu(m_count);
  for (Eigen::Index i = 0; i < m_count; ++i)
    stderr_mu[i] = std::sqrt(sigma(i, i) / static_cast<double>(k));

  // Standard error of each covariance entry from the spread of the
  // per-draw centered products.
  MatrixXd stderr_sigma(m_count, m_count);
  for (Eigen::Index i = 0; i < m_count; ++i)
    for (Eigen::Index j = i; j < m_count; ++j) {
      double s1 = 0.0, s2 = 0.0;
      for (long t = 0; t < k; ++t) {
        const double p = centered(t, i) * centered(t, j);
        s1 += p;
        s2 += p * p;
      }
      const double mean_p = s1 / static_cast<double>(k);
      const double var_p =
          std::max(0.0, s2 / static_cast<double>(k) - mean_p * mean_p);
      stderr_sigma(i, j) = stderr_sigma(j, i) =
          std::sqrt(var_p / static_cast<double>(k));
    }

  MatrixXd g(m_count, n_par), stderr_g(m_count, n_par);
  std::vector<double> yp(n_obs), ym(n_obs);
  VectorXd rp(m_count), rm(m_count);
  for (Eigen::Index j = 0; j < n_par; ++j) {
    const double h = fd_step * std::max(1.0, std::abs(model.theta()[j]));
    VectorXd tp = model.theta(), tm = model.theta();
    tp[j] += h;
    tm[j] -= h;
    const ModelSpec mp = model.with_theta(tp);
    const ModelSpec mm = model.with_theta(tm);
    VectorXd s1 = VectorXd::Zero(m_count), s2 = VectorXd::Zero(m_count);
    for (long t = 0; t < k; ++t) {
      mp.sample_draw(seed, static_cast<std::uint64_t>(t), yp);
      mm.sample_draw(seed, static_cast<std::uint64_t>(t), ym);
      set.eval_into(yp, rp);
      set.eval_into(ym, rm);
      const VectorXd d = (rp - rm) / (2.0 * h);
      s1 += d;
      s2 += d.cwiseProduct(d);
    }
    for (Eigen::Index i = 0; i < m_count; ++i) {
      const double mean_d = s1[i] / static_cast<double>(k);
      const double var_d =
          std::max(0.0, s2[i] / static_cast<double>(k) - mean_d * mean_d);
      g(i, j) = mean_d;
      stderr_g(i, j) = std::sqrt(var_d / static_cast<double>(k));
    }
  }

  MomentSummary out{mu, SymMatrix(sigma), g};
  out.method = MomentMethod::MonteCarlo;
  out.mc_stderr_mu = stderr_mu;
  out.mc_stderr_sigma = stderr_sigma;
  out.mc_stderr_g = stderr_g;
  out.mc_samples = k;
  out.seed = seed;
  out.fd_step = fd_step;
  return out;
}

struct McOptions {
  long samples = 1000000;
  std::uint64_t seed = 0;
  double fd_step = 1e-4;
};

// Analytic moments when the family and degrees allow it, Monte Carlo
// otherwise.
inline MomentSummary moments_for(const ModelSpec& model, const StatisticSet& set,
                                 MomentMethod method, const McOptions& mc = {}) {
  if (method == MomentMethod::Analytic) return analytic_moments(model, set);
  return mc_moments(model, set, mc.samples, mc.seed, mc.fd_step);
}

inline MomentSummary moments_auto(const ModelSpec& model, const StatisticSet& set,
                                  const McOptions& mc = {}) {
  try {
    return analytic_moments(model, set);
  } catch (const UnsupportedAnalytic&) {
    return mc_moments(model, set, mc.samples, mc.seed, mc.fd_step);
  }
}

// Monte Carlo check of the identity E[score * (s - mu)^T] = G^T.
struct ScoreMomentReport {
  MatrixXd estimate;       // n x M
  MatrixXd stderr_matrix;  // n x M
  double max_dev_stderr;   // worst |estimate - G^T| in stderr units
};

inline ScoreMomentReport score_moment_identity_check(const ModelSpec& model,
                                                     const StatisticSet& set,
                                                     const MomentSummary& summary,
                                                     long k, std::uint64_t seed) {
  if (!model.has(Capability::LogDensity))
    throw CapabilityMissing("score_moment_identity_check needs a density");
  const Eigen::Index n_par = model.theta().size();
  const Eigen::Index m_count = set.size();
  MatrixXd s1 = MatrixXd::Zero(n_par, m_count), s2 = MatrixXd::Zero(n_par, m_count);
  std::vector<double> y(static_cast<std::size_t>(model.n_obs()));
  VectorXd s(m_count);
  for (long t = 0; t < k; ++t) {
    model.sample_draw(seed, static_cast<std::uint64_t>(t), y);
    set.eval_into(y, s);
    const MatrixXd outer = score(model, y) * (s - summary.mu).transpose();
    s1 += outer;
    s2 += outer.cwiseProduct(outer);
  }
  ScoreMomentReport rep;
  rep.estimate = s1 / static_cast<double>(k);
  rep.stderr_matrix.resize(n_par, m_count);
  rep.max_dev_stderr = 0.0;
  const MatrixXd target = summary.g.transpose();
  for (Eigen::Index i = 0; i < n_par; ++i)
    for (Eigen::Index j = 0; j < m_count; ++j) {
      const double mean = rep.estimate(i, j);
      const double var =
          std::max(0.0, s2(i, j) / static_cast<double>(k) - mean * mean);
      const double se = std::max(std::sqrt(var / static_cast<double>(k)), 1e-300);
      rep.stderr_matrix(i, j) = se;
      rep.max_dev_stderr =
          std::max(rep.max_dev_stderr, std::abs(mean - target(i, j)) / se);
    }
  return rep;
}

}  // namespace pim

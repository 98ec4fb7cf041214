#pragma once
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pim/errors.hpp"
#include "pim/info_matrix.hpp"
#include "pim/linalg.hpp"
#include "pim/moments.hpp"

namespace pim {

// B = G^T Sigma^{-1} G, the optimal moment-based lower bound on the FIM.
// Computed by factorization-solve and symmetrized afterwards. A ridge
// epsilon > 0 opts into retrying a singular Sigma with
// Sigma + eps * trace(Sigma)/M * I; the result is flagged "ridged" since
// the lower-bound property is no longer exact.
inline InfoMatrix pim_bound(const MomentSummary& summary, const VectorXd& theta,
                            double ridge = 0.0) {
  const Eigen::Index m_count = summary.sigma.dim();
  const Eigen::Index n_par = summary.g.cols();
  if (m_count < n_par)
    throw InvalidParameter("PIM requires M >= n (got M=" + std::to_string(m_count) +
                           ", n=" + std::to_string(n_par) + ")");
  std::string method = summary.method == MomentMethod::Analytic ? "analytic" : "monte-carlo";
  MatrixXd x;
  try {
    x = solve_spd(summary.sigma, summary.g);
  } catch (const NotPositiveDefinite& e) {
    if (ridge <= 0.0) throw SingularSigma(e.what());
    const double eps = ridge * summary.sigma.trace() / static_cast<double>(m_count);
    const SymMatrix ridged(summary.sigma.mat() +
                           eps * MatrixXd::Identity(m_count, m_count));
    x = solve_spd(ridged, summary.g);
    method += "+ridged";
  }
  return InfoMatrix{SymMatrix(summary.g.transpose() * x), InfoMatrix::Kind::Pim,
                    method, theta};
}

// K^T W (W^T Sigma W)^{-1} W^T K: the bound induced by an arbitrary linear
// combiner W (M x n). Rejects near-singular W^T Sigma W rather than
// pseudo-inverting (condition number cap 1e12).
inline InfoMatrix combiner_bound(const MomentSummary& summary, const MatrixXd& w,
                                 const VectorXd& theta) {
  if (w.rows() != summary.sigma.dim())
    throw DimensionMismatch("combiner W must have M rows");
  const SymMatrix wsw(w.transpose() * summary.sigma.mat() * w);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(wsw.mat(), Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0 || hi / lo > 1e12)
    throw RankDeficientCombiner("W^T Sigma W is singular or has condition > 1e12");
  const MatrixXd wk = w.transpose() * summary.g;  // n x n
  const MatrixXd x = solve_spd(wsw, wk);
  return InfoMatrix{SymMatrix(wk.transpose() * x), InfoMatrix::Kind::CombinerBound,
                    "combiner", theta};
}

// Rank-one update for an extension of s by one statistic with covariance
// column c, variance kappa and mean-gradient row d:
//   B_{M+1} = B_M + (d - G^T Sigma^{-1} c)(d - G^T Sigma^{-1} c)^T
//             / (kappa - c^T Sigma^{-1} c).
inline InfoMatrix pim_extend(const InfoMatrix& b_m, const MomentSummary& summary_m,
                             const VectorXd& c, double kappa, const VectorXd& d) {
  const VectorXd sc = solve_spd(summary_m.sigma, c);
  const double schur = kappa - c.dot(sc);
  if (schur <= 0.0)
    throw NonPositiveSchur("kappa - c^T Sigma^{-1} c = " + std::to_string(schur));
  const VectorXd v = d - summary_m.g.transpose() * sc;
  return InfoMatrix{SymMatrix(b_m.matrix.mat() + v * v.transpose() / schur),
                    InfoMatrix::Kind::Pim, b_m.method + "+rank1", b_m.theta};
}

struct LadderRung {
  Eigen::Index m_count = 0;
  std::optional<InfoMatrix> bound;
  // Min eigenvalue of B_M - B_{M-1}; absent on the first rung.
  std::optional<double> succ_min_eigenvalue;
  // Relative deviation of the rank-one update from the full recompute,
  // available on analytic rungs.
  std::optional<double> rank1_rel_error;
  std::string error;  // nonempty when the rung failed
};

struct LadderReport {
  std::vector<LadderRung> rungs;
  bool monotone = false;
  double tolerance = 0.0;
};

// Computes the PIM at every rung of a nested statistic-set chain and
// verifies that each extension can only grow the bound.
inline LadderReport ladder(const ModelSpec& model, const std::vector<StatisticSet>& sets,
                           MomentMethod method, const McOptions& mc = {},
                           double rel_tol = 1e-8) {
  LadderReport report;
  report.tolerance = rel_tol;
  report.monotone = true;
  std::optional<InfoMatrix> prev;
  std::optional<MomentSummary> prev_summary;
  for (std::size_t r = 0; r < sets.size(); ++r) {
    LadderRung rung;
    rung.m_count = sets[r].size();
    if (r > 0 && sets[r].size() != sets[r - 1].size() + 1)
      throw InvalidParameter("ladder sets must extend by exactly one statistic");
    try {
      MomentSummary summary = moments_for(model, sets[r], method, mc);
      InfoMatrix b = pim_bound(summary, model.theta());
      if (prev) {
        const auto cmp = loewner_leq(prev->matrix, b.matrix, rel_tol);
        rung.succ_min_eigenvalue = cmp.min_eigenvalue;
        if (!cmp.holds) report.monotone = false;
        if (prev_summary && method == MomentMethod::Analytic) {
          // Cross-check against the rank-one extension of the previous rung.
          const Eigen::Index m_prev = prev_summary->sigma.dim();
          const VectorXd c = summary.sigma.mat().block(0, m_prev, m_prev, 1);
          const double kappa = summary.sigma(m_prev, m_prev);
          const VectorXd d = summary.g.row(m_prev);
          const InfoMatrix ext = pim_extend(*prev, *prev_summary, c, kappa, d);
          rung.rank1_rel_error = (ext.matrix - b.matrix).frobenius() /
                                 std::max(1.0, b.matrix.frobenius());
        }
      }
      rung.bound = b;
      prev = b;
      prev_summary = summary;
    } catch (const Error& e) {
      rung.error = e.what();
      prev.reset();
      prev_summary.reset();
    }
    report.rungs.push_back(std::move(rung));
  }
  return report;
}

}  // namespace pim

#pragma once
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pim/errors.hpp"
#include "pim/info_matrix.hpp"
#include "pim/models.hpp"

namespace pim {

struct McFimResult {
  InfoMatrix info;
  MatrixXd stderr_matrix;  // per-entry Monte Carlo standard error
};

// Sample average of score outer products: the definition of the FIM,
// estimated directly. PSD by construction.
inline McFimResult mc_fim_with_stderr(const ModelSpec& model, long k,
                                      std::uint64_t seed) {
  if (!model.has(Capability::LogDensity))
    throw CapabilityMissing(std::string(family_name(model.family())) +
                            ": FIM unavailable without a density");
  if (k < 2) throw InvalidParameter("mc_fim needs k >= 2");
  const Eigen::Index n_par = model.theta().size();
  MatrixXd s1 = MatrixXd::Zero(n_par, n_par), s2 = MatrixXd::Zero(n_par, n_par);
  std::vector<double> y(static_cast<std::size_t>(model.n_obs()));
  for (long t = 0; t < k; ++t) {
    model.sample_draw(seed, static_cast<std::uint64_t>(t), y);
    const VectorXd sc = score(model, y);
    const MatrixXd outer = sc * sc.transpose();
    s1 += outer;
    s2 += outer.cwiseProduct(outer);
  }
  const MatrixXd mean = s1 / static_cast<double>(k);
  MatrixXd se(n_par, n_par);
  for (Eigen::Index i = 0; i < n_par; ++i)
    for (Eigen::Index j = 0; j < n_par; ++j) {
      const double var =
          std::max(0.0, s2(i, j) / static_cast<double>(k) - mean(i, j) * mean(i, j));
      se(i, j) = std::sqrt(var / static_cast<double>(k));
    }
  return McFimResult{
      InfoMatrix{SymMatrix(mean), InfoMatrix::Kind::Fim,
                 "monte-carlo k=" + std::to_string(k) + " seed=" + std::to_string(seed),
                 model.theta()},
      se};
}

inline InfoMatrix mc_fim(const ModelSpec& model, long k, std::uint64_t seed) {
  return mc_fim_with_stderr(model, k, seed).info;
}

// Best available FIM: analytic when the family has one, Monte Carlo when
// only a density exists, absent for density-free models.
inline std::optional<InfoMatrix> fim_or_none(const ModelSpec& model, long k,
                                             std::uint64_t seed) {
  if (model.has(Capability::AnalyticFim)) return analytic_fim(model);
  if (model.has(Capability::LogDensity)) return mc_fim(model, k, seed);
  return std::nullopt;
}

}  // namespace pim

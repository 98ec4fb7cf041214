#pragma once
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pim/errors.hpp"
#include "pim/info_matrix.hpp"
#include "pim/rng.hpp"

namespace pim {

enum class Family {
  GaussianIid,      // theta = (mu, sigma^2)
  ExponentialIid,   // theta = (rate)
  LaplaceIid,       // theta = (location), known scale b
  BernoulliIid,     // theta = (p)
  TransformedGaussian,  // y = u + c*u^3, u ~ N(theta1, theta2); density intractable
};

enum class Capability { Sample, LogDensity, Score, AnalyticFim, AnalyticMoments };

struct ModelConfig {
  double laplace_scale = 1.0;  // known b
  double cubic_coeff = 0.1;    // c in y = u + c*u^3
};

inline const char* family_name(Family f) {
  switch (f) {
    case Family::GaussianIid: return "gaussian-iid";
    case Family::ExponentialIid: return "exponential-iid";
    case Family::LaplaceIid: return "laplace-iid";
    case Family::BernoulliIid: return "bernoulli-iid";
    case Family::TransformedGaussian: return "transformed-gaussian";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "gaussian" || s == "gaussian-iid") return Family::GaussianIid;
  if (s == "exponential" || s == "exponential-iid") return Family::ExponentialIid;
  if (s == "laplace" || s == "laplace-iid") return Family::LaplaceIid;
  if (s == "bernoulli" || s == "bernoulli-iid") return Family::BernoulliIid;
  if (s == "transformed-gaussian" || s == "transformed") return Family::TransformedGaussian;
  throw InvalidParameter("unknown model family '" + s + "'");
}

// A statistical family pinned at a parameter point theta, with N i.i.d.
// scalar observations per data vector.
class ModelSpec {
 public:
  ModelSpec(Family family, VectorXd theta, int n_obs, ModelConfig cfg = {})
      : family_(family), theta_(std::move(theta)), n_obs_(n_obs), cfg_(cfg) {
    if (n_obs_ < 1) throw InvalidParameter("n_obs must be >= 1");
    if (theta_.size() != param_dim(family_))
      throw InvalidParameter(std::string(family_name(family_)) + " needs " +
                             std::to_string(param_dim(family_)) + " parameters");
    if (!in_domain(family_, theta_, cfg_))
      throw InvalidParameter(std::string(family_name(family_)) +
                             ": theta outside the open parameter domain");
  }

  static Eigen::Index param_dim(Family f) {
    switch (f) {
      case Family::GaussianIid:
      case Family::TransformedGaussian: return 2;
      default: return 1;
    }
  }

  static bool in_domain(Family f, const VectorXd& theta, const ModelConfig& cfg) {
    switch (f) {
      case Family::GaussianIid:
      case Family::TransformedGaussian: return theta[1] > 0.0;
      case Family::ExponentialIid: return theta[0] > 0.0;
      case Family::LaplaceIid: return cfg.laplace_scale > 0.0;
      case Family::BernoulliIid: return theta[0] > 0.0 && theta[0] < 1.0;
    }
    return false;
  }

  bool has(Capability c) const {
    if (c == Capability::Sample) return true;
    if (family_ == Family::TransformedGaussian) return false;
    return true;  // the four tractable families support everything
  }

  Family family() const { return family_; }
  const VectorXd& theta() const { return theta_; }
  int n_obs() const { return n_obs_; }
  const ModelConfig& config() const { return cfg_; }

  ModelSpec with_theta(VectorXd theta) const {
    return ModelSpec(family_, std::move(theta), n_obs_, cfg_);
  }
  ModelSpec with_n_obs(int n) const { return ModelSpec(family_, theta_, n, cfg_); }

  // Fills one data vector y from substream `draw_index` of stream `seed`.
  // Observations use the inverse transform where possible so that the same
  // substream at perturbed theta yields common-random-numbers coupling.
  void sample_draw(std::uint64_t seed, std::uint64_t draw_index,
                   std::span<double> out) const {
    SubstreamRng rng(seed, draw_index);
    for (double& y : out) y = draw_obs(rng);
  }

  double draw_obs(SubstreamRng& rng) const {
    switch (family_) {
      case Family::GaussianIid:
        return theta_[0] + std::sqrt(theta_[1]) * rng.next_normal();
      case Family::ExponentialIid:
        return -std::log(rng.next_uniform()) / theta_[0];
      case Family::LaplaceIid: {
        const double u = rng.next_uniform();
        const double b = cfg_.laplace_scale;
        return u < 0.5 ? theta_[0] + b * std::log(2.0 * u)
                       : theta_[0] - b * std::log(2.0 * (1.0 - u));
      }
      case Family::BernoulliIid:
        return rng.next_uniform() < theta_[0] ? 1.0 : 0.0;
      case Family::TransformedGaussian: {
        const double u = theta_[0] + std::sqrt(theta_[1]) * rng.next_normal();
        return u + cfg_.cubic_coeff * u * u * u;
      }
    }
    return 0.0;
  }

 private:
  Family family_;
  VectorXd theta_;
  int n_obs_;
  ModelConfig cfg_;
};

struct SampleBatch {
  std::vector<std::vector<double>> draws;
  std::uint64_t seed = 0;
};

inline SampleBatch sample(const ModelSpec& model, std::size_t k, std::uint64_t seed) {
  SampleBatch batch;
  batch.seed = seed;
  batch.draws.assign(k, std::vector<double>(static_cast<std::size_t>(model.n_obs())));
  for (std::size_t j = 0; j < k; ++j)
    model.sample_draw(seed, j, batch.draws[j]);
  return batch;
}

inline double log_density(const ModelSpec& model, std::span<const double> y) {
  if (!model.has(Capability::LogDensity))
    throw CapabilityMissing(std::string(family_name(model.family())) +
                            " has no tractable density");
  const VectorXd& th = model.theta();
  double ll = 0.0;
  switch (model.family()) {
    case Family::GaussianIid: {
      const double mu = th[0], s2 = th[1];
      for (double yi : y)
        ll += -0.5 * std::log(2.0 * M_PI * s2) - (yi - mu) * (yi - mu) / (2.0 * s2);
      break;
    }
    case Family::ExponentialIid: {
      const double rate = th[0];
      for (double yi : y) {
        if (yi < 0.0) return -std::numeric_limits<double>::infinity();
        ll += std::log(rate) - rate * yi;
      }
      break;
    }
    case Family::LaplaceIid: {
      const double loc = th[0], b = model.config().laplace_scale;
      for (double yi : y) ll += -std::log(2.0 * b) - std::abs(yi - loc) / b;
      break;
    }
    case Family::BernoulliIid: {
      const double p = th[0];
      for (double yi : y) ll += yi * std::log(p) + (1.0 - yi) * std::log(1.0 - p);
      break;
    }
    default: break;
  }
  return ll;
}

inline VectorXd score(const ModelSpec& model, std::span<const double> y) {
  if (!model.has(Capability::LogDensity))
    throw CapabilityMissing(std::string(family_name(model.family())) +
                            " supports neither analytic nor finite-difference score");
  const VectorXd& th = model.theta();
  if (model.has(Capability::Score)) {
    VectorXd g = VectorXd::Zero(th.size());
    switch (model.family()) {
      case Family::GaussianIid: {
        const double mu = th[0], s2 = th[1];
        for (double yi : y) {
          g[0] += (yi - mu) / s2;
          g[1] += ((yi - mu) * (yi - mu) - s2) / (2.0 * s2 * s2);
        }
        return g;
      }
      case Family::ExponentialIid: {
        for (double yi : y) g[0] += 1.0 / th[0] - yi;
        return g;
      }
      case Family::LaplaceIid: {
        const double b = model.config().laplace_scale;
        // y == theta has probability zero; sign(0) = 0 there.
        for (double yi : y) g[0] += (yi > th[0] ? 1.0 : (yi < th[0] ? -1.0 : 0.0)) / b;
        return g;
      }
      case Family::BernoulliIid: {
        const double p = th[0];
        for (double yi : y) g[0] += yi / p - (1.0 - yi) / (1.0 - p);
        return g;
      }
      default: break;
    }
  }
  // Central finite differences in theta.
  VectorXd g(th.size());
  for (Eigen::Index j = 0; j < th.size(); ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(th[j]));
    VectorXd tp = th, tm = th;
    tp[j] += h;
    tm[j] -= h;
    g[j] = (log_density(model.with_theta(tp), y) -
            log_density(model.with_theta(tm), y)) / (2.0 * h);
  }
  return g;
}

// Finite-difference score, exposed for cross-checks against the analytic one.
inline VectorXd score_fd(const ModelSpec& model, std::span<const double> y) {
  const VectorXd& th = model.theta();
  VectorXd g(th.size());
  for (Eigen::Index j = 0; j < th.size(); ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(th[j]));
    VectorXd tp = th, tm = th;
    tp[j] += h;
    tm[j] -= h;
    g[j] = (log_density(model.with_theta(tp), y) -
            log_density(model.with_theta(tm), y)) / (2.0 * h);
  }
  return g;
}

inline InfoMatrix analytic_fim(const ModelSpec& model) {
  if (!model.has(Capability::AnalyticFim))
    throw CapabilityMissing(std::string(family_name(model.family())) +
                            " has no analytic FIM");
  const VectorXd& th = model.theta();
  const double n = static_cast<double>(model.n_obs());
  MatrixXd f;
  switch (model.family()) {
    case Family::GaussianIid: {
      f = MatrixXd::Zero(2, 2);
      f(0, 0) = n / th[1];
      f(1, 1) = n / (2.0 * th[1] * th[1]);
      break;
    }
    case Family::ExponentialIid:
      f = MatrixXd::Constant(1, 1, n / (th[0] * th[0]));
      break;
    case Family::LaplaceIid: {
      const double b = model.config().laplace_scale;
      f = MatrixXd::Constant(1, 1, n / (b * b));
      break;
    }
    case Family::BernoulliIid:
      f = MatrixXd::Constant(1, 1, n / (th[0] * (1.0 - th[0])));
      break;
    default:
      throw CapabilityMissing("no analytic FIM");
  }
  return InfoMatrix{SymMatrix(f), InfoMatrix::Kind::Fim, "analytic", th};
}

}  // namespace pim

#pragma once
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pim/errors.hpp"

namespace pim {

// One component of the statistic vector s(y). Monomial means are
// s_d(y) = (1/N) sum_i y_i^d; custom statistics carry their own evaluator.
struct StatisticDescriptor {
  enum class Kind { MonomialMean, Custom };

  Kind kind = Kind::MonomialMean;
  int degree = 1;  // monomial only
  std::string label;
  std::function<double(std::span<const double>)> fn;  // custom only

  static StatisticDescriptor monomial(int degree) {
    if (degree < 1) throw InvalidParameter("monomial degree must be >= 1");
    StatisticDescriptor d;
    d.kind = Kind::MonomialMean;
    d.degree = degree;
    d.label = "m" + std::to_string(degree);
    return d;
  }

  static StatisticDescriptor custom(std::string label,
                                    std::function<double(std::span<const double>)> fn) {
    StatisticDescriptor d;
    d.kind = Kind::Custom;
    d.degree = 0;
    d.label = std::move(label);
    d.fn = std::move(fn);
    return d;
  }

  // Identity comparison only; functional equality of custom statistics is
  // not decidable and duplicates of that kind surface as singular Sigma.
  bool same_identity(const StatisticDescriptor& o) const {
    return kind == o.kind && degree == o.degree && label == o.label;
  }
};

class StatisticSet {
 public:
  explicit StatisticSet(std::vector<StatisticDescriptor> descriptors)
      : descriptors_(std::move(descriptors)) {
    for (std::size_t i = 0; i < descriptors_.size(); ++i)
      for (std::size_t j = i + 1; j < descriptors_.size(); ++j)
        if (descriptors_[i].same_identity(descriptors_[j]))
          throw DuplicateDescriptor("duplicate statistic " + descriptors_[i].label);
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(descriptors_.size()); }
  const StatisticDescriptor& at(Eigen::Index i) const {
    return descriptors_[static_cast<std::size_t>(i)];
  }
  const std::vector<StatisticDescriptor>& descriptors() const { return descriptors_; }

  bool all_monomial() const {
    for (const auto& d : descriptors_)
      if (d.kind != StatisticDescriptor::Kind::MonomialMean) return false;
    return true;
  }

  int max_degree() const {
    int m = 0;
    for (const auto& d : descriptors_)
      if (d.kind == StatisticDescriptor::Kind::MonomialMean) m = std::max(m, d.degree);
    return m;
  }

  // Appends d as the (M+1)th component; the original set is untouched.
  StatisticSet extend(const StatisticDescriptor& d) const {
    for (const auto& e : descriptors_)
      if (e.same_identity(d))
        throw DuplicateDescriptor("statistic " + d.label + " already present");
    std::vector<StatisticDescriptor> out = descriptors_;
    out.push_back(d);
    return StatisticSet(std::move(out));
  }

  void eval_into(std::span<const double> y, Eigen::VectorXd& out) const {
    const double n = static_cast<double>(y.size());
    out.setZero(size());
    // Incremental powers: one multiply per observation per degree.
    const int dmax = max_degree();
    if (dmax > 0) {
      thread_local std::vector<double> power_sums;
      power_sums.assign(static_cast<std::size_t>(dmax), 0.0);
      for (double yi : y) {
        double p = 1.0;
        for (int d = 0; d < dmax; ++d) {
          p *= yi;
          power_sums[static_cast<std::size_t>(d)] += p;
        }
      }
      for (Eigen::Index i = 0; i < size(); ++i) {
        const auto& d = at(i);
        if (d.kind == StatisticDescriptor::Kind::MonomialMean)
          out[i] = power_sums[static_cast<std::size_t>(d.degree - 1)] / n;
      }
    }
    for (Eigen::Index i = 0; i < size(); ++i) {
      const auto& d = at(i);
      if (d.kind == StatisticDescriptor::Kind::Custom) out[i] = d.fn(y);
    }
  }

  Eigen::VectorXd eval(std::span<const double> y) const {
    Eigen::VectorXd out;
    eval_into(y, out);
    return out;
  }

 private:
  std::vector<StatisticDescriptor> descriptors_;
};

inline Eigen::VectorXd eval_stats(const StatisticSet& set, std::span<const double> y) {
  return set.eval(y);
}

inline StatisticSet monomial_set(int max_degree) {
  std::vector<StatisticDescriptor> v;
  for (int d = 1; d <= max_degree; ++d) v.push_back(StatisticDescriptor::monomial(d));
  return StatisticSet(std::move(v));
}

// Nested sets S_1 c S_2 c ... with S_d = {m1,...,md}.
inline std::vector<StatisticSet> monomial_ladder(int max_degree) {
  if (max_degree < 1) throw InvalidParameter("monomial_ladder: max_degree must be >= 1");
  std::vector<StatisticSet> out;
  for (int d = 1; d <= max_degree; ++d) out.push_back(monomial_set(d));
  return out;
}

}  // namespace pim

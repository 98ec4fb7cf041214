#pragma once
#include <string>

#include <Eigen/Dense>

#include "pim/linalg.hpp"

namespace pim {

// An n x n information matrix with its provenance: what it claims to be
// and how it was produced.
struct InfoMatrix {
  enum class Kind { Fim, Pim, CombinerBound, Misspecified };

  SymMatrix matrix;
  Kind kind;
  std::string method;  // e.g. "analytic", "monte-carlo k=1000000 seed=1"
  VectorXd theta;
};

inline const char* to_string(InfoMatrix::Kind k) {
  switch (k) {
    case InfoMatrix::Kind::Fim: return "fim";
    case InfoMatrix::Kind::Pim: return "pim";
    case InfoMatrix::Kind::CombinerBound: return "combiner-bound";
    case InfoMatrix::Kind::Misspecified: return "misspecified";
  }
  return "?";
}

}  // namespace pim

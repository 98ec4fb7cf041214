#pragma once
#include <stdexcept>
#include <string>

namespace pim {

// Base for all library errors. CLI relies on name() for its diagnostics,
// so every subclass carries a stable identifier.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(name + ": " + what), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

#define PIM_DEFINE_ERROR(Name)                            \
  class Name : public Error {                             \
   public:                                                \
    explicit Name(const std::string& what)                \
        : Error(#Name, what) {}                           \
  }

PIM_DEFINE_ERROR(DimensionMismatch);
PIM_DEFINE_ERROR(NotPositiveDefinite);
PIM_DEFINE_ERROR(CapabilityMissing);
PIM_DEFINE_ERROR(InvalidParameter);
PIM_DEFINE_ERROR(UnsupportedAnalytic);
PIM_DEFINE_ERROR(SingularSigma);
PIM_DEFINE_ERROR(RankDeficientCombiner);
PIM_DEFINE_ERROR(NonPositiveSchur);
PIM_DEFINE_ERROR(DuplicateDescriptor);
PIM_DEFINE_ERROR(Infeasible);
PIM_DEFINE_ERROR(NotConverged);
PIM_DEFINE_ERROR(SingularPim);
PIM_DEFINE_ERROR(DomainExit);
PIM_DEFINE_ERROR(StudyFailed);

#undef PIM_DEFINE_ERROR

}  // namespace pim

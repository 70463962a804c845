#pragma once

#include <stdexcept>
#include <string>

namespace mealsynth {

// Error categories map 1:1 onto CLI exit codes (see cli module):
//   usage 2, data 3, config 4, numeric 5.
enum class ErrorKind { Usage = 2, Data = 3, Config = 4, Numeric = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define MEALSYNTH_DEFINE_ERROR(NAME, KIND)                      \
  class NAME : public Error {                                   \
   public:                                                      \
    explicit NAME(const std::string& what)                      \
        : Error(ErrorKind::KIND, std::string(#NAME ": ") + what) {} \
  }

MEALSYNTH_DEFINE_ERROR(UnusableIngredient, Data);
MEALSYNTH_DEFINE_ERROR(InvalidDecision, Data);
MEALSYNTH_DEFINE_ERROR(EmptyEncoding, Data);
MEALSYNTH_DEFINE_ERROR(EmptyDataset, Data);
MEALSYNTH_DEFINE_ERROR(InsufficientData, Data);
MEALSYNTH_DEFINE_ERROR(LayoutOverflow, Data);
MEALSYNTH_DEFINE_ERROR(ShapeError, Data);
MEALSYNTH_DEFINE_ERROR(InvalidId, Data);
MEALSYNTH_DEFINE_ERROR(EmptySequence, Data);
MEALSYNTH_DEFINE_ERROR(InvalidDistribution, Data);
MEALSYNTH_DEFINE_ERROR(InvalidFeatures, Data);
MEALSYNTH_DEFINE_ERROR(ConfigError, Config);
MEALSYNTH_DEFINE_ERROR(InvalidParameter, Numeric);
MEALSYNTH_DEFINE_ERROR(DegenerateEmbedding, Numeric);
MEALSYNTH_DEFINE_ERROR(NumericFailure, Numeric);

#undef MEALSYNTH_DEFINE_ERROR

}  // namespace mealsynth

#pragma once

#include <stdexcept>
#include <string>

namespace serc {

/// Base of every error the library throws. `category()` drives the CLI exit-code contract.
class Error : public std::runtime_error {
 public:
  enum class Category { Data, Numerical, Usage };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

#define SERC_DEFINE_ERROR(Name, Cat)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(Category::Cat, what) {} \
  };

SERC_DEFINE_ERROR(ParseError, Data)
SERC_DEFINE_ERROR(StructuralError, Data)
SERC_DEFINE_ERROR(ValidationError, Data)
SERC_DEFINE_ERROR(IndexError, Data)
SERC_DEFINE_ERROR(DimensionError, Data)
SERC_DEFINE_ERROR(ConfigError, Data)
SERC_DEFINE_ERROR(FormatError, Data)
SERC_DEFINE_ERROR(CorruptionError, Data)
SERC_DEFINE_ERROR(UsageError, Usage)
SERC_DEFINE_ERROR(StateError, Numerical)
SERC_DEFINE_ERROR(NumericalError, Numerical)

#undef SERC_DEFINE_ERROR

}  // namespace serc

#include "rowsurv/errors.hpp"

namespace rowsurv {

namespace {

std::string constant_column_message(std::size_t column) {
  if (column == ConstantColumn::kTreatment) {
    return "treatment is constant; standardization is undefined";
  }
  return "covariate column " + std::to_string(column) +
         " is constant; standardization is undefined (drop or recode it)";
}

}  // namespace

ConstantColumn::ConstantColumn(std::size_t column)
    : InvalidInput(constant_column_message(column)), column_(column) {}

}  // namespace rowsurv

#pragma once

// Error taxonomy shared by every module. Two families matter to callers:
// validation errors (bad inputs, exit code 2 in the CLI) and numeric
// degeneracies (well-formed inputs the math cannot serve, exit code 3).

#include <stdexcept>
#include <string>

namespace indist {

enum class errc {
  // validation
  missing_column,
  out_of_range,
  parse_error,
  row_count_mismatch,
  bad_fraction,
  dimension_mismatch,
  missing_expert,
  unknown_cell,
  infeasible_k,
  empty_input,
  bad_param,
  bad_spec,
  length_mismatch,
  io_error,
  // numeric degeneracy
  too_few_rows,
  degenerate_cell,
  degenerate_indicator,
  empty_cell,
  no_adversarial_subset,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::missing_column: return "MissingColumn";
    case errc::out_of_range: return "OutOfRange";
    case errc::parse_error: return "ParseError";
    case errc::row_count_mismatch: return "RowCountMismatch";
    case errc::bad_fraction: return "BadFraction";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::missing_expert: return "MissingExpert";
    case errc::unknown_cell: return "UnknownCell";
    case errc::infeasible_k: return "InfeasibleK";
    case errc::empty_input: return "EmptyInput";
    case errc::bad_param: return "BadParam";
    case errc::bad_spec: return "BadSpec";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::io_error: return "IoError";
    case errc::too_few_rows: return "TooFewRows";
    case errc::degenerate_cell: return "DegenerateCell";
    case errc::degenerate_indicator: return "DegenerateIndicator";
    case errc::empty_cell: return "EmptyCell";
    case errc::no_adversarial_subset: return "NoAdversarialSubset";
  }
  return "UnknownError";
}

inline bool errc_is_degeneracy(errc c) {
  switch (c) {
    case errc::too_few_rows:
    case errc::degenerate_cell:
    case errc::degenerate_indicator:
    case errc::empty_cell:
    case errc::no_adversarial_subset:
      return true;
    default:
      return false;
  }
}

class KitError : public std::runtime_error {
 public:
  KitError(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  errc code() const { return code_; }
  bool is_degeneracy() const { return errc_is_degeneracy(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw KitError(code, what);
}

}  // namespace indist

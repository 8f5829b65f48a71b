#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace explirec {

// Broad failure class; the CLI maps each to its own exit code.
enum class ErrorCategory { usage, data, numerical };

enum class ErrorCode {
  usage,
  unreadable_file,
  unknown_format,
  malformed_record,
  stars_out_of_range,
  bad_date,
  empty_input,
  column_count,
  bad_head,
  head_out_of_range,
  unannotated_sentence,
  dangling_review,
  no_valid_vectors,
  zero_vector,
  length_mismatch,
  version_mismatch,
  checksum_mismatch,
  kind_mismatch,
  corrupt_file,
  missing_path,
  unknown_id,
  too_few_records,
  non_finite_loss,
};

inline ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage:
      return ErrorCategory::usage;
    case ErrorCode::non_finite_loss:
      return ErrorCategory::numerical;
    default:
      return ErrorCategory::data;
  }
}

// Carries an error code and, for file parsers, the 1-based line it refers to
// (0 when not tied to a line).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        code_(code),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::size_t line_;
};

}  // namespace explirec

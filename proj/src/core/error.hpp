#pragma once

#include <stdexcept>
#include <string>

namespace ddnet {

enum class Errc {
  dimension,
  invalid_argument,
  numeric,
  io,
  parse,
  bad_magic,
  version_mismatch,
  truncated_payload,
  header_mismatch,
  empty_split,
  unknown_label,
  duplicate_path,
  missing_file,
};

// Coarse grouping used by the C API and the CLI exit codes.
enum class ErrorCategory { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept;

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

const char* errc_name(Errc code) noexcept;

}  // namespace ddnet

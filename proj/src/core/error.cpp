#include "core/error.hpp"

namespace ddnet {

ErrorCategory Error::category() const noexcept {
  switch (code_) {
    case Errc::invalid_argument:
      return ErrorCategory::usage;
    case Errc::numeric:
      return ErrorCategory::numeric;
    default:
      return ErrorCategory::data;
  }
}

void fail(Errc code, const std::string& message) {
  throw Error(code, std::string(errc_name(code)) + ": " + message);
}

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::dimension: return "dimension error";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::numeric: return "numeric failure";
    case Errc::io: return "i/o error";
    case Errc::parse: return "parse error";
    case Errc::bad_magic: return "bad magic";
    case Errc::version_mismatch: return "version mismatch";
    case Errc::truncated_payload: return "truncated payload";
    case Errc::header_mismatch: return "header mismatch";
    case Errc::empty_split: return "empty split";
    case Errc::unknown_label: return "unknown label";
    case Errc::duplicate_path: return "duplicate path";
    case Errc::missing_file: return "missing file";
  }
  return "error";
}

}  // namespace ddnet

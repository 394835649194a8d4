#pragma once

#include <stdexcept>
#include <string>

namespace das {

enum class Errc {
  invalid_params,
  width_mismatch,
  params_mismatch,
  malformed_bytes,
  version_mismatch,
  duplicate_key,
  key_not_found,
  unknown_key,
  bad_tag,
  empty_tree,
  audit_too_large,
  size_mismatch,
  zero_triple,
  io_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_params: return "invalid-params";
    case Errc::width_mismatch: return "width-mismatch";
    case Errc::params_mismatch: return "params-mismatch";
    case Errc::malformed_bytes: return "malformed-bytes";
    case Errc::version_mismatch: return "version-mismatch";
    case Errc::duplicate_key: return "duplicate-key";
    case Errc::key_not_found: return "key-not-found";
    case Errc::unknown_key: return "unknown-key";
    case Errc::bad_tag: return "bad-tag";
    case Errc::empty_tree: return "empty-tree";
    case Errc::audit_too_large: return "audit-too-large";
    case Errc::size_mismatch: return "size-mismatch";
    case Errc::zero_triple: return "zero-triple";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

class Error final : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace das

#pragma once

#include <stdexcept>
#include <string>

namespace crossview {

// One exception type tagged by kind. The CLI maps the file-level kinds
// (io, format, corruption, version) to exit 2 and everything else to exit 1.
enum class ErrKind {
  dimension,
  parameter,
  contract,
  normalization,
  degenerate,
  schema,
  reference,
  checkpoint,
  io,
  format,
  corruption,
  version,
};

struct Error : std::runtime_error {
  ErrKind kind;
  Error(ErrKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline bool is_io_family(ErrKind k) {
  return k == ErrKind::io || k == ErrKind::format || k == ErrKind::corruption ||
         k == ErrKind::version;
}

inline int exit_code(ErrKind k) { return is_io_family(k) ? 2 : 1; }

[[noreturn]] inline void fail(ErrKind k, const std::string& msg) { throw Error(k, msg); }

inline const char* kind_name(ErrKind k) {
  switch (k) {
    case ErrKind::dimension: return "dimension";
    case ErrKind::parameter: return "parameter";
    case ErrKind::contract: return "contract";
    case ErrKind::normalization: return "normalization";
    case ErrKind::degenerate: return "degenerate";
    case ErrKind::schema: return "schema";
    case ErrKind::reference: return "reference";
    case ErrKind::checkpoint: return "checkpoint";
    case ErrKind::io: return "io";
    case ErrKind::format: return "format";
    case ErrKind::corruption: return "corruption";
    case ErrKind::version: return "version";
  }
  return "unknown";
}

}  // namespace crossview

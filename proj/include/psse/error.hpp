#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace psse {

enum class Errc {
  MissingBlock,
  MalformedRow,
  NoSlackBus,
  DuplicateBusId,
  ZeroImpedanceBranch,
  Diverged,
  SingularJacobian,
  PlanLocationInvalid,
  DimensionMismatch,
  RankDeficient,
  SingularGain,
  NonFiniteLoss,
  IllConditioned,
  SeriesTooShort,
  ParseError,
  ColumnMapInvalid,
  DegenerateSeries,
  SchemaMismatch,
  CorruptFile,
  IoError,
  InvalidArgument,
};

std::string_view errc_name(Errc code) noexcept;

/// Exception carrying one of the named failure kinds above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MissingBlock: return "MissingBlock";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::NoSlackBus: return "NoSlackBus";
    case Errc::DuplicateBusId: return "DuplicateBusId";
    case Errc::ZeroImpedanceBranch: return "ZeroImpedanceBranch";
    case Errc::Diverged: return "Diverged";
    case Errc::SingularJacobian: return "SingularJacobian";
    case Errc::PlanLocationInvalid: return "PlanLocationInvalid";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::SingularGain: return "SingularGain";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::IllConditioned: return "IllConditioned";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::ParseError: return "ParseError";
    case Errc::ColumnMapInvalid: return "ColumnMapInvalid";
    case Errc::DegenerateSeries: return "DegenerateSeries";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::IoError: return "IoError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::DimensionMismatch, what);
}

}  // namespace psse

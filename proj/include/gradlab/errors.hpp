#pragma once

#include <stdexcept>
#include <string>

namespace gradlab {

/// Process exit codes used by the CLI.
enum class ExitCode : int { Ok = 0, Usage = 2, Data = 3, Numeric = 4 };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::Data)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

#define GRADLAB_DEFINE_ERROR(Name, Code)                               \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(what, Code) {}      \
  }

GRADLAB_DEFINE_ERROR(UsageError, ExitCode::Usage);
GRADLAB_DEFINE_ERROR(InsufficientLexicon, ExitCode::Data);
GRADLAB_DEFINE_ERROR(EmptyAfterFilter, ExitCode::Data);
GRADLAB_DEFINE_ERROR(MultiMask, ExitCode::Data);
GRADLAB_DEFINE_ERROR(MixedCells, ExitCode::Data);
GRADLAB_DEFINE_ERROR(SliceMismatch, ExitCode::Data);
GRADLAB_DEFINE_ERROR(MissingTask, ExitCode::Data);
GRADLAB_DEFINE_ERROR(MissingVariant, ExitCode::Data);
GRADLAB_DEFINE_ERROR(StaleArtifact, ExitCode::Data);
GRADLAB_DEFINE_ERROR(FormatError, ExitCode::Data);
GRADLAB_DEFINE_ERROR(NoPositiveSamples, ExitCode::Data);
GRADLAB_DEFINE_ERROR(BadK, ExitCode::Usage);
GRADLAB_DEFINE_ERROR(DimensionMismatch, ExitCode::Numeric);
GRADLAB_DEFINE_ERROR(DegenerateVariance, ExitCode::Numeric);
GRADLAB_DEFINE_ERROR(Diverged, ExitCode::Numeric);
GRADLAB_DEFINE_ERROR(NoCandidates, ExitCode::Numeric);

#undef GRADLAB_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what, ExitCode::Data),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, double final_accuracy)
      : Error(what, ExitCode::Numeric), final_accuracy_(final_accuracy) {}
  double final_accuracy() const { return final_accuracy_; }

 private:
  double final_accuracy_;
};

}  // namespace gradlab

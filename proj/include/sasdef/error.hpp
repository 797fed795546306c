#pragma once

#include <stdexcept>
#include <string>

namespace sasdef {

// Coarse error taxonomy; the C API maps these 1:1 onto integer codes and the
// CLI maps them onto exit codes (usage -> 2, numerical/invariant -> 1).
enum class ErrorCode {
  InvalidArgument = 1,  // bad parameters, unknown kinds, out-of-range values
  InvalidMesh = 2,      // degenerate or inconsistent simplicial data
  SingularMetric = 3,   // non-positive-definite Gram matrix
  ParseError = 4,       // malformed input file
  IoError = 5,          // filesystem trouble
  SolverFailure = 6,    // iterative solver did not converge
  NotNearLegendrian = 7,// phase extraction on a far-from-Legendrian mesh
  Divergence = 8,       // Newton corrector residual increased twice in a row
  StepSize = 9,         // exp_deform displacement beyond the runtime bound
  FrameError = 10,      // degenerate per-vertex normal frame
  Unsupported = 11      // request outside the desk-scale envelope (n>2, ...)
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

} // namespace sasdef

#pragma once

// Error taxonomy shared by all modules. Input/validation problems throw
// Error; numerical non-convergence is reported through result flags, not
// exceptions, so callers can inspect partial fits.

#include <stdexcept>
#include <string>

namespace remkit {

enum class errc {
  schema,  // malformed input structure (missing column, bad grammar)
  parse,   // unparseable cell or token; message carries line/position
  data,    // semantically inconsistent data (event not in its risk set)
  config,  // invalid request (bad parameter combination, refusals)
  numeric  // singular curvature and similar hard numerical failures
};

class Error : public std::runtime_error {
public:
  Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw Error(code, what); }

}  // namespace remkit

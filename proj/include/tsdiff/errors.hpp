#ifndef TSDIFF_ERRORS_HPP
#define TSDIFF_ERRORS_HPP

#include <stdexcept>

namespace tsdiff {

// Raised when a computation produces non-finite values or a numerical
// procedure fails outright (as opposed to bad arguments, which use
// std::invalid_argument). The CLI maps the two classes to distinct exit codes.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tsdiff

#endif  // TSDIFF_ERRORS_HPP

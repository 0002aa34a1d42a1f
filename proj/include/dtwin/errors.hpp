#ifndef DTWIN_ERRORS_HPP
#define DTWIN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dtwin {

/// Raised when a density or kernel cannot be evaluated at the given
/// parameters (non-finite input, out-of-support value, failed Cholesky).
/// The sampler treats it as a rejected point rather than a fatal error.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class cholesky_error : public numerical_error {
 public:
  using numerical_error::numerical_error;
};

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class sampler_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dtwin

#endif  // DTWIN_ERRORS_HPP

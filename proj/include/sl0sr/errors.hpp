#pragma once

#include <stdexcept>
#include <string>

namespace sl0sr {

// Dictionary rows are linearly dependent: D*D^T admits no Cholesky factor, so
// the minimum-norm solve and the feasibility projection are undefined.
class singular_system_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, truncated, or wrong-typed file payload (PGM, PNG, dictionary
// container). The message names the offending field.
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training data cannot support the requested dictionary (all-equal patches,
// or fewer usable vectors than atoms).
class degenerate_data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mutually inconsistent pipeline geometry (scale / patch size / dictionary
// shape disagree). Raised before any work starts.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented type invariant does not hold on constructed or loaded data
// (e.g. a dictionary file whose header geometry is inconsistent).
class invariant_violation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sl0sr

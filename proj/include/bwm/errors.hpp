#pragma once

#include <stdexcept>
#include <string>

namespace bwm {

// Density (or a denominator built from it) fell below the configured floor;
// the requested quantity diverges there.
struct node_proximity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loss of a representation invariant (Re(alpha) >= 0, exponent overflow,
// non-positive norm, ...).  Results past this point are meaningless.
struct numerical_breakdown : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sampled support does not fit the grid window.
struct discretization_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A tabulated CDF came out non-monotone or with zero mass.
struct cdf_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Conditioning on an outcome whose probability is below the floor.
struct out_of_support_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input: parameters, scenario files, profile requests.
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bwm

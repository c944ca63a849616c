#pragma once

#include <stdexcept>
#include <string>

namespace mergeplan {

// Thrown when an operation receives non-finite or otherwise unusable values.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown by car-following models when the follower has no positive headway.
struct CollisionState : std::domain_error {
  using std::domain_error::domain_error;
};

// Thrown when a scenario or tool configuration cannot be satisfied.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mergeplan

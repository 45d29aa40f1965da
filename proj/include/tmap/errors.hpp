#pragma once

#include <stdexcept>
#include <string>

namespace tmap {

// Bad geometry, unknown config keys, invalid hyperparameters.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input data: trace files, datasets, checkpoints.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape mismatch in the math core. Messages name both operand shapes.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller violated an internal precondition (non-scalar loss, step 0, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Training hit a non-finite loss; message names the offending step.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tmap

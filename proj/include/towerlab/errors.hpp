#pragma once

#include <stdexcept>
#include <string>

namespace towerlab {

// Error categories used across the library. All derive from std::runtime_error
// so callers can catch coarsely; the distinct types exist for precise tests
// and for the CLI to map failures to exit codes.

struct invalid_input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct depth_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct convergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct infeasible_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct horizon_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct structure_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct class_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct precondition_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace towerlab

#pragma once

#include <stdexcept>
#include <string>

namespace adr {

// Shape or extent mismatch between tensors.
struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid value for a parameter (tau <= 0, epsilon < 0, fraction out of range, ...).
struct parameter_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// API misuse (backward on non-scalar output, tape re-entry, ...).
struct usage_error : std::logic_error {
    using std::logic_error::logic_error;
};

// Non-finite values where finiteness is required.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (IDX, CIFAR binary, JSON config).
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid run configuration (bad combination of settings, missing dataset, ...).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint load failures, one type per failure mode.
struct checkpoint_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct checkpoint_magic_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};
struct checkpoint_version_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};
struct checkpoint_truncated_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};
struct checkpoint_checksum_error : checkpoint_error {
    using checkpoint_error::checkpoint_error;
};

} // namespace adr

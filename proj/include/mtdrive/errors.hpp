#pragma once

#include <stdexcept>

namespace mtdrive {

// Error taxonomy mirrors the process exit codes: config -> 2, data -> 3,
// divergence -> 4. Anything else that escapes is an internal error.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mtdrive

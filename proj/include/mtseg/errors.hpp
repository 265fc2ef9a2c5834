#pragma once

#include <stdexcept>
#include <string>

namespace mtseg {

// File/format/shape problems: bad inputs, malformed files, mismatched dims.
// CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf or diverging computation. CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mtseg

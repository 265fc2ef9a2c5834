#pragma once

#include "mtseg/kernels.hpp"

namespace mtseg::kernels {

// Defined in kernels_avx2.cpp; null when that TU was built without AVX2.
const Ops* avx2_ops_or_null();

}  // namespace mtseg::kernels

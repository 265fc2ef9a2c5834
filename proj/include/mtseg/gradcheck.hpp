#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Finite-difference verification of the analytic gradients. Each case builds
// a small randomized model, computes analytic gradients in float, and checks
// them against central differences evaluated in double (h = 1e-6). Float
// finite differences cannot resolve these gradients, so the numeric side runs
// through the double instantiation of the same templated layer code.

namespace mtseg {

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    size_t worst_index = 0;
    double analytic = 0.0;  // value at the worst coordinate
    double numeric = 0.0;
    size_t checked = 0;  // coordinates probed (sampled for large groups)
};

struct GradCheckReport {
    std::string case_name;
    uint64_t seed = 0;
    std::vector<GradCheckGroup> groups;
    double max_rel_err = 0.0;

    std::string to_string() const;
};

// Known cases: conv, conv_s2, batchnorm, relu, softmax_xent, conv_bn_relu,
// tiny_net. Unknown names throw DataError.
GradCheckReport gradcheck(const std::string& case_name, uint64_t seed);

const std::vector<std::string>& gradcheck_cases();

}  // namespace mtseg

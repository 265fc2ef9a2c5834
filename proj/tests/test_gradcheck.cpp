#include <doctest.h>

#include "mtseg/errors.hpp"
#include "mtseg/gradcheck.hpp"

using namespace mtseg;

TEST_CASE("analytic gradients match double finite differences") {
    for (const auto& name : gradcheck_cases()) {
        for (uint64_t seed : {1ull, 42ull, 1234ull}) {
            CAPTURE(name);
            CAPTURE(seed);
            auto rep = gradcheck(name, seed);
            INFO(rep.to_string());
            CHECK(rep.max_rel_err < 1e-3);
            CHECK(rep.groups.size() >= 1);
            for (const auto& g : rep.groups) CHECK(g.checked > 0);
        }
    }
}

TEST_CASE("unknown gradcheck case is rejected") {
    CHECK_THROWS_AS(gradcheck("bogus", 1), DataError);
}

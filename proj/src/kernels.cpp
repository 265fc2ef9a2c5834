#include "mtseg/kernels.hpp"

#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"

namespace mtseg::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Ops* find(std::string_view name) {
    if (name == "scalar") return &scalar_ops();
    if (name == "avx2") {
        const Ops* a = avx2_ops_or_null();
        return (a && cpu_has_avx2()) ? a : nullptr;
    }
    if (name == "auto") {
        const Ops* a = avx2_ops_or_null();
        if (a && cpu_has_avx2()) return a;
        return &scalar_ops();
    }
    return nullptr;
}

const Ops* pick_initial() {
    const char* env = std::getenv("MTSEG_KERNELS");
    if (env) {
        if (const Ops* o = find(env)) return o;
    }
    return find("auto");
}

const Ops*& slot() {
    static const Ops* current = pick_initial();
    return current;
}

}  // namespace

const Ops& active() { return *slot(); }

bool select(std::string_view name) {
    const Ops* o = find(name);
    if (!o) return false;
    slot() = o;
    return true;
}

std::vector<const Ops*> available() {
    std::vector<const Ops*> out{&scalar_ops()};
    const Ops* a = avx2_ops_or_null();
    if (a && cpu_has_avx2()) out.push_back(a);
    return out;
}

}  // namespace mtseg::kernels

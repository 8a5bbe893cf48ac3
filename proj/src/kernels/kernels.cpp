#include "peftcl/kernels.hpp"

#include "peftcl/errors.hpp"

namespace peftcl::kernels {
namespace {

const Kernels* g_active = nullptr;

const Kernels* pick_auto() {
    if (const Kernels* k = avx2(); k != nullptr && cpu_has_avx2()) return k;
    return &scalar();
}

}  // namespace

bool cpu_has_avx2() {
#if defined(PEFTCL_HAVE_AVX2) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

void select(const std::string& which) {
    if (which == "auto") {
        g_active = pick_auto();
    } else if (which == "scalar") {
        g_active = &scalar();
    } else if (which == "avx2") {
        const Kernels* k = avx2();
        if (k == nullptr || !cpu_has_avx2()) {
            throw ConfigError("kernel 'avx2' requested but not supported on this build/CPU");
        }
        g_active = k;
    } else {
        throw ConfigError("unknown kernel '" + which + "' (expected auto|scalar|avx2)");
    }
}

const Kernels& active() {
    if (g_active == nullptr) g_active = pick_auto();
    return *g_active;
}

std::string active_name() { return active().name; }

}  // namespace peftcl::kernels

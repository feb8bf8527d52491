#include "caformer/kernels.hpp"

#include <string>

#include "caformer/error.hpp"

namespace caformer::kern {
namespace {

bool detect_avx2() {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Ops* g_active = nullptr;

const Ops* best_supported() {
    return cpu_supports_avx2() ? &avx2_ops : &scalar_ops;
}

} // namespace

bool cpu_supports_avx2() {
    static const bool ok = detect_avx2();
    return ok;
}

const Ops& ops() {
    if (g_active == nullptr) g_active = best_supported();
    return *g_active;
}

bool select_isa(std::string_view name) {
    if (name == "auto") {
        g_active = best_supported();
        return true;
    }
    if (name == "scalar") {
        g_active = &scalar_ops;
        return true;
    }
    if (name == "avx2") {
        if (!cpu_supports_avx2())
            throw ContractError("select_isa: avx2 requested but this CPU lacks AVX2/FMA");
        g_active = &avx2_ops;
        return true;
    }
    return false;
}

const char* active_isa_name() { return ops().name; }

} // namespace caformer::kern

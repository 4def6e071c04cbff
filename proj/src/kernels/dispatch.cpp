#include <cstdlib>
#include <string_view>
#include <vector>

#include "tbeam/kernels.hpp"

namespace tbeam::kernels {

#if TBEAM_BUILD_AVX2
const Ops& avx2_ops();
#endif

namespace {

std::vector<const Ops*> build_list() {
    std::vector<const Ops*> ops{&scalar_ops()};
#if TBEAM_BUILD_AVX2
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        ops.push_back(&avx2_ops());
    }
#endif
    return ops;
}

}  // namespace

std::span<const Ops* const> compiled() {
    static const std::vector<const Ops*> list = build_list();
    return {list.data(), list.size()};
}

const Ops& active() {
    static const Ops* chosen = [] {
        const auto list = compiled();
        if (const char* env = std::getenv("TBEAM_KERNELS")) {
            const std::string_view want{env};
            for (const Ops* ops : list) {
                if (ops->name == want) {
                    return ops;
                }
            }
        }
        return list.back();  // best available level
    }();
    return *chosen;
}

}  // namespace tbeam::kernels

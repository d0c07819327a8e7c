#include "evplan/kernels.hpp"

namespace evplan::kernels {

const Backend& active() {
#if defined(__x86_64__) || defined(__i386__)
    static const Backend& chosen = avx2_available() ? avx2() : scalar();
#else
    static const Backend& chosen = scalar();
#endif
    return chosen;
}

std::string_view active_name() { return active().name; }

}  // namespace evplan::kernels

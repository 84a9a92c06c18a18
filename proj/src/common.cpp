#include "bdlab/common.hpp"

#include <cstdio>

namespace bdlab {

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
    if (n == 0) throw std::logic_error("SeededRng::below(0)");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t x = gen_();
    while (x > limit) x = gen_();
    return x % n;
}

}  // namespace bdlab

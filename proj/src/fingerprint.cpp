#include "steerlab/fingerprint.hpp"

#include <cstdio>

namespace steerlab {

void Fnv1a64::update(std::span<const std::uint8_t> bytes) noexcept {
    for (std::uint8_t b : bytes) {
        hash_ ^= b;
        hash_ *= 0x100000001b3ULL;
    }
}

void Fnv1a64::update_u64(std::uint64_t v) noexcept {
    std::uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
    update(le);
}

std::string Fnv1a64::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
}

}  // namespace steerlab

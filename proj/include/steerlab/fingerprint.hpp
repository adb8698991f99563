#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace steerlab {

// FNV-1a 64-bit, streaming.
class Fnv1a64 {
public:
    void update(std::span<const std::uint8_t> bytes) noexcept;
    void update_u64(std::uint64_t v) noexcept;
    std::uint64_t value() const noexcept { return hash_; }
    /// 16 lowercase hex digits.
    std::string hex() const;

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace steerlab

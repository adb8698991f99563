#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace steerlab {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

// Bytes map to ids 0..255; two specials follow. Answer options are single
// characters, so each option letter is exactly one token.
class ByteTokenizer {
public:
    static constexpr TokenId kBos = 256;
    static constexpr TokenId kPad = 257;
    static constexpr std::uint32_t kVocabSize = 258;

    /// BOS followed by the UTF-8 bytes of text.
    TokenSeq encode(std::string_view text) const;
    /// Bytes only, no BOS.
    TokenSeq encode_raw(std::string_view text) const;
    static constexpr TokenId byte_token(char c) noexcept {
        return static_cast<TokenId>(static_cast<unsigned char>(c));
    }
    std::uint32_t vocab_size() const noexcept { return kVocabSize; }
};

}  // namespace steerlab

#include "steerlab/tokenizer.hpp"

namespace steerlab {

TokenSeq ByteTokenizer::encode(std::string_view text) const {
    TokenSeq out;
    out.reserve(text.size() + 1);
    out.push_back(kBos);
    for (char c : text) out.push_back(byte_token(c));
    return out;
}

TokenSeq ByteTokenizer::encode_raw(std::string_view text) const {
    TokenSeq out;
    out.reserve(text.size());
    for (char c : text) out.push_back(byte_token(c));
    return out;
}

}  // namespace steerlab

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace megacurate::unicode {

// Decodes UTF-8 into code points. Invalid bytes are mapped to lone
// surrogates U+DC80..U+DCFF (surrogate-escape) so that encode() can
// reproduce the original byte sequence exactly.
std::vector<char32_t> decode_utf8(std::string_view text);

// Inverse of decode_utf8: encodes code points as UTF-8, turning escape
// surrogates back into their original raw bytes.
std::string encode_utf8(const std::vector<char32_t>& cps);

// Canonical composition normal form over the code-point sequence:
// full canonical decomposition, canonical reordering, then composition.
std::vector<char32_t> to_nfc(std::vector<char32_t> cps);

// NFC-normalize a UTF-8 string; invalid bytes pass through untouched.
std::string nfc(std::string_view text);

// Canonical text key for dedupe: NFC, ASCII-whitespace runs collapsed
// to a single space, leading/trailing whitespace trimmed. Case and all
// non-ASCII spacing are preserved.
std::string normalize_text(std::string_view text);

} // namespace megacurate::unicode

#include "megacurate/unicode.hpp"

#include <algorithm>
#include <cstdint>

namespace megacurate::unicode {

namespace {

#include "unicode_tables.inc"

// Hangul syllable arithmetic (Jamo composition is algorithmic, not tabled).
constexpr char32_t kSBase = 0xAC00;
constexpr char32_t kLBase = 0x1100;
constexpr char32_t kVBase = 0x1161;
constexpr char32_t kTBase = 0x11A7;
constexpr int kLCount = 19;
constexpr int kVCount = 21;
constexpr int kTCount = 28;
constexpr int kNCount = kVCount * kTCount;
constexpr int kSCount = kLCount * kNCount;

// Byte values that failed UTF-8 decoding ride through the pipeline as
// lone surrogates in this window and are restored verbatim on encode.
constexpr char32_t kEscapeBase = 0xDC80;

bool is_escape(char32_t cp) { return cp >= kEscapeBase && cp <= 0xDCFF; }

int combining_class(char32_t cp) {
    const CccEntry* begin = kCccTable;
    const CccEntry* end = kCccTable + sizeof(kCccTable) / sizeof(kCccTable[0]);
    const CccEntry* it = std::lower_bound(
        begin, end, cp, [](const CccEntry& e, char32_t c) { return e.cp < c; });
    return (it != end && it->cp == cp) ? it->ccc : 0;
}

const DecompEntry* find_decomp(char32_t cp) {
    const DecompEntry* begin = kDecompIndex;
    const DecompEntry* end = kDecompIndex + sizeof(kDecompIndex) / sizeof(kDecompIndex[0]);
    const DecompEntry* it = std::lower_bound(
        begin, end, cp, [](const DecompEntry& e, char32_t c) { return e.cp < c; });
    return (it != end && it->cp == cp) ? it : nullptr;
}

bool compose_pair(char32_t a, char32_t b, char32_t* out) {
    // Hangul L+V and LV+T.
    if (a >= kLBase && a < kLBase + kLCount && b >= kVBase && b < kVBase + kVCount) {
        *out = kSBase + ((a - kLBase) * kVCount + (b - kVBase)) * kTCount;
        return true;
    }
    if (a >= kSBase && a < kSBase + kSCount && (a - kSBase) % kTCount == 0 &&
        b > kTBase && b < kTBase + kTCount) {
        *out = a + (b - kTBase);
        return true;
    }
    const CompEntry* begin = kCompTable;
    const CompEntry* end = kCompTable + sizeof(kCompTable) / sizeof(kCompTable[0]);
    const CompEntry* it = std::lower_bound(
        begin, end, std::pair<char32_t, char32_t>(a, b),
        [](const CompEntry& e, const std::pair<char32_t, char32_t>& key) {
            return e.first != key.first ? e.first < key.first : e.second < key.second;
        });
    if (it != end && it->first == a && it->second == b) {
        *out = it->composed;
        return true;
    }
    return false;
}

void decompose_into(char32_t cp, std::vector<char32_t>& out) {
    if (cp >= kSBase && cp < kSBase + kSCount) {
        char32_t s = cp - kSBase;
        out.push_back(kLBase + s / kNCount);
        out.push_back(kVBase + (s % kNCount) / kTCount);
        if (s % kTCount != 0) out.push_back(kTBase + s % kTCount);
        return;
    }
    // Table entries are pre-expanded to full canonical decomposition,
    // so one lookup suffices — no recursion at runtime.
    if (const DecompEntry* e = find_decomp(cp)) {
        for (std::uint32_t i = 0; i < e->length; ++i)
            out.push_back(kDecompData[e->offset + i]);
        return;
    }
    out.push_back(cp);
}

// Canonical ordering: stable sort of each nonzero-ccc run (starters are
// barriers). Runs are short, so an insertion pass is the right tool.
void canonical_order(std::vector<char32_t>& cps) {
    for (std::size_t i = 1; i < cps.size(); ++i) {
        int cc = combining_class(cps[i]);
        if (cc == 0) continue;
        std::size_t j = i;
        while (j > 0 && combining_class(cps[j - 1]) > cc) {
            std::swap(cps[j - 1], cps[j]);
            --j;
        }
    }
}

std::vector<char32_t> compose(const std::vector<char32_t>& cps) {
    std::vector<char32_t> out;
    out.reserve(cps.size());
    std::ptrdiff_t last_starter = -1;
    int prev_cc = 0;
    for (char32_t ch : cps) {
        int cc = combining_class(ch);
        if (last_starter >= 0 && !is_escape(out[last_starter])) {
            // ch may combine with the last starter unless a character of
            // equal-or-higher class sits between them (blocked), which in
            // canonically ordered text reduces to checking the previous
            // character only.
            bool adjacent = static_cast<std::ptrdiff_t>(out.size()) - 1 == last_starter;
            if ((adjacent || prev_cc < cc) && !is_escape(ch)) {
                char32_t combined;
                if (compose_pair(out[last_starter], ch, &combined)) {
                    out[last_starter] = combined;
                    continue;
                }
            }
        }
        if (cc == 0) last_starter = static_cast<std::ptrdiff_t>(out.size());
        prev_cc = cc;
        out.push_back(ch);
    }
    return out;
}

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

} // namespace

std::vector<char32_t> decode_utf8(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    const auto* bytes = reinterpret_cast<const unsigned char*>(text.data());
    auto escape_one = [&] { out.push_back(kEscapeBase + (bytes[i] - 0x80)); ++i; };
    while (i < text.size()) {
        unsigned char b0 = bytes[i];
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        }
        std::size_t need;
        char32_t cp;
        unsigned char lo = 0x80, hi = 0xBF; // bounds for the first continuation
        if (b0 >= 0xC2 && b0 <= 0xDF) {
            need = 1;
            cp = b0 & 0x1F;
        } else if (b0 >= 0xE0 && b0 <= 0xEF) {
            need = 2;
            cp = b0 & 0x0F;
            if (b0 == 0xE0) lo = 0xA0;        // reject overlong
            else if (b0 == 0xED) hi = 0x9F;   // reject UTF-16 surrogates
        } else if (b0 >= 0xF0 && b0 <= 0xF4) {
            need = 3;
            cp = b0 & 0x07;
            if (b0 == 0xF0) lo = 0x90;        // reject overlong
            else if (b0 == 0xF4) hi = 0x8F;   // cap at U+10FFFF
        } else {
            escape_one();
            continue;
        }
        if (i + need >= text.size()) { // truncated sequence
            escape_one();
            continue;
        }
        bool ok = bytes[i + 1] >= lo && bytes[i + 1] <= hi;
        for (std::size_t k = 2; ok && k <= need; ++k)
            ok = bytes[i + k] >= 0x80 && bytes[i + k] <= 0xBF;
        if (!ok) {
            escape_one();
            continue;
        }
        for (std::size_t k = 1; k <= need; ++k) cp = (cp << 6) | (bytes[i + k] & 0x3F);
        out.push_back(cp);
        i += need + 1;
    }
    return out;
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t raw : cps) {
        char32_t cp = raw;
        if (is_escape(cp)) {
            out.push_back(static_cast<char>(0x80 + (cp - kEscapeBase)));
            continue;
        }
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

std::vector<char32_t> to_nfc(std::vector<char32_t> cps) {
    std::vector<char32_t> decomposed;
    decomposed.reserve(cps.size());
    for (char32_t cp : cps) decompose_into(cp, decomposed);
    canonical_order(decomposed);
    return compose(decomposed);
}

std::string nfc(std::string_view text) {
    // ASCII never decomposes, reorders, or composes leftward.
    bool ascii = true;
    for (char c : text)
        if (static_cast<unsigned char>(c) >= 0x80) {
            ascii = false;
            break;
        }
    if (ascii) return std::string(text);
    return encode_utf8(to_nfc(decode_utf8(text)));
}

std::string normalize_text(std::string_view text) {
    std::string composed = nfc(text);
    std::string out;
    out.reserve(composed.size());
    bool pending_space = false;
    for (char c : composed) {
        if (is_ascii_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

} // namespace megacurate::unicode

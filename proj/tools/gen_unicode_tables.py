#!/usr/bin/env python3
"""Regenerates src/core/unicode_tables.inc from Python's unicodedata.

The tables drive the NFC normalizer in src/core/unicode.cpp:
  - full canonical decompositions (recursively expanded, Hangul excluded —
    Hangul is algorithmic in the C++ code)
  - nonzero canonical combining classes
  - primary composite pairs (composition exclusions filtered by the
    NFC(NFD(c)) == c round-trip test)

Usage: python3 tools/gen_unicode_tables.py > src/core/unicode_tables.inc
"""

import sys
import unicodedata

S_BASE, L_BASE, V_BASE, T_BASE = 0xAC00, 0x1100, 0x1161, 0x11A7
S_COUNT = 11172


def is_hangul_syllable(cp: int) -> bool:
    return S_BASE <= cp < S_BASE + S_COUNT


def canonical_decomposition(cp: int):
    """One canonical decomposition step, or None; compatibility mappings skipped."""
    raw = unicodedata.decomposition(chr(cp))
    if not raw or raw.startswith("<"):
        return None
    return [int(f, 16) for f in raw.split()]


def full_decomposition(cp: int):
    step = canonical_decomposition(cp)
    if step is None:
        return None
    out = []
    stack = list(reversed(step))
    while stack:
        c = stack.pop()
        sub = None if is_hangul_syllable(c) else canonical_decomposition(c)
        if sub is None:
            out.append(c)
        else:
            stack.extend(reversed(sub))
    return out


def main() -> None:
    max_cp = 0x110000

    decomp_index = []   # (cp, offset, length)
    decomp_data = []
    for cp in range(max_cp):
        if is_hangul_syllable(cp):
            continue
        full = full_decomposition(cp)
        if full is None:
            continue
        decomp_index.append((cp, len(decomp_data), len(full)))
        decomp_data.extend(full)

    ccc = [(cp, unicodedata.combining(chr(cp)))
           for cp in range(max_cp) if unicodedata.combining(chr(cp)) != 0]

    # A pair (a, b) composes to c iff c canonically decomposes to exactly
    # [a, b] in one step and NFC maps the decomposition back to c (this
    # round-trip drops the composition-exclusion cases).
    pairs = []
    for cp in range(max_cp):
        if is_hangul_syllable(cp):
            continue
        step = canonical_decomposition(cp)
        if step is None or len(step) != 2:
            continue
        a, b = step
        if unicodedata.normalize("NFC", chr(a) + chr(b)) == chr(cp):
            pairs.append((a, b, cp))
    pairs.sort()

    w = sys.stdout.write
    w("// Generated by tools/gen_unicode_tables.py (UCD %s). Do not edit.\n\n"
      % unicodedata.unidata_version)

    w("struct DecompEntry { char32_t cp; uint32_t offset; uint32_t length; };\n")
    w("static const DecompEntry kDecompIndex[] = {\n")
    for cp, off, ln in decomp_index:
        w("  {0x%X, %d, %d},\n" % (cp, off, ln))
    w("};\n\n")

    w("static const char32_t kDecompData[] = {\n")
    for i in range(0, len(decomp_data), 12):
        w("  " + ", ".join("0x%X" % c for c in decomp_data[i:i + 12]) + ",\n")
    w("};\n\n")

    w("struct CccEntry { char32_t cp; uint8_t ccc; };\n")
    w("static const CccEntry kCccTable[] = {\n")
    for cp, k in ccc:
        w("  {0x%X, %d},\n" % (cp, k))
    w("};\n\n")

    w("struct CompEntry { char32_t first; char32_t second; char32_t composed; };\n")
    w("static const CompEntry kCompTable[] = {\n")
    for a, b, c in pairs:
        w("  {0x%X, 0x%X, 0x%X},\n" % (a, b, c))
    w("};\n")


if __name__ == "__main__":
    main()

#include "megacurate/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "megacurate/kernels.hpp"

namespace megacurate {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'S', 'E'};
constexpr u32 kFlagNormalized = 1u;

void put_u32(std::ofstream& out, u32 v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

u32 get_u32(std::ifstream& in, const std::filesystem::path& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw IoError("truncated embedding file: " + path.string());
    return static_cast<u32>(b[0]) | (static_cast<u32>(b[1]) << 8) |
           (static_cast<u32>(b[2]) << 16) | (static_cast<u32>(b[3]) << 24);
}

} // namespace

void EmbeddingMatrix::validate() const {
    if (data.size() != static_cast<std::size_t>(rows) * dim)
        throw Error("embedding matrix: data length " + std::to_string(data.size()) +
                    " does not match rows*dim = " +
                    std::to_string(static_cast<std::size_t>(rows) * dim));
    if (normalized) {
        for (u32 i = 0; i < rows; ++i) {
            double n = std::sqrt(kernels::squared_norm(row(i), dim));
            if (std::abs(n - 1.0) > 1e-6)
                throw Error("embedding matrix: row " + std::to_string(i) +
                            " marked normalized but has norm " + std::to_string(n));
        }
    }
}

double cosine_similarity(std::span<const float> a, std::span<const float> b,
                         bool both_normalized) {
    if (a.size() != b.size())
        throw Error("cosine: dimension mismatch (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
    if (a.empty()) throw Error("cosine: empty vectors");
    double d = kernels::dot(a.data(), b.data(), a.size());
    if (both_normalized) return d;
    double na = kernels::squared_norm(a.data(), a.size());
    double nb = kernels::squared_norm(b.data(), b.size());
    if (na == 0.0 || nb == 0.0) throw Error("cosine: zero-norm input");
    double c = d / (std::sqrt(na) * std::sqrt(nb));
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
    // Idempotent by construction: a matrix that already carries the
    // normalized flag is returned as-is, byte for byte.
    if (m.normalized) return m;
    EmbeddingMatrix out(m.rows, m.dim, true);
    for (u32 i = 0; i < m.rows; ++i) {
        double n2 = kernels::squared_norm(m.row(i), m.dim);
        if (n2 == 0.0)
            throw Error("l2_normalize: zero row at index " + std::to_string(i));
        float inv = static_cast<float>(1.0 / std::sqrt(n2));
        kernels::scale(m.row(i), inv, out.row(i), m.dim);
    }
    return out;
}

void write_mgse(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    if (m.data.size() != static_cast<std::size_t>(m.rows) * m.dim)
        throw Error("write_mgse: data length does not match rows*dim");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    out.write(kMagic, 4);
    put_u32(out, m.rows);
    put_u32(out, m.dim);
    put_u32(out, m.normalized ? kFlagNormalized : 0u);
    static_assert(std::endian::native == std::endian::little,
                  "embedding sidecar writer assumes little-endian host");
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingMatrix read_mgse(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad embedding file magic: " + path.string());
    EmbeddingMatrix m;
    m.rows = get_u32(in, path);
    m.dim = get_u32(in, path);
    u32 flags = get_u32(in, path);
    m.normalized = (flags & kFlagNormalized) != 0;
    std::size_t count = static_cast<std::size_t>(m.rows) * m.dim;
    m.data.resize(count);
    if (count > 0 &&
        !in.read(reinterpret_cast<char*>(m.data.data()),
                 static_cast<std::streamsize>(count * sizeof(float))))
        throw IoError("truncated embedding file: " + path.string());
    // Reject trailing garbage so a concatenated or corrupt file is caught.
    char extra;
    if (in.read(&extra, 1))
        throw IoError("trailing bytes after embedding data: " + path.string());
    return m;
}

} // namespace megacurate

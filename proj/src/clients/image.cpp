#include "megacurate/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

namespace megacurate {

void write_ppm(const std::filesystem::path& path, const PpmImage& img) {
    if (img.pixels.size() != static_cast<std::size_t>(3) * img.width * img.height)
        throw IoError("ppm: pixel buffer does not match " + std::to_string(img.width) + "x" +
                      std::to_string(img.height));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("ppm: cannot open " + path.string() + " for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("ppm: write failed for " + path.string());
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    for (;;) {
        int c = in.get();
        if (c == EOF) throw IoError("ppm: truncated header");
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
            continue;
        }
        if (std::isspace(c)) {
            if (tok.empty()) continue;
            return tok;
        }
        tok.push_back(static_cast<char>(c));
    }
}

u32 parse_dim(const std::string& tok, const char* what) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(tok, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != tok.size() || v == 0 || v > 1u << 20)
        throw IoError(std::string("ppm: bad ") + what + " '" + tok + "'");
    return static_cast<u32>(v);
}

} // namespace

PpmImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("ppm: cannot open " + path.string());
    if (next_token(in) != "P6") throw IoError("ppm: not a P6 file: " + path.string());
    PpmImage img;
    img.width = parse_dim(next_token(in), "width");
    img.height = parse_dim(next_token(in), "height");
    if (next_token(in) != "255") throw IoError("ppm: only maxval 255 is supported");
    std::size_t need = static_cast<std::size_t>(3) * img.width * img.height;
    img.pixels.resize(need);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(need));
    if (static_cast<std::size_t>(in.gcount()) != need)
        throw IoError("ppm: truncated pixel data in " + path.string());
    return img;
}

} // namespace megacurate

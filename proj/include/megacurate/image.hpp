#pragma once

#include <filesystem>
#include <vector>

#include "megacurate/common.hpp"

namespace megacurate {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct PpmImage {
    u32 width = 0;
    u32 height = 0;
    std::vector<unsigned char> pixels; // 3 * width * height

    bool operator==(const PpmImage&) const = default;
};

// Binary PPM (P6, maxval 255). Throws IoError on malformed files or size
// mismatches.
void write_ppm(const std::filesystem::path& path, const PpmImage& img);
PpmImage read_ppm(const std::filesystem::path& path);

} // namespace megacurate

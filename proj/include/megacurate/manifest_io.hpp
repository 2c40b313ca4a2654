#pragma once

#include <filesystem>

#include "megacurate/record.hpp"

namespace megacurate {

// Manifest file format: UTF-8 JSONL. Line 1 is a header object
// {schema_version, stage, count}; each following line is one record with
// keys in fixed order, sorted ascending by id.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

} // namespace megacurate

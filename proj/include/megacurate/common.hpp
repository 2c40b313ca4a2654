#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace megacurate {

using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;

// Base class for everything this library throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid user-supplied configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// A pipeline stage failed mid-run (CLI exit code 3).
class StageError : public Error {
public:
    explicit StageError(const std::string& what) : Error(what) {}
};

// On-disk artifact does not match its recorded hash (CLI exit code 4).
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace megacurate

#pragma once

#include <functional>
#include <string>

namespace megacurate {

// Warnings go to stderr by default. Never fatal; anything fatal throws.
void log_warn(const std::string& msg);

// Replaces the warning sink (tests capture warnings this way); an empty
// function restores stderr.
void set_warn_sink(std::function<void(const std::string&)> sink);

} // namespace megacurate

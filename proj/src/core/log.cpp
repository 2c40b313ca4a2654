#include "megacurate/log.hpp"

#include <iostream>
#include <mutex>

namespace megacurate {

namespace {
std::mutex g_mutex;
std::function<void(const std::string&)> g_sink;
} // namespace

void log_warn(const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_mutex);
    if (g_sink)
        g_sink(msg);
    else
        std::cerr << "warning: " << msg << "\n";
}

void set_warn_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard<std::mutex> lock(g_mutex);
    g_sink = std::move(sink);
}

} // namespace megacurate

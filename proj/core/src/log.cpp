#include "voxfuse/log.hpp"

#include <atomic>
#include <cstdio>

#include "voxfuse/error.hpp"

namespace voxfuse::log {

namespace {
std::atomic<Level> g_level{Level::warn};

const char* tag(Level level) {
    switch (level) {
        case Level::error: return "error";
        case Level::warn: return "warn";
        case Level::info: return "info";
        case Level::debug: return "debug";
    }
    return "?";
}
} // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

Level parse_level(const std::string& name) {
    if (name == "error") return Level::error;
    if (name == "warn") return Level::warn;
    if (name == "info") return Level::info;
    if (name == "debug") return Level::debug;
    fail(ErrorCode::invalid_argument, "unknown log level '" + name + "'");
}

void write(Level level, const std::string& message) {
    if (level > g_level.load()) return;
    std::fprintf(stderr, "[%s] %s\n", tag(level), message.c_str());
}

} // namespace voxfuse::log

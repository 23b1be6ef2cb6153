#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace photonstat {

#ifndef PHOTONSTAT_VERSION
#define PHOTONSTAT_VERSION "0.1.0"
#endif

inline const char* version() { return PHOTONSTAT_VERSION; }

/// Invalid arguments or preconditions violated by the caller.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Bad configuration document (unknown keys, invalid values).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem / stream failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input files (bad magic, missing header, wrong columns).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Optional sink for non-fatal diagnostics. Pass nullptr to ignore.
using WarningSink = std::vector<std::string>;

inline void warn(WarningSink* sink, const std::string& message) {
    if (sink) sink->push_back(message);
}

/// FNV-1a 64-bit hash, used to stamp outputs with a config fingerprint.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace photonstat

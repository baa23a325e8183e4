#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace keyetm {

inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 1469598103934665603ULL) {
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t vocab_digest(const std::vector<std::string>& terms) {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& t : terms) {
        h = fnv1a64(t, h);
        h = fnv1a64("\n", h);
    }
    return h;
}

std::string hex_digest(uint64_t h);
uint64_t file_digest(const std::string& path);  // throws InputError if unreadable

}  // namespace keyetm

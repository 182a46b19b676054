#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace semcom {

// FNV-1a, used for vocabulary/kb/checkpoint fingerprints.
inline uint64_t fnv1a(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

// Mixes an arbitrary list of stream labels into one 64-bit seed so that
// independent random streams (init, shuffle, per-sentence noise, ...) never
// collide or depend on call order.
inline uint64_t mix_seed(uint64_t seed, std::initializer_list<uint64_t> labels) {
    uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
    for (uint64_t v : labels) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
    }
    return h;
}

inline std::mt19937_64 make_rng(uint64_t seed, std::initializer_list<uint64_t> labels) {
    return std::mt19937_64(mix_seed(seed, labels));
}

inline uint64_t label(std::string_view name) { return fnv1a(name); }

// Fixed-format float for CSV/manifest output; identical bytes across runs.
std::string format_fixed(double v, int decimals = 6);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace semcom

#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace dstreamon {

// splitmix64; used to derive per-row/per-hash seeds from a program seed.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// 64-bit multiply-shift style hash over arbitrary bytes, seeded.
// Murmur-style finalizer keeps the bits well mixed for short keys.
inline uint64_t hash64(std::string_view key, uint64_t seed) {
    const uint64_t m = 0xc6a4a7935bd1e995ULL;
    uint64_t h = seed ^ (key.size() * m);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(key.data());
    size_t n = key.size();
    while (n >= 8) {
        uint64_t k;
        std::memcpy(&k, p, 8);
        k *= m;
        k ^= k >> 47;
        k *= m;
        h ^= k;
        h *= m;
        p += 8;
        n -= 8;
    }
    uint64_t tail = 0;
    for (size_t i = 0; i < n; ++i) tail |= static_cast<uint64_t>(p[i]) << (8 * i);
    if (n > 0) {
        h ^= tail;
        h *= m;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ULL;
    h ^= h >> 33;
    return h;
}

// Base hash pair for double hashing: position_i = h1 + i * h2.
struct HashPair {
    uint64_t h1;
    uint64_t h2;
};

inline HashPair base_hash(std::string_view key, uint64_t seed) {
    uint64_t a = hash64(key, splitmix64(seed));
    uint64_t b = hash64(key, splitmix64(seed ^ 0xa5a5a5a5a5a5a5a5ULL));
    return {a, b | 1};  // odd h2 so probe sequences never degenerate
}

}  // namespace dstreamon

#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sensel/errors.hpp"

namespace sensel {

inline constexpr int kMaxSensors = 64;

// Enumeration limits for the exact routines.
inline constexpr int kMaxExhaustive = 30;
inline constexpr int kMaxExactGibbs = 22;
inline constexpr int kMaxExactTpm = 12;

constexpr std::uint64_t full_mask(int n)
{
    return n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
}

/// Activation vector over N sensors stored as a bitmask; bit k set means sensor k is active.
class Configuration {
public:
    Configuration() = default;

    explicit Configuration(int n, std::uint64_t bits = 0) : bits_(bits), n_(n)
    {
        if (n < 1 || n > kMaxSensors) {
            throw SpecError("configuration size must be in [1, 64], got " + std::to_string(n));
        }
        if ((bits & ~full_mask(n)) != 0) {
            throw SpecError("configuration bits set beyond sensor count " + std::to_string(n));
        }
    }

    static Configuration empty(int n) { return Configuration(n, 0); }
    static Configuration full(int n) { return Configuration(n, full_mask(n)); }

    static Configuration from_indices(int n, std::span<const int> active)
    {
        std::uint64_t bits = 0;
        for (int j : active) {
            if (j < 0 || j >= n) {
                throw SpecError("sensor index " + std::to_string(j) + " out of range");
            }
            bits |= std::uint64_t{1} << j;
        }
        return Configuration(n, bits);
    }

    int size() const { return n_; }
    std::uint64_t bits() const { return bits_; }
    int count() const { return std::popcount(bits_); }

    bool test(int j) const { return ((bits_ >> j) & 1u) != 0; }

    void set(int j, bool on)
    {
        const std::uint64_t m = std::uint64_t{1} << j;
        bits_ = on ? (bits_ | m) : (bits_ & ~m);
    }

    Configuration with(int j, bool on) const
    {
        Configuration c = *this;
        c.set(j, on);
        return c;
    }

    Configuration flipped(int j) const
    {
        Configuration c = *this;
        c.bits_ ^= std::uint64_t{1} << j;
        return c;
    }

    bool subset_of(const Configuration& other) const { return (bits_ & ~other.bits_) == 0; }

    std::vector<int> active() const
    {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(count()));
        for (int j = 0; j < n_; ++j) {
            if (test(j)) out.push_back(j);
        }
        return out;
    }

    std::vector<int> inactive() const
    {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(n_ - count()));
        for (int j = 0; j < n_; ++j) {
            if (!test(j)) out.push_back(j);
        }
        return out;
    }

    /// Lowercase hex without prefix, e.g. "1a".
    std::string to_hex() const
    {
        char buf[17];
        auto res = std::to_chars(buf, buf + sizeof(buf), bits_, 16);
        return std::string(buf, res.ptr);
    }

    static Configuration from_hex(std::string_view hex, int n)
    {
        if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
        std::uint64_t bits = 0;
        auto res = std::from_chars(hex.data(), hex.data() + hex.size(), bits, 16);
        if (hex.empty() || res.ec != std::errc{} || res.ptr != hex.data() + hex.size()) {
            throw SpecError("invalid hex bitmask '" + std::string(hex) + "'");
        }
        return Configuration(n, bits);
    }

    friend bool operator==(const Configuration&, const Configuration&) = default;

private:
    std::uint64_t bits_ = 0;
    int n_ = 0;
};

inline int hamming_distance(const Configuration& a, const Configuration& b)
{
    return std::popcount(a.bits() ^ b.bits());
}

} // namespace sensel

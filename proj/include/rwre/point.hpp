#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>

namespace rwre {

/// Largest lattice dimension supported by the library.
inline constexpr int kMaxDim = 4;

/// A point of Z^d, d <= kMaxDim. Coordinates beyond the active dimension
/// are kept at zero so that equality and hashing ignore the dimension.
struct Point {
    std::array<int, kMaxDim> c{};

    constexpr int& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    constexpr int operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

    friend constexpr bool operator==(const Point&, const Point&) = default;

    constexpr Point& operator+=(const Point& o) {
        for (int i = 0; i < kMaxDim; ++i) (*this)[i] += o[i];
        return *this;
    }
    constexpr Point& operator-=(const Point& o) {
        for (int i = 0; i < kMaxDim; ++i) (*this)[i] -= o[i];
        return *this;
    }
    friend constexpr Point operator+(Point a, const Point& b) { return a += b; }
    friend constexpr Point operator-(Point a, const Point& b) { return a -= b; }
    friend constexpr Point operator-(Point a) {
        for (int i = 0; i < kMaxDim; ++i) a[i] = -a[i];
        return a;
    }
    friend constexpr Point operator*(int s, Point a) {
        for (int i = 0; i < kMaxDim; ++i) a[i] *= s;
        return a;
    }
};

constexpr Point origin() { return Point{}; }

/// Canonical basis vector e_i (0-based index).
constexpr Point unit(int i, int sign = 1) {
    Point p;
    p[i] = sign;
    return p;
}

constexpr Point make_point(int x0, int x1 = 0, int x2 = 0, int x3 = 0) {
    return Point{{x0, x1, x2, x3}};
}

constexpr long long norm_sq(const Point& p) {
    long long s = 0;
    for (int i = 0; i < kMaxDim; ++i) s += static_cast<long long>(p[i]) * p[i];
    return s;
}

inline double norm(const Point& p) { return std::sqrt(static_cast<double>(norm_sq(p))); }

inline std::ostream& operator<<(std::ostream& os, const Point& p) {
    os << '(' << p[0];
    for (int i = 1; i < kMaxDim; ++i) os << ',' << p[i];
    return os << ')';
}

struct PointHash {
    std::size_t operator()(const Point& p) const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (int i = 0; i < kMaxDim; ++i) {
            h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(p[i])) + 0x9e3779b97f4a7c15ULL +
                 (h << 6) + (h >> 2);
        }
        return static_cast<std::size_t>(h);
    }
};

}  // namespace rwre

#pragma once

#include <algorithm>
#include <compare>
#include <cstdio>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace qsdlab {

using Count = std::int64_t;

/// Population vector of a d-type process. A state is absorbed iff some
/// coordinate equals zero (extinction of at least one type).
template <class T>
struct BasicState {
    std::vector<T> coords;

    BasicState() = default;
    explicit BasicState(std::vector<T> c) : coords(std::move(c)) {}
    BasicState(std::initializer_list<T> c) : coords(c) {}

    std::size_t dimension() const noexcept { return coords.size(); }
    T operator[](std::size_t i) const { return coords[i]; }
    T& operator[](std::size_t i) { return coords[i]; }
    std::span<const T> view() const noexcept { return coords; }

    bool absorbed() const noexcept {
        return std::any_of(coords.begin(), coords.end(), [](T v) { return v == T{0}; });
    }

    auto operator<=>(const BasicState&) const = default;
    bool operator==(const BasicState&) const = default;
};

using DiscreteState = BasicState<Count>;
using ContinuousState = BasicState<double>;

/// |n| = n_1 + ... + n_d.
inline Count total(const DiscreteState& n) noexcept {
    Count s = 0;
    for (Count v : n.coords) s += v;
    return s;
}

template <class T>
std::string to_string(const BasicState<T>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.coords.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_integral_v<T>) {
            out += std::to_string(s.coords[i]);
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6g", s.coords[i]);
            out += buf;
        }
    }
    return out + ")";
}

template <class T>
std::vector<double> as_doubles(const BasicState<T>& s) {
    return std::vector<double>(s.coords.begin(), s.coords.end());
}

} // namespace qsdlab

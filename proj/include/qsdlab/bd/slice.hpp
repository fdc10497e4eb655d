#pragma once

#include "qsdlab/core/error.hpp"
#include "qsdlab/core/parallel.hpp"
#include "qsdlab/core/state.hpp"

#include <cmath>
#include <vector>

namespace qsdlab::bd {

/// Number of states in {n in N^d : |n| = k} (compositions of k into d
/// positive parts), C(k-1, d-1), as a double so huge slices do not overflow.
inline double slice_size(std::size_t d, Count k) {
    if (d == 0 || k < static_cast<Count>(d)) return 0.0;
    const double n = static_cast<double>(k - 1);
    const double r = static_cast<double>(d - 1);
    return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0)));
}

namespace detail {

template <class Visit>
void compositions_from(DiscreteState& n, std::size_t pos, Count remaining, Visit& visit) {
    const std::size_t d = n.dimension();
    if (pos + 1 == d) {
        n[pos] = remaining;
        visit(static_cast<const DiscreteState&>(n));
        return;
    }
    const Count slots_after = static_cast<Count>(d - 1 - pos);
    for (Count v = 1; v <= remaining - slots_after; ++v) {
        n[pos] = v;
        compositions_from(n, pos + 1, remaining - v, visit);
    }
}

} // namespace detail

/// Visits every n in N^d with |n| = k and n_0 = first, in lexicographic order.
template <class Visit>
void for_each_in_slice_with_first(std::size_t d, Count k, Count first, Visit&& visit) {
    if (first < 1 || k - first < static_cast<Count>(d - 1)) return;
    DiscreteState n(std::vector<Count>(d, 1));
    n[0] = first;
    if (d == 1) {
        if (first == k) visit(static_cast<const DiscreteState&>(n));
        return;
    }
    detail::compositions_from(n, 1, k - first, visit);
}

/// Visits every n in N^d with |n| = k, in lexicographic order.
template <class Visit>
void for_each_in_slice(std::size_t d, Count k, Visit&& visit) {
    for (Count first = 1; first <= k - static_cast<Count>(d - 1); ++first) {
        for_each_in_slice_with_first(d, k, first, visit);
    }
}

/// Folds map(n) over the slice |n| = k with `combine`. The slice is split by
/// first coordinate; each part folds with its own copy of `map` (so the
/// functor may carry scratch buffers) and the partial results are combined
/// in order, which makes serial and parallel results identical.
template <class T, class Map, class Combine>
T slice_reduce(std::size_t d, Count k, ExecPolicy policy, T identity, const Map& map, const Combine& combine) {
    const Count parts = k - static_cast<Count>(d - 1);
    if (parts < 1) return identity;
    std::vector<T> partial(static_cast<std::size_t>(parts), identity);
    parallel_for(policy, parts, [&](std::int64_t p) {
        Map local = map;
        T acc = identity;
        for_each_in_slice_with_first(d, k, static_cast<Count>(p) + 1, [&](const DiscreteState& n) {
            acc = combine(acc, local(n));
        });
        partial[static_cast<std::size_t>(p)] = acc;
    });
    T out = identity;
    for (const T& v : partial) out = combine(out, v);
    return out;
}

/// Like slice_reduce but with a stateful accumulator: each part of the slice
/// gets a copy of `prototype`, calls acc.visit(n) for its states, and the
/// parts are merged in order with acc.merge(other). Accumulators that keep
/// the first strict optimum therefore give the same answer serially and in
/// parallel.
template <class Acc>
Acc slice_accumulate(std::size_t d, Count k, ExecPolicy policy, const Acc& prototype) {
    const Count parts = k - static_cast<Count>(d - 1);
    if (parts < 1) return prototype;
    std::vector<Acc> partial(static_cast<std::size_t>(parts), prototype);
    parallel_for(policy, parts, [&](std::int64_t p) {
        Acc& acc = partial[static_cast<std::size_t>(p)];
        for_each_in_slice_with_first(d, k, static_cast<Count>(p) + 1, [&](const DiscreteState& n) { acc.visit(n); });
    });
    Acc out = prototype;
    for (const Acc& a : partial) out.merge(a);
    return out;
}

} // namespace qsdlab::bd
